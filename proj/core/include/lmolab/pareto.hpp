#pragma once

#include <map>
#include <string>
#include <vector>

#include "lmolab/records.hpp"

namespace lmolab::pareto {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct ParetoConfig {
  double c = 0.001;
  /// Accuracy mode: larger is better on both axes.
  bool higher_is_better = false;
};

struct ParetoResult {
  std::vector<std::size_t> stage1;
  std::vector<std::size_t> selected;
  bool fallback = false;
};

/// Two-stage frontier of one algorithm's points. Stage 1 is the classical
/// non-dominated set. Stage 2 keeps i when, against every other point j,
/// x_i <= x_j - c or y_i <= y_j - c. An empty stage 2 falls back to the
/// stage-1 point with the smallest x (then y). Indices refer to `points`.
ParetoResult pareto_frontier(const std::vector<Point>& points, const ParetoConfig& cfg = {});

/// Groups by algo (x = forget_metric, y = learn_metric). Diverged rows and
/// rows with non-finite metrics are skipped. Indices refer to `table`.
std::map<std::string, ParetoResult> pareto_by_algorithm(const std::vector<records::RunRecord>& table,
                                                        const ParetoConfig& cfg = {});

}  // namespace lmolab::pareto

#include "lmolab/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmolab/error.hpp"

namespace lmolab::pareto {

ParetoResult pareto_frontier(const std::vector<Point>& input, const ParetoConfig& cfg) {
  require(cfg.c >= 0.0, ErrorKind::kInvalidParameter, "pareto c must be >= 0");
  ParetoResult res;
  if (input.empty()) return res;
  std::vector<Point> pts = input;
  if (cfg.higher_is_better)
    for (auto& p : pts) p = {-p.x, -p.y};

  // Stage 1: sweep by x; a group of equal x survives only through its
  // minimal-y members, and only if they beat every smaller-x point on y.
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pts[a].x != pts[b].x ? pts[a].x < pts[b].x : pts[a].y < pts[b].y;
  });
  double best_y = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < order.size();) {
    std::size_t end = g;
    while (end < order.size() && pts[order[end]].x == pts[order[g]].x) ++end;
    const double group_min = pts[order[g]].y;
    if (group_min < best_y) {
      for (std::size_t k = g; k < end && pts[order[k]].y == group_min; ++k) res.stage1.push_back(order[k]);
      best_y = group_min;
    }
    g = end;
  }
  std::sort(res.stage1.begin(), res.stage1.end());

  for (std::size_t i : res.stage1) {
    bool keep = true;
    for (std::size_t j = 0; j < pts.size() && keep; ++j) {
      if (j == i) continue;
      keep = pts[i].x <= pts[j].x - cfg.c || pts[i].y <= pts[j].y - cfg.c;
    }
    if (keep) res.selected.push_back(i);
  }
  if (res.selected.empty()) {
    res.fallback = true;
    res.selected.push_back(*std::min_element(res.stage1.begin(), res.stage1.end(), [&](std::size_t a, std::size_t b) {
      return pts[a].x != pts[b].x ? pts[a].x < pts[b].x : pts[a].y < pts[b].y;
    }));
  }
  return res;
}

std::map<std::string, ParetoResult> pareto_by_algorithm(const std::vector<records::RunRecord>& table,
                                                        const ParetoConfig& cfg) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& r = table[i];
    if (r.diverged || !std::isfinite(r.forget_metric) || !std::isfinite(r.learn_metric)) continue;
    groups[r.algo].push_back(i);
  }
  std::map<std::string, ParetoResult> out;
  for (const auto& [algo, idx] : groups) {
    std::vector<Point> pts;
    for (std::size_t i : idx) pts.push_back({table[i].forget_metric, table[i].learn_metric});
    ParetoResult local = pareto_frontier(pts, cfg);
    ParetoResult mapped;
    mapped.fallback = local.fallback;
    for (std::size_t k : local.stage1) mapped.stage1.push_back(idx[k]);
    for (std::size_t k : local.selected) mapped.selected.push_back(idx[k]);
    out.emplace(algo, std::move(mapped));
  }
  return out;
}

}  // namespace lmolab::pareto

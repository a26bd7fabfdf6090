#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lmolab::records {

/// One (algorithm, lr, step, seed) measurement. forget_metric is the
/// pretraining-corpus validation loss, learn_metric the SFT-corpus one.
struct RunRecord {
  std::string algo;
  std::string rule_alpha;
  std::string rule_beta;
  double lr = 0.0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  double forget_metric = 0.0;
  double learn_metric = 0.0;
  bool diverged = false;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr const char* kCsvHeader =
    "algo,rule_alpha,rule_beta,lr,step,seed,forget_metric,learn_metric,diverged";

/// Shortest decimal that parses back to the same double; "inf", "-inf", "nan".
std::string format_double(double v);
double parse_double(const std::string& s);

void write_records(std::ostream& os, const std::vector<RunRecord>& table);
std::vector<RunRecord> read_records(std::istream& is);

void export_records(const std::vector<RunRecord>& table, const std::filesystem::path& path);
std::vector<RunRecord> import_records(const std::filesystem::path& path);

}  // namespace lmolab::records

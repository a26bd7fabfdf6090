#include "lmolab/records.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lmolab/error.hpp"

namespace lmolab::records {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::kInvalidInput, "bad integer '" + s + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::kInvalidInput, "bad number '" + s + "'");
  return v;
}

void write_records(std::ostream& os, const std::vector<RunRecord>& table) {
  os << kCsvHeader << '\n';
  for (const auto& r : table) {
    os << r.algo << ',' << r.rule_alpha << ',' << r.rule_beta << ',' << format_double(r.lr) << ',' << r.step << ','
       << r.seed << ',' << format_double(r.forget_metric) << ',' << format_double(r.learn_metric) << ','
       << (r.diverged ? "true" : "false") << '\n';
  }
}

std::vector<RunRecord> read_records(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kCsvHeader, ErrorKind::kInvalidInput,
          "records CSV has an unexpected header");
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    require(f.size() == 9, ErrorKind::kInvalidInput, "records CSV line " + std::to_string(lineno) + " has " +
                                                         std::to_string(f.size()) + " fields");
    RunRecord r;
    r.algo = f[0];
    r.rule_alpha = f[1];
    r.rule_beta = f[2];
    r.lr = parse_double(f[3]);
    r.step = parse_u64(f[4]);
    r.seed = parse_u64(f[5]);
    r.forget_metric = parse_double(f[6]);
    r.learn_metric = parse_double(f[7]);
    require(f[8] == "true" || f[8] == "false", ErrorKind::kInvalidInput, "bad diverged flag '" + f[8] + "'");
    r.diverged = f[8] == "true";
    out.push_back(std::move(r));
  }
  return out;
}

void export_records(const std::vector<RunRecord>& table, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_records(os, table);
  os.flush();
  require(static_cast<bool>(os), ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<RunRecord> import_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::kIo, "cannot open " + path.string());
  return read_records(is);
}

}  // namespace lmolab::records

#include "lmolab/norms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>

#include "lmolab/error.hpp"
#include "lmolab/random.hpp"

namespace lmolab::norms {

namespace {

constexpr std::array<NormPair, 5> kSupported = {kL1L1, kL1L2, kL1Linf, kSpectral, kLinfLinf};

double inv(double p) { return std::isinf(p) ? 0.0 : 1.0 / p; }

std::vector<double> column(const Matrix& a, std::size_t j) {
  std::vector<double> c(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) c[i] = a(i, j);
  return c;
}

void record(InequalityReport& rep, double lhs, double rhs, double slack, const std::string& label) {
  ++rep.checks;
  const double margin = rhs - lhs;
  if (margin < rep.worst_slack) {
    rep.worst_slack = margin;
    rep.worst_case = label;
  }
  if (lhs > rhs + slack * std::max(1.0, std::abs(rhs))) ++rep.violations;
}

void merge(InequalityReport& into, const InequalityReport& from) {
  into.checks += from.checks;
  into.violations += from.violations;
  if (from.worst_slack < into.worst_slack) {
    into.worst_slack = from.worst_slack;
    into.worst_case = from.worst_case;
  }
}

}  // namespace

std::span<const NormPair> supported_pairs() { return kSupported; }

bool is_supported(NormPair p) {
  return std::find(kSupported.begin(), kSupported.end(), p) != kSupported.end();
}

void validate(NormPair p) {
  require(p.alpha >= 1.0 && p.beta >= 1.0, ErrorKind::kInvalidParameter,
          "norm indices must lie in [1, inf]");
}

std::string index_label(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os << p;
  return os.str();
}

std::string to_string(NormPair p) { return "(" + index_label(p.alpha) + "," + index_label(p.beta) + ")"; }

double induced_norm(const Matrix& a, NormPair p) {
  validate(p);
  require(is_supported(p), ErrorKind::kUnsupportedNorm, "no closed form for " + to_string(p));
  if (p.alpha == 1.0) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) best = std::max(best, vector_norm(column(a, j), p.beta));
    return best;
  }
  if (p == kSpectral) {
    if (a.is_zero()) return 0.0;
    return singular_values(a, "induced_norm")[0];
  }
  // (inf, inf): max absolute row sum.
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) best = std::max(best, vector_norm(a.row(i), 1.0));
  return best;
}

double induced_norm_oracle(const Matrix& a, NormPair p) {
  validate(p);
  const std::size_t n = a.cols();
  if (p.alpha == 1.0) {
    // Extreme points of the l1 ball are +-e_j; the sign does not change the norm.
    double best = 0.0;
    Vector e(n);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = 1.0;
      best = std::max(best, vector_norm(matvec(a, e), p.beta));
      e[j] = 0.0;
    }
    return best;
  }
  if (std::isinf(p.alpha)) {
    require(n <= kSignOracleMaxCols, ErrorKind::kOracleTooLarge,
            "sign-vector oracle limited to " + std::to_string(kSignOracleMaxCols) + " columns");
    // x and -x give the same norm, so fix the last sign to +1.
    const std::uint64_t count = std::uint64_t{1} << (n - 1);
    double best = 0.0;
    Vector x(n);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      for (std::size_t j = 0; j < n; ++j) x[j] = ((mask >> j) & 1U) ? -1.0 : 1.0;
      best = std::max(best, vector_norm(matvec(a, x), p.beta));
    }
    return best;
  }
  if (p.alpha == 2.0 && p.beta == 2.0) {
    if (a.is_zero()) return 0.0;
    return singular_values(a, "induced_norm_oracle")[0];
  }
  fail(ErrorKind::kUnsupportedNorm, "oracle has no enumeration for " + to_string(p));
}

double stable_rank(const Vector& s) {
  require(s.dim() > 0 && s[0] > 0.0, ErrorKind::kDegenerateInput, "stable_rank: zero spectrum");
  double sum = 0.0;
  for (double v : s.values()) sum += v * v;
  return sum / (s[0] * s[0]);
}

double singular_sparsity(const Vector& s) {
  require(s.dim() > 0 && s[0] > 0.0, ErrorKind::kDegenerateInput, "singular_sparsity: zero spectrum");
  double l1 = 0.0, l2sq = 0.0;
  for (double v : s.values()) {
    l1 += v;
    l2sq += v * v;
  }
  return l1 / std::sqrt(static_cast<double>(s.dim()) * l2sq);
}

double stable_rank(const Matrix& a) {
  require(!a.is_zero(), ErrorKind::kDegenerateInput, "stable_rank: zero matrix");
  return stable_rank(singular_values(a, "stable_rank"));
}

double singular_sparsity(const Matrix& a) {
  require(!a.is_zero(), ErrorKind::kDegenerateInput, "singular_sparsity: zero matrix");
  return singular_sparsity(singular_values(a, "singular_sparsity"));
}

double activation_sparsity(std::span<const double> x) {
  require(!x.empty(), ErrorKind::kDegenerateInput, "activation_sparsity: empty vector");
  const double l2 = vector_norm(x, 2.0);
  require(l2 > 0.0, ErrorKind::kDegenerateInput, "activation_sparsity: zero vector");
  return vector_norm(x, 1.0) / (std::sqrt(static_cast<double>(x.size())) * l2);
}

SpectrumReport spectrum_report(const std::string& layer_name, const Matrix& w) {
  const Vector s = singular_values(w, layer_name);
  return SpectrumReport{layer_name, stable_rank(s), singular_sparsity(s)};
}

InequalityReport check_vector_norm_inequalities(std::uint64_t seed, std::size_t trials, double slack) {
  constexpr std::array<double, 6> kIndices = {1.0, 1.5, 2.0, 3.0, 4.0, kInf};
  Rng rng(seed, "norms.vector_inequality");
  InequalityReport rep;
  rep.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t d = 1 + rng.index(16);
    std::vector<double> z(d);
    // Mix dense gaussian, sparse and heavy-tailed draws.
    const std::size_t kind = t % 3;
    for (double& v : z) {
      if (kind == 0) v = rng.normal();
      else if (kind == 1) v = rng.bernoulli(0.2) ? rng.normal() : 0.0;
      else v = rng.normal() * std::exp(2.0 * rng.normal());
    }
    if (std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; })) z[0] = 1.0;
    for (std::size_t i = 0; i < kIndices.size(); ++i) {
      for (std::size_t k = i; k < kIndices.size(); ++k) {
        const double a1 = kIndices[i], a2 = kIndices[k];
        const double n1 = vector_norm(z, a1);
        const double n2 = vector_norm(z, a2);
        const double factor = std::pow(static_cast<double>(d), inv(a1) - inv(a2));
        const std::string label = "vector d=" + std::to_string(d) + " a1=" + index_label(a1) +
                                  " a2=" + index_label(a2);
        record(rep, n2, n1, slack, label + " lower");
        record(rep, n1, factor * n2, slack, label + " upper");
      }
    }
  }
  return rep;
}

InequalityReport check_norm_inequalities(const Matrix& a, double slack) {
  constexpr std::array<double, 3> kIdx = {1.0, 2.0, kInf};
  const double m = static_cast<double>(a.rows());
  const double n = static_cast<double>(a.cols());
  std::array<std::array<std::optional<double>, 3>, 3> value;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const NormPair p{kIdx[i], kIdx[k]};
      if (is_supported(p)) {
        value[i][k] = induced_norm(a, p);
      } else if (std::isinf(p.alpha) && a.cols() <= 12) {
        value[i][k] = induced_norm_oracle(a, p);
      }
    }
  }
  InequalityReport rep;
  rep.trials = 1;
  // Same beta, alpha1 < alpha2.
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) {
        if (!value[i][k] || !value[j][k]) continue;
        const double lo = *value[i][k], hi = *value[j][k];
        const double factor = std::pow(n, inv(kIdx[i]) - inv(kIdx[j]));
        const std::string label = "alpha " + to_string({kIdx[i], kIdx[k]}) + " vs " + to_string({kIdx[j], kIdx[k]});
        record(rep, lo, hi, slack, label + " lower");
        record(rep, hi, factor * lo, slack, label + " upper");
      }
    }
  }
  // Same alpha, beta1 < beta2.
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t l = k + 1; l < 3; ++l) {
        if (!value[i][k] || !value[i][l]) continue;
        const double big = *value[i][k], small = *value[i][l];
        const double factor = std::pow(m, inv(kIdx[k]) - inv(kIdx[l]));
        const std::string label = "beta " + to_string({kIdx[i], kIdx[k]}) + " vs " + to_string({kIdx[i], kIdx[l]});
        record(rep, small, big, slack, label + " lower");
        record(rep, big, factor * small, slack, label + " upper");
      }
    }
  }
  return rep;
}

InequalityReport check_norm_inequalities(std::uint64_t seed, std::size_t trials, std::size_t rows,
                                         std::size_t cols, double slack) {
  Rng rng(seed, "norms.matrix_inequality");
  InequalityReport rep;
  rep.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    Matrix a = rng.normal_matrix(rows, cols);
    if (t % 4 == 1) {
      // Sparse draws exercise the regimes where the bounds become tight.
      for (double& v : a.values())
        if (!rng.bernoulli(0.25)) v = 0.0;
      if (a.is_zero()) a(0, 0) = 1.0;
    }
    merge(rep, check_norm_inequalities(a, slack));
  }
  return rep;
}

OracleAgreementReport check_oracle_agreement(std::uint64_t seed, std::size_t matrices, std::size_t max_dim,
                                             double tol) {
  Rng rng(seed, "norms.oracle_agreement");
  OracleAgreementReport rep;
  rep.matrices = matrices;
  for (std::size_t t = 0; t < matrices; ++t) {
    const std::size_t r = 1 + rng.index(max_dim);
    const std::size_t c = 1 + rng.index(max_dim);
    const Matrix a = rng.normal_matrix(r, c);
    for (const NormPair& p : supported_pairs()) {
      const double diff = std::abs(induced_norm(a, p) - induced_norm_oracle(a, p));
      ++rep.comparisons;
      rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
      if (diff > tol) ++rep.mismatches;
    }
  }
  return rep;
}

}  // namespace lmolab::norms

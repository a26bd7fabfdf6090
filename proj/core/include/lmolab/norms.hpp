#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmolab/linalg.hpp"

namespace lmolab::norms {

/// Index pair (alpha, beta) of the induced norm max ||Ax||_beta / ||x||_alpha.
struct NormPair {
  double alpha = 2.0;
  double beta = 2.0;

  friend bool operator==(const NormPair&, const NormPair&) = default;
};

inline constexpr NormPair kL1L1{1.0, 1.0};
inline constexpr NormPair kL1L2{1.0, 2.0};
inline constexpr NormPair kL1Linf{1.0, kInf};
inline constexpr NormPair kSpectral{2.0, 2.0};
inline constexpr NormPair kLinfLinf{kInf, kInf};

/// The five pairs with a closed form, in a fixed order.
std::span<const NormPair> supported_pairs();
bool is_supported(NormPair p);
void validate(NormPair p);
/// "1", "2", "inf" style label for a norm index.
std::string index_label(double p);
std::string to_string(NormPair p);

/// Closed-form induced norm: (1,beta) is the max column beta-norm, (2,2) the
/// largest singular value, (inf,inf) the max absolute row sum.
double induced_norm(const Matrix& a, NormPair p);

/// Exact maximization over the extreme points of the alpha unit ball.
/// alpha = 1 enumerates +-e_j, alpha = inf enumerates all sign vectors
/// (cols <= 20), alpha = 2 only supports beta = 2.
double induced_norm_oracle(const Matrix& a, NormPair p);

inline constexpr std::size_t kSignOracleMaxCols = 20;

double stable_rank(const Matrix& a);
double singular_sparsity(const Matrix& a);
/// Same metrics from an already-computed spectrum (n = s.dim()).
double stable_rank(const Vector& spectrum);
double singular_sparsity(const Vector& spectrum);

/// ||x||_1 / (sqrt(d) ||x||_2); lower means sparser.
double activation_sparsity(std::span<const double> x);
inline double activation_sparsity(const Vector& x) { return activation_sparsity(x.values()); }

struct SpectrumReport {
  std::string layer_name;
  double stable_rank = 0.0;
  double singular_sparsity = 0.0;
};

SpectrumReport spectrum_report(const std::string& layer_name, const Matrix& w);

struct InequalityReport {
  std::size_t trials = 0;
  std::size_t checks = 0;
  std::size_t violations = 0;
  /// Smallest (rhs - lhs) seen over every checked inequality.
  double worst_slack = kInf;
  std::string worst_case;
};

/// Randomized check of the vector norm comparison
/// ||z||_a2 <= ||z||_a1 <= d^(1/a1 - 1/a2) ||z||_a2 for a1 <= a2.
InequalityReport check_vector_norm_inequalities(std::uint64_t seed, std::size_t trials,
                                                double slack = 1e-9);

/// Randomized check of the induced-norm comparisons between pairs that share
/// one index. Pairs outside the closed-form set are evaluated with the sign
/// oracle when the matrix is small enough.
InequalityReport check_norm_inequalities(std::uint64_t seed, std::size_t trials,
                                         std::size_t rows = 4, std::size_t cols = 6,
                                         double slack = 1e-9);

/// Same comparisons on one caller-supplied matrix.
InequalityReport check_norm_inequalities(const Matrix& a, double slack = 1e-9);

struct OracleAgreementReport {
  std::size_t matrices = 0;
  std::size_t comparisons = 0;
  double max_abs_diff = 0.0;
  std::size_t mismatches = 0;
};

/// induced_norm vs induced_norm_oracle on random matrices up to max_dim.
OracleAgreementReport check_oracle_agreement(std::uint64_t seed, std::size_t matrices,
                                             std::size_t max_dim = 5, double tol = 1e-9);

}  // namespace lmolab::norms

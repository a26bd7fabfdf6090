#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "lmolab/error.hpp"
#include "lmolab/norms.hpp"
#include "lmolab/random.hpp"

using namespace lmolab;
using norms::NormPair;

namespace {

const Matrix kA = Matrix::from_rows({{1, -2}, {3, 4}});

const NormPair kSupported[] = {{1, 1}, {1, 2}, {1, kInf}, {2, 2}, {kInf, kInf}};

}  // namespace

TEST(InducedNorm, ClosedFormHandValues) {
  EXPECT_DOUBLE_EQ(norms::induced_norm(kA, {1, kInf}), 4.0);
  EXPECT_DOUBLE_EQ(norms::induced_norm(kA, {kInf, kInf}), 7.0);
  EXPECT_DOUBLE_EQ(norms::induced_norm(kA, {1, 1}), 6.0);
  EXPECT_NEAR(norms::induced_norm(kA, {1, 2}), std::sqrt(20.0), 1e-15);
  EXPECT_NEAR(norms::induced_norm(Matrix::identity(4), {2, 2}), 1.0, 1e-14);
}

TEST(InducedNorm, OracleHandValues) {
  EXPECT_DOUBLE_EQ(norms::induced_norm_oracle(kA, {1, 1}), 6.0);
  EXPECT_NEAR(norms::induced_norm_oracle(kA, {1, 2}), 4.47213595499958, 1e-12);
  EXPECT_DOUBLE_EQ(norms::induced_norm_oracle(kA, {kInf, kInf}), 7.0);
  for (const auto& p : kSupported) {
    EXPECT_EQ(norms::induced_norm(Matrix(3, 2), p), 0.0);
    EXPECT_EQ(norms::induced_norm_oracle(Matrix(3, 2), p), 0.0);
  }
}

TEST(InducedNorm, UnsupportedPairs) {
  try {
    norms::induced_norm(kA, {kInf, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedNorm);
  }
  EXPECT_FALSE(norms::is_supported({2, 1}));
  EXPECT_TRUE(norms::is_supported({1, 2}));
  EXPECT_EQ(norms::supported_pairs().size(), 5u);
}

TEST(InducedNorm, OracleSizeCap) {
  try {
    norms::induced_norm_oracle(Matrix(2, norms::kSignOracleMaxCols + 1, 1.0), {kInf, kInf});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOracleTooLarge);
  }
}

TEST(InducedNorm, ClosedFormEqualsOracle) {
  Rng rng(21);
  for (int t = 0; t < 500; ++t) {
    const Matrix a = rng.normal_matrix(1 + rng.index(5), 1 + rng.index(5));
    for (const auto& p : kSupported)
      EXPECT_NEAR(norms::induced_norm(a, p), norms::induced_norm_oracle(a, p), 1e-9) << norms::to_string(p);
  }
}

TEST(InducedNorm, SpectralNormMatchesEigen) {
  Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = rng.normal_matrix(6, 4);
    Eigen::MatrixXd e(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 4; ++j) e(i, j) = a(i, j);
    EXPECT_NEAR(norms::induced_norm(a, {2, 2}), Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues()[0], 1e-10);
  }
}

// ||Ax||_beta <= ||A||_{alpha,beta} ||x||_alpha, with the maximum attained.
TEST(InducedNorm, SubMultiplicativeConsistency) {
  Rng rng(23);
  for (int t = 0; t < 1000; ++t) {
    const Matrix a = rng.normal_matrix(1 + rng.index(6), 1 + rng.index(6));
    const Vector x = rng.normal_vector(a.cols());
    const Vector ax = matvec(a, x);
    for (const auto& p : kSupported) {
      const double bound = norms::induced_norm(a, p) * vector_norm(x, p.alpha);
      EXPECT_LE(vector_norm(ax, p.beta), bound + 1e-9 * std::max(1.0, bound));
    }
  }
}

TEST(NormInequalities, RandomMatricesNoViolations) {
  const auto rep = norms::check_norm_inequalities(11, 1000, 4, 6, 1e-9);
  EXPECT_EQ(rep.trials, 1000u);
  EXPECT_GT(rep.checks, 1000u);
  EXPECT_EQ(rep.violations, 0u) << rep.worst_case;
}

TEST(NormInequalities, IdentityAndHandMatrix) {
  EXPECT_EQ(norms::check_norm_inequalities(Matrix::identity(4)).violations, 0u);
  const auto rep = norms::check_norm_inequalities(kA);
  EXPECT_EQ(rep.violations, 0u);
  EXPECT_LE(norms::induced_norm(kA, {1, kInf}), norms::induced_norm(kA, {kInf, kInf}));
}

TEST(NormInequalities, VectorChain) {
  const auto rep = norms::check_vector_norm_inequalities(3, 1000, 1e-9);
  EXPECT_EQ(rep.violations, 0u) << rep.worst_case;
}

TEST(OracleAgreement, Report) {
  const auto rep = norms::check_oracle_agreement(5, 500, 5, 1e-9);
  EXPECT_EQ(rep.matrices, 500u);
  EXPECT_EQ(rep.comparisons, 2500u);
  EXPECT_EQ(rep.mismatches, 0u);
  EXPECT_LE(rep.max_abs_diff, 1e-9);
}

TEST(Spectrum, StableRankHandValues) {
  EXPECT_NEAR(norms::stable_rank(Matrix::identity(5)), 5.0, 1e-12);
  const Matrix outer = matmul(Matrix::from_rows({{1}, {2}, {3}}), Matrix::from_rows({{4, 5, 6, 7}}));
  EXPECT_NEAR(norms::stable_rank(outer), 1.0, 1e-12);
  EXPECT_NEAR(norms::stable_rank(Matrix::diagonal({2.0, 1.0})), 1.25, 1e-14);
}

TEST(Spectrum, SingularSparsityHandValues) {
  EXPECT_NEAR(norms::singular_sparsity(Vector{1, 1, 1, 1}), 1.0, 1e-15);
  EXPECT_NEAR(norms::singular_sparsity(Vector{1, 0, 0, 0}), 0.5, 1e-15);
  EXPECT_NEAR(norms::singular_sparsity(Vector{2, 1}), 3.0 / std::sqrt(10.0), 1e-15);
  // n counts the full reported spectrum, zeros included.
  EXPECT_NEAR(norms::singular_sparsity(Matrix::diagonal({3.0, 0.0})), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Spectrum, ScaleInvarianceAndBounds) {
  Rng rng(24);
  for (int t = 0; t < 100; ++t) {
    const Matrix a = rng.normal_matrix(2 + rng.index(6), 2 + rng.index(6));
    const double c = std::exp(rng.normal(0.0, 3.0)) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    const double sr = norms::stable_rank(a);
    const double ss = norms::singular_sparsity(a);
    EXPECT_NEAR(norms::stable_rank(a * c), sr, 1e-10 * sr);
    EXPECT_NEAR(norms::singular_sparsity(a * c), ss, 1e-10);
    const double n = static_cast<double>(std::min(a.rows(), a.cols()));
    EXPECT_GE(sr, 1.0 - 1e-12);
    EXPECT_LE(sr, n + 1e-12);
    EXPECT_GE(ss, 1.0 / std::sqrt(n) - 1e-12);
    EXPECT_LE(ss, 1.0 + 1e-12);
  }
}

TEST(Spectrum, ZeroMatrixIsDegenerate) {
  EXPECT_THROW(norms::stable_rank(Matrix(3, 3)), Error);
  EXPECT_THROW(norms::singular_sparsity(Matrix(3, 3)), Error);
}

TEST(ActivationSparsity, HandValues) {
  EXPECT_NEAR(norms::activation_sparsity(Vector{0, 1, 0, 0}), 0.5, 1e-15);
  EXPECT_NEAR(norms::activation_sparsity(Vector(16, 1.0)), 1.0, 1e-15);
  EXPECT_NEAR(norms::activation_sparsity(Vector{1, 1, 0, 0}), 1.0 / std::sqrt(2.0), 1e-15);
  try {
    norms::activation_sparsity(Vector(3, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateInput);
  }
}

TEST(ActivationSparsity, Bounds) {
  Rng rng(25);
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = 1 + rng.index(40);
    Vector x = rng.normal_vector(d);
    const double v = norms::activation_sparsity(x);
    EXPECT_GE(v, 1.0 / std::sqrt(static_cast<double>(d)) - 1e-12);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

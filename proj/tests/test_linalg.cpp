#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "lmolab/error.hpp"
#include "lmolab/linalg.hpp"
#include "lmolab/random.hpp"

using namespace lmolab;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& a) {
  Eigen::MatrixXd e(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) e(i, j) = a(i, j);
  return e;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
  return d;
}

Matrix reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= r.s[k];
  return matmul(us, r.v.transposed());
}

// Matrix with prescribed singular values between random orthogonal factors.
Matrix with_spectrum(Rng& rng, std::size_t n, const std::vector<double>& s) {
  const Eigen::MatrixXd g1 = to_eigen(rng.normal_matrix(n, n));
  const Eigen::MatrixXd g2 = to_eigen(rng.normal_matrix(n, n));
  const Eigen::MatrixXd q1 = Eigen::HouseholderQR<Eigen::MatrixXd>(g1).householderQ();
  const Eigen::MatrixXd q2 = Eigen::HouseholderQR<Eigen::MatrixXd>(g2).householderQ();
  Eigen::VectorXd sv(n);
  for (std::size_t i = 0; i < n; ++i) sv[i] = s[i];
  const Eigen::MatrixXd a = q1 * sv.asDiagonal() * q2.transpose();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = a(i, j);
  return out;
}

}  // namespace

TEST(VectorNorm, HandValues) {
  EXPECT_DOUBLE_EQ(vector_norm(std::vector<double>{3, 4}, 2.0), 5.0);
  EXPECT_DOUBLE_EQ(vector_norm(std::vector<double>{1, -1, 1}, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(vector_norm(std::vector<double>{1, 2, -3}, kInf), 3.0);
  EXPECT_NEAR(vector_norm(std::vector<double>{1, 1}, 3.0), std::cbrt(2.0), 1e-15);
}

TEST(VectorNorm, RejectsBadIndex) {
  try {
    vector_norm(std::vector<double>{1.0}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidParameter);
  }
}

TEST(VectorNorm, ComparisonChainFuzz) {
  Rng rng(11);
  const double idx[] = {1.0, 1.5, 2.0, 3.0, kInf};
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 1 + rng.index(12);
    std::vector<double> z(d);
    for (auto& v : z) v = rng.normal() * (rng.bernoulli(0.3) ? 0.0 : 1.0);
    for (double a1 : idx) {
      for (double a2 : idx) {
        if (a1 > a2) continue;
        const double n1 = vector_norm(z, a1);
        const double n2 = vector_norm(z, a2);
        const double expo = (std::isinf(a1) ? 0.0 : 1.0 / a1) - (std::isinf(a2) ? 0.0 : 1.0 / a2);
        EXPECT_LE(n2, n1 + 1e-9 * std::max(1.0, n1));
        EXPECT_LE(n1, std::pow(static_cast<double>(d), expo) * n2 + 1e-9 * std::max(1.0, n1));
      }
    }
  }
}

TEST(Svd, Identity) {
  const auto r = svd(Matrix::identity(3));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.s[i], 1.0, 1e-14);
}

TEST(Svd, DiagWithZero) {
  const auto r = svd(Matrix::diagonal({2.0, 0.0}));
  EXPECT_NEAR(r.s[0], 2.0, 1e-14);
  EXPECT_NEAR(r.s[1], 0.0, 1e-14);
  const Matrix utu = matmul(r.u.transposed(), r.u);
  EXPECT_LT(max_abs_diff(utu, Matrix::identity(2)), 1e-12);
}

TEST(Svd, RandomReconstructionAndOrthonormality) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 1 + rng.index(9);
    const std::size_t n = 1 + rng.index(9);
    const Matrix a = rng.normal_matrix(m, n);
    const auto r = svd(a);
    const std::size_t k = std::min(m, n);
    ASSERT_EQ(r.s.dim(), k);
    EXPECT_LE(frobenius_norm(reconstruct(r) - a), 1e-8 * frobenius_norm(a));
    EXPECT_LT(max_abs_diff(matmul(r.u.transposed(), r.u), Matrix::identity(k)), 1e-8);
    EXPECT_LT(max_abs_diff(matmul(r.v.transposed(), r.v), Matrix::identity(k)), 1e-8);
    for (std::size_t i = 0; i + 1 < k; ++i) EXPECT_GE(r.s[i], r.s[i + 1]);
    EXPECT_GE(r.s[k - 1], 0.0);

    const Eigen::VectorXd ref = Eigen::JacobiSVD<Eigen::MatrixXd>(to_eigen(a)).singularValues();
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(r.s[i], ref[static_cast<Eigen::Index>(i)], 1e-10 * ref[0]);
  }
}

TEST(Svd, RankDeficientAndSparseInputsConverge) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    Matrix a(4 + rng.index(3), 4 + rng.index(3));
    for (auto& v : a.values()) v = rng.bernoulli(0.25) ? rng.normal() : 0.0;
    // Duplicate a column to force exact rank deficiency.
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, 1) = 3.0 * a(i, 0);
    const auto r = svd(a);
    EXPECT_LE(frobenius_norm(reconstruct(r) - a), 1e-8 * std::max(1.0, frobenius_norm(a)));
  }
}

TEST(Svd, NonFiniteRejected) {
  Matrix a(2, 2, 1.0);
  a(0, 1) = std::nan("");
  EXPECT_THROW(svd(a), Error);
}

TEST(MsignExact, HandValues) {
  EXPECT_LT(max_abs_diff(msign_exact(Matrix::identity(3)), Matrix::identity(3)), 1e-12);
  EXPECT_LT(max_abs_diff(msign_exact(Matrix::diagonal({2.0, 0.5})), Matrix::identity(2)), 1e-12);
}

TEST(MsignExact, MatchesSvdPolarFactor) {
  Rng rng(1);
  const Matrix a = rng.normal_matrix(3, 3);
  Eigen::JacobiSVD<Eigen::MatrixXd> ref(to_eigen(a), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd polar = ref.matrixU() * ref.matrixV().transpose();
  const Matrix got = msign_exact(a);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got(i, j), polar(i, j), 1e-8);
}

TEST(MsignExact, PartialIsometry) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    Matrix a = rng.normal_matrix(5, 3);
    for (std::size_t i = 0; i < 5; ++i) a(i, 2) = a(i, 0) - a(i, 1);  // rank 2
    const Matrix m = msign_exact(a);
    const Matrix mmm = matmul(matmul(m, m.transposed()), m);
    EXPECT_LE(frobenius_norm(mmm - m), 1e-7 * frobenius_norm(m));
    const auto s = singular_values(m);
    EXPECT_NEAR(s[0], 1.0, 1e-9);
    EXPECT_NEAR(s[1], 1.0, 1e-9);
    EXPECT_NEAR(s[2], 0.0, 1e-9);
  }
}

TEST(MsignExact, ZeroIsDegenerate) {
  try {
    msign_exact(Matrix(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateInput);
  }
}

TEST(NewtonSchulz, OrthogonalInputIsNearFixedPoint) {
  Rng rng(5);
  const Matrix q = with_spectrum(rng, 6, std::vector<double>(6, 1.0));
  const Matrix out = msign_newton_schulz(q, 5);
  const auto s = singular_values(out);
  // The quintic does not fix sigma = 1 exactly; it maps the unit spectrum into
  // a band around 1 and keeps the singular vectors.
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(s[i], s[0], 1e-9);
  EXPECT_GT(s[0], 0.6);
  EXPECT_LT(s[0], 1.2);
  EXPECT_LT(max_abs_diff(msign_exact(out), q), 1e-9);
}

TEST(NewtonSchulz, IllConditionedDiagonal) {
  const auto s = singular_values(msign_newton_schulz(Matrix::diagonal({10.0, 1.0, 0.1}), 5));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_GE(s[i], 0.3);
    EXPECT_LE(s[i], 1.3);
  }
}

TEST(NewtonSchulz, AlignsWithPolarFactor) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(8);
    for (std::size_t i = 0; i < 8; ++i) s[i] = std::pow(100.0, -static_cast<double>(i) / 7.0);
    const Matrix a = with_spectrum(rng, 8, s);
    EXPECT_GE(inner(msign_newton_schulz(a, 5), msign_exact(a)) / 8.0, 0.9);
  }
}

TEST(RmsNorm, HandValues) {
  EXPECT_DOUBLE_EQ(rms_norm(Matrix(4, 4, 1.0)), 1.0);
  EXPECT_DOUBLE_EQ(rms_norm(Matrix(3, 2)), 0.0);
  EXPECT_DOUBLE_EQ(rms_norm(Matrix::from_rows({{1, 0}, {0, 0}})), 0.5);
}

TEST(Random, SubstreamsAreStableAndDistinct) {
  EXPECT_EQ(substream_seed(1, "a"), substream_seed(1, "a"));
  EXPECT_NE(substream_seed(1, "a"), substream_seed(1, "b"));
  EXPECT_NE(substream_seed(1, "a"), substream_seed(2, "a"));
  EXPECT_NE(substream_seed(1, "a", 0), substream_seed(1, "a", 1));
}

#include "lmolab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include <Eigen/Dense>

#include "lmolab/error.hpp"

namespace lmolab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Matrix& a) { return ConstMap(a.data(), a.rows(), a.cols()); }
MutMap view(Matrix& a) { return MutMap(a.data(), a.rows(), a.cols()); }

void require_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.same_shape(b), ErrorKind::kInvalidInput, std::string(op) + ": shape mismatch");
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid-parameter";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInvalidState: return "invalid-state";
    case ErrorKind::kNumericFailure: return "numeric-failure";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kUnsupportedNorm: return "unsupported-norm";
    case ErrorKind::kOracleTooLarge: return "oracle-too-large";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kProfileConstructionFailed: return "profile-construction-failed";
    case ErrorKind::kDegenerateInstance: return "degenerate-instance";
    case ErrorKind::kPreconditionViolation: return "precondition-violation";
    case ErrorKind::kIncompatibleCheckpoint: return "incompatible-checkpoint";
    case ErrorKind::kIo: return "io-error";
  }
  return "unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require(rows > 0 && cols > 0, ErrorKind::kInvalidParameter, "matrix dimensions must be positive");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(rows > 0 && cols > 0, ErrorKind::kInvalidParameter, "matrix dimensions must be positive");
  require(data_.size() == rows * cols, ErrorKind::kInvalidParameter,
          "matrix data length must equal rows * cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::diagonal(std::initializer_list<double> diag) {
  return diagonal(std::span<const double>(diag.begin(), diag.size()));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  require(r > 0, ErrorKind::kInvalidParameter, "from_rows: no rows");
  const std::size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorKind::kInvalidParameter, "from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Matrix::is_zero() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::kInvalidInput, "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  require(a.cols() == x.dim(), ErrorKind::kInvalidInput, "matvec: dimension mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double inner(const Matrix& a, const Matrix& b) {
  require_shape(a, b, "inner");
  const auto av = a.values();
  const auto bv = b.values();
  return std::inner_product(av.begin(), av.end(), bv.begin(), 0.0);
}

double frobenius_norm(const Matrix& a) { return std::sqrt(inner(a, a)); }

double rms_norm(const Matrix& a) {
  if (a.empty()) return 0.0;
  return frobenius_norm(a) / std::sqrt(static_cast<double>(a.size()));
}

double vector_norm(std::span<const double> x, double p) {
  require(!(p < 1.0) && !std::isnan(p), ErrorKind::kInvalidParameter, "vector_norm: p must be in [1, inf]");
  require(!x.empty(), ErrorKind::kInvalidInput, "vector_norm: empty vector");
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
  }
  if (p == 1.0) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
  }
  // Scale by the max entry so large p does not overflow.
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m == 0.0) return 0.0;
  if (p == 2.0) {
    double s = 0.0;
    for (double v : x) s += (v / m) * (v / m);
    return m * std::sqrt(s);
  }
  double s = 0.0;
  for (double v : x) s += std::pow(std::abs(v) / m, p);
  return m * std::pow(s, 1.0 / p);
}

namespace {

// Hestenes one-sided Jacobi on a tall matrix (m >= n). Columns of `a` are
// stored as rows of `w` for contiguous access.
SvdResult jacobi_tall(const Matrix& a, const std::string& id) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<std::vector<double>> w(n, std::vector<double>(m));
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  constexpr int kMaxSweeps = 100;
  const double kTol = std::numeric_limits<double>::epsilon() * static_cast<double>(m);
  double frob2 = 0.0;
  for (const auto& col : w)
    for (double x : col) frob2 += x * x;
  // Columns below this energy are rounding noise of a rank-deficient input.
  const double kNegligible = std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon() * frob2;
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += w[p][i] * w[p][i];
          beta += w[q][i] * w[q][i];
          gamma += w[p][i] * w[q][i];
        }
        if (gamma == 0.0 || std::min(alpha, beta) <= kNegligible ||
            std::abs(gamma) <= kTol * std::sqrt(alpha) * std::sqrt(beta))
          continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) fail(ErrorKind::kNumericFailure, "svd did not converge within 100 sweeps: " + id);

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double ss = 0.0;
    for (double x : w[j]) ss += x * x;
    sigma[j] = std::sqrt(ss);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out{Matrix(m, n), Vector(n), Matrix(n, n)};
  const double smax = sigma[order[0]];
  // Columns with (numerically) zero singular value get an orthonormal
  // completion so that u^T u = I holds for rank-deficient input.
  std::vector<std::size_t> deficient;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j][i];
    if (sigma[j] > 0.0 && sigma[j] > smax * 1e-300) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w[j][i] / sigma[j];
    } else {
      deficient.push_back(k);
    }
  }
  std::size_t basis = 0;
  for (std::size_t k : deficient) {
    while (basis < m) {
      std::vector<double> cand(m, 0.0);
      cand[basis++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < n; ++c) {
          if (c == k) continue;  // unfilled deficient columns are still zero
          double d = 0.0;
          for (std::size_t i = 0; i < m; ++i) d += out.u(i, c) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= d * out.u(i, c);
        }
      }
      double nrm = 0.0;
      for (double x : cand) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-8) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = cand[i] / nrm;
        break;
      }
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const Matrix& a, const std::string& id) {
  require(!a.empty(), ErrorKind::kInvalidInput, "svd: empty matrix");
  require(a.all_finite(), ErrorKind::kInvalidInput, "svd: non-finite entries in " + id);
  if (a.rows() >= a.cols()) return jacobi_tall(a, id);
  SvdResult t = jacobi_tall(a.transposed(), id);
  return SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
}

Vector singular_values(const Matrix& a, const std::string& id) { return svd(a, id).s; }

Matrix msign_exact(const Matrix& a) {
  require(!a.empty() && !a.is_zero(), ErrorKind::kDegenerateInput, "msign_exact: zero matrix");
  const SvdResult d = svd(a, "msign_exact");
  const double cutoff = 1e-10 * d.s[0];
  Matrix out(a.rows(), a.cols());
  for (std::size_t k = 0; k < d.s.dim(); ++k) {
    if (!(d.s[k] > cutoff)) break;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const double ui = d.u(i, k);
      auto row = out.row(i);
      for (std::size_t j = 0; j < a.cols(); ++j) row[j] += ui * d.v(j, k);
    }
  }
  return out;
}

Matrix msign_newton_schulz(const Matrix& a, int steps, NewtonSchulzCoefficients coeffs) {
  require(steps > 0, ErrorKind::kInvalidParameter, "msign_newton_schulz: steps must be positive");
  require(!a.empty() && !a.is_zero(), ErrorKind::kDegenerateInput, "msign_newton_schulz: zero matrix");
  const bool tall = a.rows() > a.cols();
  RowMat x = tall ? RowMat(view(a).transpose()) : RowMat(view(a));
  x /= x.norm() * (1.0 + 1e-7);
  for (int s = 0; s < steps; ++s) {
    const RowMat gram = x * x.transpose();
    const RowMat poly = coeffs.cubic * gram + coeffs.quintic * gram * gram;
    x = coeffs.linear * x + poly * x;
  }
  Matrix out(a.rows(), a.cols());
  if (tall) {
    view(out) = x.transpose();
  } else {
    view(out) = x;
  }
  return out;
}

}  // namespace lmolab

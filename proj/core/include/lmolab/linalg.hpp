#pragma once

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace lmolab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Dense real vector.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major real matrix. Houses weights, gradients, momenta and
/// updates alike.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix diagonal(std::initializer_list<double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  bool is_zero() const noexcept;

  Matrix transposed() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, const Vector& x);
/// Frobenius inner product sum_ij a_ij b_ij.
double inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

/// Singular value decomposition a = u diag(s) v^T with r = min(m, n).
struct SvdResult {
  Matrix u;  // m x r, orthonormal columns
  Vector s;  // non-increasing, non-negative
  Matrix v;  // n x r, orthonormal columns
};

/// l_p norm for p in [1, inf]. Throws kInvalidParameter for p < 1.
double vector_norm(std::span<const double> x, double p);
inline double vector_norm(const Vector& x, double p) { return vector_norm(x.values(), p); }

/// One-sided (Hestenes) Jacobi SVD. Capped at 100 sweeps; a non-converged
/// decomposition raises kNumericFailure tagged with `id`.
SvdResult svd(const Matrix& a, const std::string& id = "matrix");
Vector singular_values(const Matrix& a, const std::string& id = "matrix");

/// Polar factor U V^T restricted to singular values above 1e-10 * sigma_1.
Matrix msign_exact(const Matrix& a);

struct NewtonSchulzCoefficients {
  double linear = 3.4445;
  double cubic = -4.7750;
  double quintic = 2.0315;
};

/// Quintic Newton-Schulz approximation of msign. The input is pre-scaled by
/// its Frobenius norm (times 1 + 1e-7).
Matrix msign_newton_schulz(const Matrix& a, int steps = 5, NewtonSchulzCoefficients coeffs = {});

/// ||a||_F / sqrt(rows * cols); zero for the zero matrix.
double rms_norm(const Matrix& a);

}  // namespace lmolab

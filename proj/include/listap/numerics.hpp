#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace listap {

using FeatureVector = std::vector<double>;
using Descriptor = std::vector<double>;

inline constexpr double kMinNorm = 1e-12;
inline constexpr double kUnitTolerance = 1e-6;
inline constexpr double kGemClampFloor = 1e-6;

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// B unit-norm rows of dimension C. Construction validates the invariant.
class DescriptorMatrix {
 public:
  explicit DescriptorMatrix(Matrix rows);
  static DescriptorMatrix from_rows(const std::vector<Descriptor>& rows);

  std::size_t count() const noexcept { return rows_.rows(); }
  std::size_t dim() const noexcept { return rows_.cols(); }
  std::span<const double> row(std::size_t i) const { return rows_.row(i); }
  const Matrix& matrix() const noexcept { return rows_; }

 private:
  Matrix rows_;
};

double norm2(std::span<const double> x);

struct NormTape {
  FeatureVector input;
  double norm = 0.0;
};

// x / ‖x‖; throws NearZeroNorm when ‖x‖ <= 1e-12.
Descriptor l2_normalize(std::span<const double> x);
std::pair<Descriptor, NormTape> l2_normalize_taped(std::span<const double> x);

// (I - d dᵀ) g / ‖x‖ with d = x / ‖x‖.
std::vector<double> l2_normalize_backward(const NormTape& tape, std::span<const double> grad_out);

// a·b for unit vectors, clamped to [-1, 1] when the overshoot is within 1e-6.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// S = D Dᵀ, symmetric with an exact unit diagonal.
Matrix similarity_matrix(const DescriptorMatrix& d);

struct GemTape {
  Matrix clamped;  // N x F, inputs after max(x, 1e-6)
  double power = 0.0;
  std::vector<double> pooled;
};

struct GemGrad {
  Matrix input;  // N x F
  double power = 0.0;
};

// g_c = ((1/N) Σ_i max(x_ic, ε)^p)^(1/p). Rows of x are the N vectors.
std::pair<FeatureVector, GemTape> gem_pool(const Matrix& x, double p);
GemGrad gem_pool_backward(const GemTape& tape, std::span<const double> grad_out);

}  // namespace listap

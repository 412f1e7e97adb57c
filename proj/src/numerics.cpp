#include "listap/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "listap/error.hpp"
#include "listap/kernels.hpp"

namespace listap {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(Errc::ShapeMismatch, "matrix data size " + std::to_string(data_.size()) +
                                         " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

DescriptorMatrix::DescriptorMatrix(Matrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() == 0 || rows_.cols() == 0) {
    throw Error(Errc::InvalidArgument, "descriptor matrix must have at least one row and column");
  }
  for (std::size_t i = 0; i < rows_.rows(); ++i) {
    const double n = norm2(rows_.row(i));
    if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTolerance) {
      throw Error(Errc::NotUnitNorm, "row " + std::to_string(i) + " has norm " + std::to_string(n));
    }
  }
}

DescriptorMatrix DescriptorMatrix::from_rows(const std::vector<Descriptor>& rows) {
  if (rows.empty()) throw Error(Errc::InvalidArgument, "no descriptor rows");
  const std::size_t c = rows.front().size();
  Matrix m(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != c) throw Error(Errc::DimensionMismatch, "ragged descriptor rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return DescriptorMatrix(std::move(m));
}

double norm2(std::span<const double> x) { return std::sqrt(kernels::dot(x, x)); }

Descriptor l2_normalize(std::span<const double> x) {
  const double n = norm2(x);
  if (!(n > kMinNorm)) throw Error(Errc::NearZeroNorm, "cannot normalize a vector of norm " + std::to_string(n));
  Descriptor d(x.begin(), x.end());
  for (double& v : d) v /= n;
  return d;
}

std::pair<Descriptor, NormTape> l2_normalize_taped(std::span<const double> x) {
  Descriptor d = l2_normalize(x);
  NormTape tape{FeatureVector(x.begin(), x.end()), norm2(x)};
  return {std::move(d), std::move(tape)};
}

std::vector<double> l2_normalize_backward(const NormTape& tape, std::span<const double> grad_out) {
  if (grad_out.size() != tape.input.size()) {
    throw Error(Errc::ShapeMismatch, "gradient size does not match normalization tape");
  }
  const double n = tape.norm;
  std::vector<double> d(tape.input.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = tape.input[i] / n;
  const double radial = kernels::dot(d, grad_out);
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = (grad_out[i] - radial * d[i]) / n;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "cosine similarity of unequal lengths");
  for (auto v : {a, b}) {
    const double n = norm2(v);
    if (std::abs(n - 1.0) > kUnitTolerance) {
      throw Error(Errc::NotUnitNorm, "cosine similarity input has norm " + std::to_string(n));
    }
  }
  const double s = kernels::dot(a, b);
  if (std::abs(s) > 1.0 + kUnitTolerance) {
    throw Error(Errc::NotUnitNorm, "similarity " + std::to_string(s) + " outside [-1, 1]");
  }
  return std::clamp(s, -1.0, 1.0);
}

Matrix similarity_matrix(const DescriptorMatrix& d) {
  const std::size_t b = d.count();
  Matrix s(b, b);
  const double* rows = d.matrix().data().data();
  kernels::active().gemm_nt(rows, b, rows, b, d.dim(), s.data().data(), b);
  for (std::size_t i = 0; i < b; ++i) {
    s(i, i) = 1.0;
    for (std::size_t j = i + 1; j < b; ++j) {
      const double v = std::clamp(s(i, j), -1.0, 1.0);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

std::pair<FeatureVector, GemTape> gem_pool(const Matrix& x, double p) {
  if (!(p > 0.0) || !std::isfinite(p)) throw Error(Errc::InvalidPower, "GeM power must be positive, got " + std::to_string(p));
  if (x.rows() == 0) throw Error(Errc::InvalidArgument, "GeM pooling over an empty set");
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  GemTape tape{Matrix(n, f), p, {}};
  FeatureVector g(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < f; ++c) {
      const double v = std::max(x(i, c), kGemClampFloor);
      tape.clamped(i, c) = v;
      g[c] += std::pow(v, p);
    }
  }
  for (double& v : g) v = std::pow(v / static_cast<double>(n), 1.0 / p);
  tape.pooled = g;
  return {std::move(g), std::move(tape)};
}

GemGrad gem_pool_backward(const GemTape& tape, std::span<const double> grad_out) {
  const std::size_t n = tape.clamped.rows();
  const std::size_t f = tape.clamped.cols();
  if (grad_out.size() != f) throw Error(Errc::ShapeMismatch, "GeM gradient size mismatch");
  const double p = tape.power;
  const double inv_n = 1.0 / static_cast<double>(n);
  GemGrad out{Matrix(n, f), 0.0};
  for (std::size_t c = 0; c < f; ++c) {
    const double g = tape.pooled[c];
    // mean of x^p, and of x^p ln x
    double mean_pow = 0.0;
    double mean_pow_log = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = tape.clamped(i, c);
      const double vp = std::pow(v, p);
      mean_pow += vp * inv_n;
      mean_pow_log += vp * std::log(v) * inv_n;
    }
    // g = mean_pow^(1/p):  dg/dx_i = g^(1-p) x_i^(p-1) / N
    const double g_1mp = g / mean_pow;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = tape.clamped(i, c);
      // the clamp passes no gradient below the floor
      const double dx = grad_out[c] * g_1mp * std::pow(v, p - 1.0) * inv_n;
      out.input(i, c) = (v > kGemClampFloor) ? dx : 0.0;
    }
    // d/dp of exp(ln(mean_pow)/p) = g * (mean_pow_log / (p mean_pow) - ln(mean_pow) / p²)
    const double dg_dp = g * (mean_pow_log / (p * mean_pow) - std::log(mean_pow) / (p * p));
    out.power += grad_out[c] * dg_dp;
  }
  return out;
}

}  // namespace listap

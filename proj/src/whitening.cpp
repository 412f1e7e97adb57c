#include "listap/whitening.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include <Eigen/Dense>

#include "listap/error.hpp"
#include "listap/kernels.hpp"

namespace listap {

WhiteningModel fit_whitening(const Matrix& rows, std::size_t keep) {
  const std::size_t n = rows.rows();
  const std::size_t c = rows.cols();
  if (n == 0 || c == 0) throw Error(Errc::InvalidArgument, "whitening needs a nonempty training set");
  if (keep == 0) keep = c;
  if (keep > c) throw Error(Errc::InvalidArgument, "cannot keep " + std::to_string(keep) + " of " + std::to_string(c) + " components");

  WhiteningModel model;
  model.mean.assign(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0 / static_cast<double>(n), rows.row(i), model.mean);

  Eigen::MatrixXd centered(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) centered(i, k) = rows(i, k) - model.mean[k];
  }
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(Errc::RankDeficient, "covariance eigendecomposition failed");

  // Eigen returns ascending eigenvalues
  model.eigenvectors = Matrix(c, keep);
  model.rank_deficient = n <= c;
  for (std::size_t k = 0; k < keep; ++k) {
    const auto src = static_cast<Eigen::Index>(c - 1 - k);
    double lambda = solver.eigenvalues()(src);
    if (lambda < model.epsilon) {
      lambda = model.epsilon;
      model.rank_deficient = true;
    }
    model.eigenvalues.push_back(lambda);
    for (std::size_t r = 0; r < c; ++r) model.eigenvectors(r, k) = solver.eigenvectors()(static_cast<Eigen::Index>(r), src);
  }
  if (model.rank_deficient) {
    std::cerr << "warning: RankDeficient: whitening fit on " << n << " samples of dimension " << c
              << "; eigenvalues clamped at " << model.epsilon << '\n';
  }
  return model;
}

WhiteningModel fit_whitening(const DescriptorMatrix& train, std::size_t keep) {
  return fit_whitening(train.matrix(), keep);
}

std::vector<double> whiten_unnormalized(const WhiteningModel& model, std::span<const double> d) {
  const std::size_t c = model.input_dim();
  if (d.size() != c) {
    throw Error(Errc::DimensionMismatch, "descriptor dim " + std::to_string(d.size()) + " != whitening dim " + std::to_string(c));
  }
  std::vector<double> centered(c);
  for (std::size_t i = 0; i < c; ++i) centered[i] = d[i] - model.mean[i];
  std::vector<double> out(model.output_dim(), 0.0);
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += model.eigenvectors(r, k) * centered[r];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] /= std::sqrt(model.eigenvalues[k]);
    if (model.signed_sqrt) out[k] = std::copysign(std::sqrt(std::abs(out[k])), out[k]);
  }
  return out;
}

Descriptor apply_whitening(const WhiteningModel& model, std::span<const double> d) {
  return l2_normalize(whiten_unnormalized(model, d));
}

Matrix apply_whitening(const WhiteningModel& model, const Matrix& rows) {
  Matrix out(rows.rows(), model.output_dim());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto d = apply_whitening(model, rows.row(i));
    std::copy(d.begin(), d.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace listap

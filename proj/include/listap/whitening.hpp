#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "listap/numerics.hpp"

namespace listap {

inline constexpr double kWhiteningEpsilon = 1e-10;

// PCA whitening: project on the top C' eigenvectors of the training
// covariance, scale component k by λ_k^(-1/2), then L2-normalize.
struct WhiteningModel {
  std::vector<double> mean;         // C
  Matrix eigenvectors;              // C x C', column k pairs with eigenvalues[k]
  std::vector<double> eigenvalues;  // C', descending, clamped at epsilon
  double epsilon = kWhiteningEpsilon;
  bool rank_deficient = false;      // fit saw count <= C or clamped eigenvalues
  bool signed_sqrt = false;         // optional sign(y)·sqrt|y| before normalizing; off by default

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return eigenvalues.size(); }
};

// keep = 0 keeps all C components. Prints a warning to stderr when rank deficient.
WhiteningModel fit_whitening(const Matrix& rows, std::size_t keep = 0);
WhiteningModel fit_whitening(const DescriptorMatrix& train, std::size_t keep = 0);

// diag(λ^(-1/2)) Vᵀ (d - mean), before normalization.
std::vector<double> whiten_unnormalized(const WhiteningModel& model, std::span<const double> d);
Descriptor apply_whitening(const WhiteningModel& model, std::span<const double> d);
Matrix apply_whitening(const WhiteningModel& model, const Matrix& rows);

}  // namespace listap

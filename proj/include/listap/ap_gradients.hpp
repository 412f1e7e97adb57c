#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "listap/ap_quantized.hpp"
#include "listap/numerics.hpp"

namespace listap {

// ∂δ(x, m)/∂x = -sign(x - b_m)/Δ · [|x - b_m| < Δ]. When x sits exactly on an
// interior center every bin returns 0, the neighbours included. At the two end centers (x = +1 for m = 0, x = -1 for m = M-1) the
// kernel is one-sided on [-1, 1], so the inward slope is returned; this keeps
// Σ_m ∂δ(x, m)/∂x = 0 everywhere on the domain. Outside [-1, 1] the result is 0.
double soft_assign_grad(double x, const BinGrid& grid, std::size_t m);

// Row i holds ∂ℓ/∂d_i.
struct GradientBuffer {
  Matrix grads;
};

struct LossAndGrad {
  double loss = 0.0;
  GradientBuffer buffer;
  std::vector<double> per_query_ap;
};

LossAndGrad loss_backward_descriptors(const DescriptorMatrix& d, const BatchLabels& labels, const BinGrid& grid,
                                      ApVariant variant = ApVariant::Quantized,
                                      Balancing balancing = Balancing::Uniform);

// (score index, bin) pairs whose score lies within `radius` of a kink of
// δ(·, m), i.e. of b_m or b_m ± Δ.
struct KinkMap {
  std::vector<std::pair<std::size_t, std::size_t>> entries;
  double radius = 0.0;

  bool empty() const noexcept { return entries.empty(); }
};

inline constexpr double kKinkRadiusFraction = 1e-3;

KinkMap kink_map(std::span<const double> scores, const BinGrid& grid, double radius);
// Distance from x to the nearest kink of any bin (every kink sits on a bin center).
double distance_to_kink(double x, const BinGrid& grid);

struct GradCheckOptions {
  ApVariant variant = ApVariant::Quantized;
  Balancing balancing = Balancing::Uniform;
  double step = 1e-6;
  double tolerance = 1e-4;
};

struct GradCheckReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool passed = false;
  bool step_out_of_range = false;
  std::size_t kink_count = 0;        // KinkMap entries over all off-diagonal scores
  std::size_t excluded_entries = 0;  // descriptor entries skipped because a perturbation crosses a kink
  std::size_t checked_entries = 0;
};

inline constexpr double kMinStep = 1e-8;
inline constexpr double kMaxStep = 1e-3;

// Central differences of the loss on the raw rows (no renormalization after
// perturbation, scores re-clamped) against the analytic gradient.
GradCheckReport grad_check(const Matrix& rows, const BatchLabels& labels, const BinGrid& grid,
                           const GradCheckOptions& options = {});

// Random unit rows with unequal class sizes (every class >= 2 members). With
// require_kink_free, redraws until no off-diagonal score lies within
// kKinkRadiusFraction·Δ of a kink.
struct GradInstance {
  Matrix rows;
  BatchLabels labels;
  std::size_t redraws = 0;
};

GradInstance random_grad_instance(std::uint64_t seed, std::size_t batch, std::size_t dim, const BinGrid& grid,
                                  bool require_kink_free = true);
bool kink_free(const Matrix& rows, const BinGrid& grid);

}  // namespace listap

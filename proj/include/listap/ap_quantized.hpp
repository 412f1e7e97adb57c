#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "listap/ap_exact.hpp"
#include "listap/numerics.hpp"

namespace listap {

inline constexpr std::size_t kDefaultBins = 20;
inline constexpr double kEmptyBinMass = 1e-12;

// M bin centers b_m = 1 - mΔ (0-based m), Δ = 2/(M-1), from +1 down to -1.
class BinGrid {
 public:
  explicit BinGrid(std::size_t bins = kDefaultBins);

  std::size_t size() const noexcept { return bins_; }
  double delta() const noexcept { return delta_; }
  double center(std::size_t m) const noexcept { return 1.0 - static_cast<double>(m) * delta_; }

 private:
  std::size_t bins_;
  double delta_;
};

// δ(x, m) = max(1 - |x - b_m|/Δ, 0). x may overshoot [-1, 1] by 1e-6 and is
// then clamped; anything further is OutOfDomain.
double soft_assign(double x, const BinGrid& grid, std::size_t m);

// M x N matrices: row m holds δ(S, m) and its running sum ξ_m respectively.
struct SoftAssignment {
  Matrix values;
};
struct CumulativeAssignment {
  Matrix values;
};

SoftAssignment soft_assignment(std::span<const double> scores, const BinGrid& grid);
CumulativeAssignment cumulative(const SoftAssignment& assign);

// P̂_m = (ξ_m·Y)/(ξ_m·1); 0 when ξ_m·1 < 1e-12.
double quantized_precision(const SoftAssignment& assign, const CumulativeAssignment& cum,
                           std::span<const std::uint8_t> relevant, std::size_t m);

// Δr̂_m = (δ_m·Y)/N^q. Throws NoRelevantItems when N^q = 0.
double quantized_incremental_recall(const SoftAssignment& assign, std::span<const std::uint8_t> relevant,
                                    std::size_t m);

// (1 + δ_m·Y + 2 ξ_{m-1}·Y) / (1 + δ_m·1 + 2 ξ_{m-1}·1)
double tie_aware_precision(const SoftAssignment& assign, const CumulativeAssignment& cum,
                           std::span<const std::uint8_t> relevant, std::size_t m);

enum class ApVariant { Quantized, TieAware };
enum class Balancing { Uniform, ClassBalanced };

ApVariant parse_variant(std::string_view name);
std::string_view variant_name(ApVariant v);

// Σ_m P̂_m Δr̂_m with the chosen precision estimator.
double ap_q(std::span<const double> scores, std::span<const std::uint8_t> relevant, const BinGrid& grid,
            ApVariant variant = ApVariant::Quantized);

struct BatchLabels {
  std::vector<int> class_of;

  std::size_t size() const noexcept { return class_of.size(); }
  bool relevant(std::size_t i, std::size_t j) const { return class_of[i] == class_of[j]; }
  Relevance relevance_row(std::size_t q) const;
};

// Throws SingletonClass if any class has exactly one member, InvalidArgument if empty.
void require_no_singletons(const BatchLabels& labels);

// Per-query weights summing to 1. Class-balanced gives each class 1/K_batch in total.
std::vector<double> query_weights(const BatchLabels& labels, Balancing balancing);

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_query_ap;
};

// ℓ = 1 - Σ_q w_q AP_Q(d_qᵀD, Y_q). The self-match S_qq = 1, Y_qq = 1 stays in
// each query's list.
LossResult map_q_loss(const DescriptorMatrix& d, const BatchLabels& labels, const BinGrid& grid,
                      ApVariant variant = ApVariant::Quantized, Balancing balancing = Balancing::Uniform);

namespace detail {

// Bin index pair holding x's mass: x lies in [b_{lo+1}, b_lo].
std::size_t lower_bin(double x, const BinGrid& grid);

// Histograms of one query's soft assignment: a_m = δ_m·Y, c_m = δ_m·1.
struct QueryHistogram {
  std::vector<double> relevant_mass;
  std::vector<double> total_mass;
  double num_relevant = 0.0;
};

QueryHistogram histogram(std::span<const double> scores, std::span<const std::uint8_t> relevant,
                         const BinGrid& grid);

double ap_from_histogram(const QueryHistogram& h, ApVariant variant);

// Fills grad_scores[j] = ∂AP/∂S_j and returns AP. Bitwise the same AP as
// ap_from_histogram(histogram(...)).
double ap_and_score_grad(std::span<const double> scores, std::span<const std::uint8_t> relevant,
                         const BinGrid& grid, ApVariant variant, std::span<double> grad_scores);

enum class ScoreDomain { Strict, Clamp };

// Forward (and optionally backward) of the batch loss on raw rows. Strict
// rejects off-diagonal scores beyond 1 + 1e-6; Clamp silently clamps them.
// The diagonal is pinned to 1 and carries no gradient.
LossResult batch_loss(const Matrix& rows, const BatchLabels& labels, const BinGrid& grid, ApVariant variant,
                      Balancing balancing, ScoreDomain domain, Matrix* grad_rows);

}  // namespace detail

}  // namespace listap

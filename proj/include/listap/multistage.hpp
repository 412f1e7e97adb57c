#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "listap/ap_gradients.hpp"
#include "listap/ap_quantized.hpp"
#include "listap/embedder.hpp"

namespace listap {

// Network passes and optimizer updates, in images (forwards, backwards) and
// steps (updates).
struct BudgetCounters {
  std::uint64_t forwards = 0;
  std::uint64_t backwards = 0;
  std::uint64_t updates = 0;
  double wall_seconds = 0.0;

  friend bool operator==(const BudgetCounters& a, const BudgetCounters& b) {
    return a.forwards == b.forwards && a.backwards == b.backwards && a.updates == b.updates;
  }
};

// {"forwards":..,"backwards":..,"updates":..,"wall_seconds":..}
std::string counters_json(const BudgetCounters& c);

class StagePlan {
 public:
  explicit StagePlan(std::size_t batch_size = 0) : batch_size_(batch_size) {}

  std::size_t batch_size() const noexcept { return batch_size_; }
  const BudgetCounters& counters() const noexcept { return counters_; }

  void record_forwards(std::uint64_t n) { counters_.forwards += n; }
  void record_backwards(std::uint64_t n) { counters_.backwards += n; }
  void record_update() { ++counters_.updates; }
  void add_wall_seconds(double s) { counters_.wall_seconds += s; }

 private:
  std::size_t batch_size_;
  BudgetCounters counters_;
};

struct ParamGradAccumulator {
  Params grads;
  std::size_t accumulated = 0;

  static ParamGradAccumulator for_model(const Embedder& model);
  void zero();
};

// Tape-free forward of every image; forwards += B.
DescriptorMatrix stage1_forward(const Embedder& model, std::span<const FeatureVector> batch, StagePlan& plan);

// Descriptor-space loss and ∂ℓ/∂D. Not a network pass: counters are untouched.
LossAndGrad stage2_loss_and_grads(const DescriptorMatrix& d, const BatchLabels& labels, const BinGrid& grid,
                                  ApVariant variant, Balancing balancing);

// Per image, in batch order: taped re-forward, then backward of row i into the
// accumulator. Only one tape is alive at a time. forwards += B, backwards += B.
void stage3_backward(const Embedder& model, std::span<const FeatureVector> batch, const GradientBuffer& grads,
                     ParamGradAccumulator& acc, StagePlan& plan);

struct MultistageConfig {
  ApVariant variant = ApVariant::Quantized;
  Balancing balancing = Balancing::Uniform;
};

struct StepResult {
  double loss = 0.0;
  std::vector<double> per_query_ap;
  ParamGradAccumulator acc;
};

// Stages 1-3. The optimizer update (and record_update) belongs to the caller.
StepResult multistage_step(const Embedder& model, std::span<const FeatureVector> batch, const BatchLabels& labels,
                           const BinGrid& grid, const MultistageConfig& config, StagePlan& plan);

// Counter bookkeeping of one multistage step and its update without any math.
void account_multistage_step(StagePlan& plan, std::size_t batch_size);

}  // namespace listap

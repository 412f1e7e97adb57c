#include "listap/multistage.hpp"

#include <json.hpp>

#include "listap/error.hpp"
#include "listap/parallel.hpp"

namespace listap {

std::string counters_json(const BudgetCounters& c) {
  nlohmann::json j{{"forwards", c.forwards}, {"backwards", c.backwards}, {"updates", c.updates},
                   {"wall_seconds", c.wall_seconds}};
  return j.dump();
}

ParamGradAccumulator ParamGradAccumulator::for_model(const Embedder& model) {
  return {zeros_like(model.params()), 0};
}

void ParamGradAccumulator::zero() {
  fill_zero(grads);
  accumulated = 0;
}

DescriptorMatrix stage1_forward(const Embedder& model, std::span<const FeatureVector> batch, StagePlan& plan) {
  if (batch.empty()) throw Error(Errc::InvalidArgument, "empty batch");
  Matrix rows(batch.size(), model.output_dim());
  parallel_for(batch.size(), [&](std::size_t i) {
    const Descriptor d = model.forward(batch[i]);
    std::copy(d.begin(), d.end(), rows.row(i).begin());
  });
  plan.record_forwards(batch.size());
  return DescriptorMatrix(std::move(rows));
}

LossAndGrad stage2_loss_and_grads(const DescriptorMatrix& d, const BatchLabels& labels, const BinGrid& grid,
                                  ApVariant variant, Balancing balancing) {
  return loss_backward_descriptors(d, labels, grid, variant, balancing);
}

void stage3_backward(const Embedder& model, std::span<const FeatureVector> batch, const GradientBuffer& grads,
                     ParamGradAccumulator& acc, StagePlan& plan) {
  if (grads.grads.rows() != batch.size() || grads.grads.cols() != model.output_dim()) {
    throw Error(Errc::ShapeMismatch, "gradient buffer is " + std::to_string(grads.grads.rows()) + "x" +
                                         std::to_string(grads.grads.cols()) + ", batch has " +
                                         std::to_string(batch.size()) + " images");
  }
  if (acc.grads.size() != model.params().size()) {
    throw Error(Errc::ShapeMismatch, "accumulator does not match the model parameters");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto taped = model.forward_taped(batch[i]);
    model.backward(*taped.second, grads.grads.row(i), acc.grads);
    ++acc.accumulated;
  }
  plan.record_forwards(batch.size());
  plan.record_backwards(batch.size());
}

StepResult multistage_step(const Embedder& model, std::span<const FeatureVector> batch, const BatchLabels& labels,
                           const BinGrid& grid, const MultistageConfig& config, StagePlan& plan) {
  if (labels.size() != batch.size()) throw Error(Errc::ShapeMismatch, "labels and batch differ in size");
  const DescriptorMatrix d = stage1_forward(model, batch, plan);
  LossAndGrad lg = stage2_loss_and_grads(d, labels, grid, config.variant, config.balancing);
  StepResult out{lg.loss, std::move(lg.per_query_ap), ParamGradAccumulator::for_model(model)};
  stage3_backward(model, batch, lg.buffer, out.acc, plan);
  return out;
}

void account_multistage_step(StagePlan& plan, std::size_t batch_size) {
  plan.record_forwards(batch_size);   // stage 1
  plan.record_forwards(batch_size);   // stage 3 re-forward
  plan.record_backwards(batch_size);  // stage 3 backward
  plan.record_update();
}

}  // namespace listap

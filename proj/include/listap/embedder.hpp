#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "listap/numerics.hpp"

namespace listap {

// Live/peak counters for per-image backward tapes. Every Tape registers itself
// on construction and deregisters on destruction.
struct TapeStats {
  std::int64_t live = 0;
  std::int64_t peak = 0;
  std::int64_t created = 0;
};

class TapeTracker {
 public:
  static TapeStats stats();
  static void reset();
};

class Tape {
 public:
  Tape();
  virtual ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
};

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

using Params = std::vector<ParamTensor>;

Params zeros_like(const Params& params);
void fill_zero(Params& params);
// Largest |a - b| / max(|a|, |b|, floor) over all entries.
double max_rel_diff(const Params& a, const Params& b, double floor = 1e-12);

// f_Θ: raw feature vector -> unit descriptor.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;

  virtual Descriptor forward(std::span<const double> x) const = 0;
  virtual std::pair<Descriptor, std::unique_ptr<Tape>> forward_taped(std::span<const double> x) const = 0;
  // Adds ∂ℓ/∂Θ for this image into `grads` given ∂ℓ/∂d.
  virtual void backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const = 0;

  virtual Params& params() = 0;
  virtual const Params& params() const = 0;
  virtual std::unique_ptr<Embedder> clone() const = 0;
};

// d = normalize(W x), W is C x F.
class LinearEmbedder final : public Embedder {
 public:
  LinearEmbedder(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);

  std::size_t input_dim() const override { return in_; }
  std::size_t output_dim() const override { return out_; }
  Descriptor forward(std::span<const double> x) const override;
  std::pair<Descriptor, std::unique_ptr<Tape>> forward_taped(std::span<const double> x) const override;
  void backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const override;
  Params& params() override { return params_; }
  const Params& params() const override { return params_; }
  std::unique_ptr<Embedder> clone() const override { return std::make_unique<LinearEmbedder>(*this); }

 private:
  std::vector<double> project(std::span<const double> x) const;

  std::size_t in_;
  std::size_t out_;
  Params params_;  // [W]
};

// d = normalize(W2 tanh(W1 x + b1)).
class MlpEmbedder final : public Embedder {
 public:
  MlpEmbedder(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, std::uint64_t seed);

  std::size_t input_dim() const override { return in_; }
  std::size_t output_dim() const override { return out_; }
  Descriptor forward(std::span<const double> x) const override;
  std::pair<Descriptor, std::unique_ptr<Tape>> forward_taped(std::span<const double> x) const override;
  void backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const override;
  Params& params() override { return params_; }
  const Params& params() const override { return params_; }
  std::unique_ptr<Embedder> clone() const override { return std::make_unique<MlpEmbedder>(*this); }

 private:
  std::vector<double> hidden(std::span<const double> x) const;
  std::vector<double> output(std::span<const double> h) const;

  std::size_t in_;
  std::size_t hid_;
  std::size_t out_;
  Params params_;  // [W1, b1, W2]
};

// The input is P equal parts of length F/P. Each part is projected by a shared
// W, the P projections are GeM-pooled with a learnable power, then normalized.
class GemPartsEmbedder final : public Embedder {
 public:
  GemPartsEmbedder(std::size_t input_dim, std::size_t parts, std::size_t output_dim, std::uint64_t seed,
                   double initial_power = 3.0);

  std::size_t input_dim() const override { return in_; }
  std::size_t output_dim() const override { return out_; }
  Descriptor forward(std::span<const double> x) const override;
  std::pair<Descriptor, std::unique_ptr<Tape>> forward_taped(std::span<const double> x) const override;
  void backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const override;
  Params& params() override { return params_; }
  const Params& params() const override { return params_; }
  std::unique_ptr<Embedder> clone() const override { return std::make_unique<GemPartsEmbedder>(*this); }

  double power() const { return params_[1].values[0]; }

 private:
  Matrix project_parts(std::span<const double> x) const;

  std::size_t in_;
  std::size_t parts_;
  std::size_t out_;
  Params params_;  // [W (C x F/P), power (1)]
};

}  // namespace listap

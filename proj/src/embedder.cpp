#include "listap/embedder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

#include "listap/error.hpp"
#include "listap/kernels.hpp"

namespace listap {
namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};
std::atomic<std::int64_t> g_created{0};

ParamTensor random_tensor(std::string name, std::vector<std::size_t> shape, double scale, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::normal_distribution<double> normal(0.0, scale);
  ParamTensor t{std::move(name), std::move(shape), std::vector<double>(n)};
  for (double& v : t.values) v = normal(rng);
  return t;
}

void check_input(std::span<const double> x, std::size_t expected) {
  if (x.size() != expected) {
    throw Error(Errc::ShapeMismatch, "embedder expects " + std::to_string(expected) + " features, got " +
                                         std::to_string(x.size()));
  }
}

// out = M x with M stored row-major as rows x cols.
std::vector<double> matvec(const std::vector<double>& m, std::size_t rows, std::size_t cols,
                           std::span<const double> x) {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = kernels::dot({m.data() + r * cols, cols}, x);
  return out;
}

// grad_m += g xᵀ
void add_outer(std::vector<double>& grad_m, std::size_t cols, std::span<const double> g, std::span<const double> x) {
  for (std::size_t r = 0; r < g.size(); ++r) kernels::axpy(g[r], x, {grad_m.data() + r * cols, cols});
}

struct LinearTape final : Tape {
  FeatureVector input;
  NormTape norm;
};

struct MlpTape final : Tape {
  FeatureVector input;
  std::vector<double> hidden;
  NormTape norm;
};

struct GemPartsTape final : Tape {
  FeatureVector input;
  GemTape gem;
  NormTape norm;
};

}  // namespace

TapeStats TapeTracker::stats() { return {g_live.load(), g_peak.load(), g_created.load()}; }

void TapeTracker::reset() {
  g_peak.store(g_live.load());
  g_created.store(0);
}

Tape::Tape() {
  const auto now = ++g_live;
  ++g_created;
  auto peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

Tape::~Tape() { --g_live; }

Params zeros_like(const Params& params) {
  Params out = params;
  fill_zero(out);
  return out;
}

void fill_zero(Params& params) {
  for (auto& t : params) std::fill(t.values.begin(), t.values.end(), 0.0);
}

double max_rel_diff(const Params& a, const Params& b, double floor) {
  if (a.size() != b.size()) throw Error(Errc::ShapeMismatch, "parameter lists differ in length");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].values.size() != b[t].values.size()) throw Error(Errc::ShapeMismatch, "tensor " + a[t].name + " differs in size");
    for (std::size_t i = 0; i < a[t].values.size(); ++i) {
      const double x = a[t].values[i];
      const double y = b[t].values[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

// ---- linear ----

LinearEmbedder::LinearEmbedder(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed)
    : in_(input_dim), out_(output_dim) {
  if (input_dim == 0 || output_dim == 0) throw Error(Errc::InvalidArgument, "embedder dimensions must be positive");
  std::mt19937_64 rng(seed);
  params_.push_back(random_tensor("W", {output_dim, input_dim}, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng));
}

std::vector<double> LinearEmbedder::project(std::span<const double> x) const {
  check_input(x, in_);
  return matvec(params_[0].values, out_, in_, x);
}

Descriptor LinearEmbedder::forward(std::span<const double> x) const { return l2_normalize(project(x)); }

std::pair<Descriptor, std::unique_ptr<Tape>> LinearEmbedder::forward_taped(std::span<const double> x) const {
  auto tape = std::make_unique<LinearTape>();
  tape->input.assign(x.begin(), x.end());
  auto [d, norm] = l2_normalize_taped(project(x));
  tape->norm = std::move(norm);
  return {std::move(d), std::move(tape)};
}

void LinearEmbedder::backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const {
  const auto& t = dynamic_cast<const LinearTape&>(tape);
  const auto gz = l2_normalize_backward(t.norm, grad_descriptor);
  add_outer(grads[0].values, in_, gz, t.input);
}

// ---- MLP ----

MlpEmbedder::MlpEmbedder(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, std::uint64_t seed)
    : in_(input_dim), hid_(hidden_dim), out_(output_dim) {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) {
    throw Error(Errc::InvalidArgument, "embedder dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  params_.push_back(random_tensor("W1", {hidden_dim, input_dim}, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng));
  params_.push_back(random_tensor("b1", {hidden_dim}, 0.1, rng));
  params_.push_back(random_tensor("W2", {output_dim, hidden_dim}, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng));
}

std::vector<double> MlpEmbedder::hidden(std::span<const double> x) const {
  check_input(x, in_);
  auto h = matvec(params_[0].values, hid_, in_, x);
  for (std::size_t i = 0; i < hid_; ++i) h[i] = std::tanh(h[i] + params_[1].values[i]);
  return h;
}

std::vector<double> MlpEmbedder::output(std::span<const double> h) const {
  return matvec(params_[2].values, out_, hid_, h);
}

Descriptor MlpEmbedder::forward(std::span<const double> x) const { return l2_normalize(output(hidden(x))); }

std::pair<Descriptor, std::unique_ptr<Tape>> MlpEmbedder::forward_taped(std::span<const double> x) const {
  auto tape = std::make_unique<MlpTape>();
  tape->input.assign(x.begin(), x.end());
  tape->hidden = hidden(x);
  auto [d, norm] = l2_normalize_taped(output(tape->hidden));
  tape->norm = std::move(norm);
  return {std::move(d), std::move(tape)};
}

void MlpEmbedder::backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const {
  const auto& t = dynamic_cast<const MlpTape&>(tape);
  const auto gz = l2_normalize_backward(t.norm, grad_descriptor);
  add_outer(grads[2].values, hid_, gz, t.hidden);
  std::vector<double> gh(hid_, 0.0);
  const auto& w2 = params_[2].values;
  for (std::size_t r = 0; r < out_; ++r) kernels::axpy(gz[r], {w2.data() + r * hid_, hid_}, gh);
  for (std::size_t i = 0; i < hid_; ++i) gh[i] *= 1.0 - t.hidden[i] * t.hidden[i];
  add_outer(grads[0].values, in_, gh, t.input);
  kernels::axpy(1.0, gh, grads[1].values);
}

// ---- GeM over parts ----

GemPartsEmbedder::GemPartsEmbedder(std::size_t input_dim, std::size_t parts, std::size_t output_dim,
                                   std::uint64_t seed, double initial_power)
    : in_(input_dim), parts_(parts), out_(output_dim) {
  if (parts == 0 || input_dim % parts != 0) {
    throw Error(Errc::InvalidArgument, "input dim must split evenly into parts");
  }
  if (!(initial_power > 0.0)) throw Error(Errc::InvalidPower, "initial GeM power must be positive");
  std::mt19937_64 rng(seed);
  const std::size_t part_dim = input_dim / parts;
  params_.push_back(random_tensor("W", {output_dim, part_dim}, 1.0 / std::sqrt(static_cast<double>(part_dim)), rng));
  params_.push_back(ParamTensor{"power", {1}, {initial_power}});
}

Matrix GemPartsEmbedder::project_parts(std::span<const double> x) const {
  check_input(x, in_);
  const std::size_t part_dim = in_ / parts_;
  Matrix u(parts_, out_);
  for (std::size_t p = 0; p < parts_; ++p) {
    const auto proj = matvec(params_[0].values, out_, part_dim, x.subspan(p * part_dim, part_dim));
    std::copy(proj.begin(), proj.end(), u.row(p).begin());
  }
  return u;
}

Descriptor GemPartsEmbedder::forward(std::span<const double> x) const {
  return l2_normalize(gem_pool(project_parts(x), power()).first);
}

std::pair<Descriptor, std::unique_ptr<Tape>> GemPartsEmbedder::forward_taped(std::span<const double> x) const {
  auto tape = std::make_unique<GemPartsTape>();
  tape->input.assign(x.begin(), x.end());
  auto [pooled, gem] = gem_pool(project_parts(x), power());
  tape->gem = std::move(gem);
  auto [d, norm] = l2_normalize_taped(pooled);
  tape->norm = std::move(norm);
  return {std::move(d), std::move(tape)};
}

void GemPartsEmbedder::backward(const Tape& tape, std::span<const double> grad_descriptor, Params& grads) const {
  const auto& t = dynamic_cast<const GemPartsTape&>(tape);
  const auto gg = l2_normalize_backward(t.norm, grad_descriptor);
  const auto gem_grad = gem_pool_backward(t.gem, gg);
  const std::size_t part_dim = in_ / parts_;
  const std::span<const double> input(t.input);
  for (std::size_t p = 0; p < parts_; ++p) {
    add_outer(grads[0].values, part_dim, gem_grad.input.row(p), input.subspan(p * part_dim, part_dim));
  }
  grads[1].values[0] += gem_grad.power;
}

}  // namespace listap

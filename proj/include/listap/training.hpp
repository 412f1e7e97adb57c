#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "listap/ap_exact.hpp"
#include "listap/ap_quantized.hpp"
#include "listap/embedder.hpp"
#include "listap/multistage.hpp"

namespace listap {

enum class LossKind { ApQ, TieAware, Triplet };

LossKind parse_loss(std::string_view name);
std::string_view loss_name(LossKind kind);

struct TripletConfig {
  double margin = 0.1;
  std::size_t triplets_per_update = 64;
  std::size_t pool_size = 0;        // 0 = the whole training split
  std::size_t refresh_period = 16;  // updates between mining passes
  std::size_t hardest = 5;          // negatives drawn from this many hardest
};

struct TrainConfig {
  double lr0 = 1e-4;
  std::size_t total_iters = 200;
  double weight_decay = 1e-6;
  std::size_t batch_size = 128;
  std::size_t bins = kDefaultBins;
  LossKind loss = LossKind::ApQ;
  bool balanced = false;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 50;
  std::size_t classes_per_batch = 0;  // 0 = every class in each batch
  TripletConfig triplet;
};

// Throws InvalidArgument on nonpositive or inconsistent fields.
void validate(const TrainConfig& cfg);
TrainConfig read_train_config(const std::filesystem::path& path);
void write_train_config(const std::filesystem::path& path, const TrainConfig& cfg);

// lr0 · max(0, 1 - t / total_iters)
double lr_schedule(std::size_t t, const TrainConfig& cfg);

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Params first_moment;
  Params second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const Params& params);
};

// Adam with bias correction; weight decay enters as λθ added to the gradient.
void adam_step(Params& params, const Params& grads, AdamState& state, double lr, double weight_decay,
               const AdamConstants& constants = {});

struct Split {
  std::vector<FeatureVector> features;
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return features.size(); }
};

struct SyntheticSpec {
  std::size_t num_classes = 32;
  std::size_t feature_dim = 64;
  std::vector<std::size_t> class_counts;  // per class; empty = samples_per_class for all
  std::size_t samples_per_class = 40;
  std::size_t signal_dim = 8;             // latent dimensions that carry class identity
  // Optional per-class block index: class k's centroid lives in latent dims
  // [b·signal_dim, (b+1)·signal_dim) with b = class_block[k]; other signal
  // blocks carry noise only. Empty = every class uses block 0.
  std::vector<std::size_t> class_block;
  double class_separation = 1.2;
  double signal_noise = 0.25;
  double nuisance_noise = 1.5;
  double gain = 0.3;
  std::size_t queries_per_class = 2;
  double db_fraction = 0.25;  // of each class's non-query samples
  std::uint64_t seed = 0;
};

// Samples are tanh(gain · R z) with R a fixed random rotation and z a class
// centroid plus noise; nuisance latent dimensions carry no class signal.
struct SyntheticDataset {
  Split train;
  Split eval_queries;
  Split eval_db;
  std::size_t num_classes = 0;
};

SyntheticDataset make_synthetic(const SyntheticSpec& spec);
// Medium-protocol judgments: easy = same-class database items.
std::vector<RelevanceJudgment> eval_judgments(const SyntheticDataset& data);

struct Batch {
  std::vector<FeatureVector> features;
  BatchLabels labels;
  std::vector<std::size_t> indices;  // rows of the training split
};

// Every represented class gets at least 2 images; remaining slots are drawn
// uniformly from the rest of the eligible pool. With classes_per_batch > 0
// only that many random classes are eligible.
Batch sample_batch(const Split& train, std::size_t batch_size, std::mt19937_64& rng,
                   std::size_t classes_per_batch = 0);

// max(0, margin + ‖a-p‖² - ‖a-n‖²) / 2. When grads is non-null it receives
// ∂/∂a, ∂/∂p, ∂/∂n (zero when the margin is satisfied).
struct TripletGrads {
  std::vector<double> anchor, positive, negative;
};
double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n, double margin,
                    TripletGrads* grads = nullptr);

struct TripletMiner {
  std::vector<std::size_t> pool;       // rows of the training split
  Matrix pool_descriptors;             // rows aligned with pool
  std::size_t updates_since_refresh = 0;
  bool primed = false;
};

struct TripletStepResult {
  double loss = 0.0;
  ParamGradAccumulator acc;
};

TripletStepResult triplet_loss_step(const Embedder& model, const Split& train, const TripletConfig& cfg,
                                    TripletMiner& miner, StagePlan& plan, std::mt19937_64& rng);

// Counter bookkeeping of one triplet update (mining pass when due) without math.
void account_triplet_update(StagePlan& plan, const TripletConfig& cfg, std::size_t pool_size,
                            std::size_t update_index);

struct EvalSummary {
  double map = 0.0;
  double per_class_map = 0.0;  // mean over classes of the class's mean query AP
  RetrievalEval detail;
};

EvalSummary evaluate_model(const Embedder& model, const SyntheticDataset& data);
Matrix embed_all(const Embedder& model, const std::vector<FeatureVector>& features);

struct HistoryRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> eval_map;
  BudgetCounters counters;
};

std::string history_json(const HistoryRecord& r);

struct TrainResult {
  std::vector<HistoryRecord> history;
  double initial_map = 0.0;
  double final_map = 0.0;
  double initial_per_class_map = 0.0;
  double final_per_class_map = 0.0;
  BudgetCounters counters;
};

TrainResult train(Embedder& model, const SyntheticDataset& data, const TrainConfig& cfg);

// Counters a run would report, computed without any math.
BudgetCounters dry_run_counters(LossKind loss, std::size_t batch_size, std::size_t iters,
                                const TripletConfig& triplet = {}, std::size_t pool_size = 0);

}  // namespace listap

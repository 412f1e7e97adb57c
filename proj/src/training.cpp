#include "listap/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <json.hpp>

#include "listap/error.hpp"
#include "listap/kernels.hpp"
#include "listap/parallel.hpp"

namespace listap {

LossKind parse_loss(std::string_view name) {
  if (name == "ap_q") return LossKind::ApQ;
  if (name == "tie_aware") return LossKind::TieAware;
  if (name == "triplet") return LossKind::Triplet;
  throw Error(Errc::InvalidArgument, "unknown loss '" + std::string(name) + "' (expected ap_q, tie_aware or triplet)");
}

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::ApQ: return "ap_q";
    case LossKind::TieAware: return "tie_aware";
    case LossKind::Triplet: return "triplet";
  }
  return "?";
}

void validate(const TrainConfig& cfg) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::InvalidArgument, what);
  };
  require(cfg.lr0 >= 0.0 && std::isfinite(cfg.lr0), "lr0 must be finite and nonnegative");
  require(cfg.total_iters > 0, "total_iters must be positive");
  require(cfg.weight_decay >= 0.0, "weight_decay must be nonnegative");
  require(cfg.bins >= 2, "bins must be at least 2");
  require(cfg.eval_interval > 0, "eval_interval must be positive");
  if (cfg.loss == LossKind::Triplet) {
    require(cfg.triplet.margin > 0.0, "triplet margin must be positive");
    require(cfg.triplet.triplets_per_update > 0, "triplets_per_update must be positive");
    require(cfg.triplet.refresh_period > 0, "refresh_period must be positive");
    require(cfg.triplet.hardest > 0, "hardest must be positive");
  } else {
    require(cfg.batch_size >= 2, "batch_size must be at least 2");
  }
}

namespace {

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"lr0", cfg.lr0},
          {"total_iters", cfg.total_iters},
          {"weight_decay", cfg.weight_decay},
          {"batch_size", cfg.batch_size},
          {"bins", cfg.bins},
          {"loss", loss_name(cfg.loss)},
          {"balanced", cfg.balanced},
          {"seed", cfg.seed},
          {"eval_interval", cfg.eval_interval},
          {"classes_per_batch", cfg.classes_per_batch},
          {"triplet",
           {{"margin", cfg.triplet.margin},
            {"triplets_per_update", cfg.triplet.triplets_per_update},
            {"pool_size", cfg.triplet.pool_size},
            {"refresh_period", cfg.triplet.refresh_period},
            {"hardest", cfg.triplet.hardest}}}};
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig read_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  TrainConfig cfg;
  try {
    nlohmann::json j;
    in >> j;
    read_field(j, "lr0", cfg.lr0);
    read_field(j, "total_iters", cfg.total_iters);
    read_field(j, "weight_decay", cfg.weight_decay);
    read_field(j, "batch_size", cfg.batch_size);
    read_field(j, "bins", cfg.bins);
    if (j.contains("loss")) cfg.loss = parse_loss(j.at("loss").get<std::string>());
    read_field(j, "balanced", cfg.balanced);
    read_field(j, "seed", cfg.seed);
    read_field(j, "eval_interval", cfg.eval_interval);
    read_field(j, "classes_per_batch", cfg.classes_per_batch);
    if (j.contains("triplet")) {
      const auto& t = j.at("triplet");
      read_field(t, "margin", cfg.triplet.margin);
      read_field(t, "triplets_per_update", cfg.triplet.triplets_per_update);
      read_field(t, "pool_size", cfg.triplet.pool_size);
      read_field(t, "refresh_period", cfg.triplet.refresh_period);
      read_field(t, "hardest", cfg.triplet.hardest);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, path.string() + ": " + e.what());
  }
  validate(cfg);
  return cfg;
}

void write_train_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out << to_json(cfg).dump(2) << '\n';
}

double lr_schedule(std::size_t t, const TrainConfig& cfg) {
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.total_iters);
  return cfg.lr0 * std::max(0.0, 1.0 - frac);
}

AdamState AdamState::for_params(const Params& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void adam_step(Params& params, const Params& grads, AdamState& state, double lr, double weight_decay,
               const AdamConstants& k) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "Adam: parameter, gradient and state lists differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(k.beta1, t);
  const double correction2 = 1.0 - std::pow(k.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].values;
    const auto& g = grads[i].values;
    auto& m = state.first_moment[i].values;
    auto& v = state.second_moment[i].values;
    if (g.size() != theta.size() || m.size() != theta.size()) {
      throw Error(Errc::ShapeMismatch, "Adam: tensor " + params[i].name + " shape mismatch");
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j] + weight_decay * theta[j];
      m[j] = k.beta1 * m[j] + (1.0 - k.beta1) * gj;
      v[j] = k.beta2 * v[j] + (1.0 - k.beta2) * gj * gj;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + k.epsilon);
    }
  }
}

// ---- synthetic data ----

SyntheticDataset make_synthetic(const SyntheticSpec& spec) {
  const std::size_t k = spec.num_classes;
  const std::size_t f = spec.feature_dim;
  if (k == 0 || f == 0) throw Error(Errc::InvalidArgument, "synthetic dataset needs classes and features");
  std::size_t blocks = 1;
  if (!spec.class_block.empty()) {
    if (spec.class_block.size() != k) throw Error(Errc::InvalidArgument, "class_block must have one entry per class");
    blocks = 1 + *std::max_element(spec.class_block.begin(), spec.class_block.end());
  }
  if (spec.signal_dim == 0 || blocks * spec.signal_dim > f) {
    throw Error(Errc::InvalidArgument, "signal blocks do not fit in the feature dimension");
  }
  std::vector<std::size_t> counts = spec.class_counts;
  if (counts.empty()) counts.assign(k, spec.samples_per_class);
  if (counts.size() != k) throw Error(Errc::InvalidArgument, "class_counts must have one entry per class");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd gauss(f, f);
  for (Eigen::Index r = 0; r < gauss.rows(); ++r) {
    for (Eigen::Index c = 0; c < gauss.cols(); ++c) gauss(r, c) = normal(rng);
  }
  const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();

  const std::size_t signal_end = blocks * spec.signal_dim;
  SyntheticDataset data;
  data.num_classes = k;
  for (std::size_t cls = 0; cls < k; ++cls) {
    const std::size_t block = spec.class_block.empty() ? 0 : spec.class_block[cls];
    const std::size_t lo = block * spec.signal_dim;
    const std::size_t hi = lo + spec.signal_dim;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(signal_end));
    for (std::size_t i = lo; i < hi; ++i) centroid(static_cast<Eigen::Index>(i)) = spec.class_separation * normal(rng);

    const std::size_t n = counts[cls];
    std::vector<FeatureVector> samples;
    for (std::size_t s = 0; s < n; ++s) {
      Eigen::VectorXd z(f);
      for (std::size_t i = 0; i < f; ++i) {
        z(static_cast<Eigen::Index>(i)) =
            i < signal_end ? centroid(static_cast<Eigen::Index>(i)) + spec.signal_noise * normal(rng)
                           : spec.nuisance_noise * normal(rng);
      }
      const Eigen::VectorXd x = (spec.gain * (rotation * z)).array().tanh();
      samples.emplace_back(x.data(), x.data() + x.size());
    }

    const std::size_t q = spec.queries_per_class;
    if (n < q + 3) {
      throw Error(Errc::InvalidArgument, "class " + std::to_string(cls) + " has too few samples for the splits");
    }
    const std::size_t rest = n - q;
    const std::size_t db = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(spec.db_fraction * static_cast<double>(rest))), 1, rest - 2);
    for (std::size_t s = 0; s < n; ++s) {
      Split& dst = s < q ? data.eval_queries : (s < q + db ? data.eval_db : data.train);
      dst.features.push_back(std::move(samples[s]));
      dst.labels.push_back(static_cast<int>(cls));
      dst.ids.push_back("c" + std::to_string(cls) + "_" + std::to_string(s));
    }
  }
  return data;
}

std::vector<RelevanceJudgment> eval_judgments(const SyntheticDataset& data) {
  std::map<int, std::set<std::string>> by_class;
  for (std::size_t i = 0; i < data.eval_db.size(); ++i) by_class[data.eval_db.labels[i]].insert(data.eval_db.ids[i]);
  std::vector<RelevanceJudgment> out;
  for (std::size_t i = 0; i < data.eval_queries.size(); ++i) {
    RelevanceJudgment j;
    j.query_id = data.eval_queries.ids[i];
    j.easy = by_class[data.eval_queries.labels[i]];
    out.push_back(std::move(j));
  }
  return out;
}

// ---- batches ----

Batch sample_batch(const Split& train, std::size_t batch_size, std::mt19937_64& rng, std::size_t classes_per_batch) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) by_class[train.labels[i]].push_back(i);

  std::vector<int> classes;
  for (const auto& [cls, rows] : by_class) classes.push_back(cls);
  if (classes_per_batch > 0 && classes_per_batch < classes.size()) {
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(classes_per_batch);
    std::sort(classes.begin(), classes.end());
  }
  if (batch_size < 2 * classes.size()) {
    throw Error(Errc::BatchTooSmall, "batch of " + std::to_string(batch_size) + " cannot hold 2 images of each of " +
                                         std::to_string(classes.size()) + " classes");
  }

  Batch batch;
  std::vector<std::size_t> leftover;
  for (int cls : classes) {
    auto rows = by_class[cls];
    if (rows.size() < 2) throw Error(Errc::SingletonClass, "class " + std::to_string(cls) + " has fewer than 2 training images");
    std::shuffle(rows.begin(), rows.end(), rng);
    batch.indices.push_back(rows[0]);
    batch.indices.push_back(rows[1]);
    leftover.insert(leftover.end(), rows.begin() + 2, rows.end());
  }
  const std::size_t extra = batch_size - batch.indices.size();
  if (extra > leftover.size()) {
    throw Error(Errc::InvalidArgument, "batch of " + std::to_string(batch_size) + " exceeds the " +
                                           std::to_string(batch.indices.size() + leftover.size()) + " eligible images");
  }
  std::sort(leftover.begin(), leftover.end());
  std::shuffle(leftover.begin(), leftover.end(), rng);
  batch.indices.insert(batch.indices.end(), leftover.begin(), leftover.begin() + static_cast<std::ptrdiff_t>(extra));
  std::shuffle(batch.indices.begin(), batch.indices.end(), rng);

  for (std::size_t i : batch.indices) {
    batch.features.push_back(train.features[i]);
    batch.labels.class_of.push_back(train.labels[i]);
  }
  return batch;
}

// ---- triplet baseline ----

double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n, double margin,
                    TripletGrads* grads) {
  double d_ap = 0.0, d_an = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d_ap += (a[i] - p[i]) * (a[i] - p[i]);
    d_an += (a[i] - n[i]) * (a[i] - n[i]);
  }
  const double hinge = margin + d_ap - d_an;
  const double loss = std::max(0.0, hinge) / 2.0;
  if (grads != nullptr) {
    grads->anchor.assign(a.size(), 0.0);
    grads->positive.assign(a.size(), 0.0);
    grads->negative.assign(a.size(), 0.0);
    if (hinge > 0.0) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        grads->anchor[i] = n[i] - p[i];
        grads->positive[i] = p[i] - a[i];
        grads->negative[i] = a[i] - n[i];
      }
    }
  }
  return loss;
}

TripletStepResult triplet_loss_step(const Embedder& model, const Split& train, const TripletConfig& cfg,
                                    TripletMiner& miner, StagePlan& plan, std::mt19937_64& rng) {
  if (!miner.primed || miner.updates_since_refresh >= cfg.refresh_period) {
    miner.pool.resize(train.size());
    std::iota(miner.pool.begin(), miner.pool.end(), std::size_t{0});
    if (cfg.pool_size > 0 && cfg.pool_size < train.size()) {
      std::shuffle(miner.pool.begin(), miner.pool.end(), rng);
      miner.pool.resize(cfg.pool_size);
      std::sort(miner.pool.begin(), miner.pool.end());
    }
    std::vector<FeatureVector> pool_features;
    for (std::size_t i : miner.pool) pool_features.push_back(train.features[i]);
    miner.pool_descriptors = embed_all(model, pool_features);
    plan.record_forwards(miner.pool.size());
    miner.updates_since_refresh = 0;
    miner.primed = true;
  }

  std::map<int, std::vector<std::size_t>> by_class;  // pool positions
  for (std::size_t pos = 0; pos < miner.pool.size(); ++pos) by_class[train.labels[miner.pool[pos]]].push_back(pos);
  std::vector<std::size_t> anchors;
  for (const auto& [cls, positions] : by_class) {
    if (positions.size() >= 2) anchors.insert(anchors.end(), positions.begin(), positions.end());
  }
  if (anchors.empty() || by_class.size() < 2) {
    throw Error(Errc::NoValidTriplet, "mining pool has no anchor-positive pair with a negative");
  }

  TripletStepResult out{0.0, ParamGradAccumulator::for_model(model)};
  std::uniform_int_distribution<std::size_t> pick_anchor(0, anchors.size() - 1);
  for (std::size_t t = 0; t < cfg.triplets_per_update; ++t) {
    const std::size_t a_pos = anchors[pick_anchor(rng)];
    const int a_cls = train.labels[miner.pool[a_pos]];
    const auto& same = by_class[a_cls];
    std::size_t p_pos = a_pos;
    std::uniform_int_distribution<std::size_t> pick_pos(0, same.size() - 1);
    while (p_pos == a_pos) p_pos = same[pick_pos(rng)];

    // hardest negatives by cached similarity to the anchor
    std::vector<std::pair<double, std::size_t>> negatives;
    const auto anchor_desc = miner.pool_descriptors.row(a_pos);
    for (std::size_t pos = 0; pos < miner.pool.size(); ++pos) {
      if (train.labels[miner.pool[pos]] == a_cls) continue;
      negatives.emplace_back(kernels::dot(anchor_desc, miner.pool_descriptors.row(pos)), pos);
    }
    const std::size_t keep = std::min(cfg.hardest, negatives.size());
    std::partial_sort(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(keep), negatives.end(),
                      [](const auto& x, const auto& y) {
                        return x.first > y.first || (x.first == y.first && x.second < y.second);
                      });
    std::uniform_int_distribution<std::size_t> pick_neg(0, keep - 1);
    const std::size_t n_pos = negatives[pick_neg(rng)].second;

    auto [da, ta] = model.forward_taped(train.features[miner.pool[a_pos]]);
    auto [dp, tp] = model.forward_taped(train.features[miner.pool[p_pos]]);
    auto [dn, tn] = model.forward_taped(train.features[miner.pool[n_pos]]);
    TripletGrads g;
    out.loss += triplet_loss(da, dp, dn, cfg.margin, &g);
    model.backward(*ta, g.anchor, out.acc.grads);
    model.backward(*tp, g.positive, out.acc.grads);
    model.backward(*tn, g.negative, out.acc.grads);
    out.acc.accumulated += 3;
    plan.record_forwards(3);
    plan.record_backwards(3);
  }
  ++miner.updates_since_refresh;
  return out;
}

void account_triplet_update(StagePlan& plan, const TripletConfig& cfg, std::size_t pool_size,
                            std::size_t update_index) {
  if (update_index % cfg.refresh_period == 0) plan.record_forwards(pool_size);
  plan.record_forwards(3 * cfg.triplets_per_update);
  plan.record_backwards(3 * cfg.triplets_per_update);
  plan.record_update();
}

// ---- evaluation ----

Matrix embed_all(const Embedder& model, const std::vector<FeatureVector>& features) {
  Matrix out(features.size(), model.output_dim());
  parallel_for(features.size(), [&](std::size_t i) {
    const auto d = model.forward(features[i]);
    std::copy(d.begin(), d.end(), out.row(i).begin());
  });
  return out;
}

EvalSummary evaluate_model(const Embedder& model, const SyntheticDataset& data) {
  const DescriptorMatrix queries(embed_all(model, data.eval_queries.features));
  const DescriptorMatrix db(embed_all(model, data.eval_db.features));
  EvalSummary out;
  out.detail = evaluate_retrieval(queries, data.eval_queries.ids, db, data.eval_db.ids, eval_judgments(data),
                                  Protocol::Medium);
  out.map = out.detail.map;

  std::map<std::string, int> class_of;
  for (std::size_t i = 0; i < data.eval_queries.size(); ++i) class_of[data.eval_queries.ids[i]] = data.eval_queries.labels[i];
  std::map<int, std::pair<double, std::size_t>> per_class;
  for (const auto& q : out.detail.per_query) {
    auto& slot = per_class[class_of.at(q.query_id)];
    slot.first += q.ap;
    ++slot.second;
  }
  double sum = 0.0;
  for (const auto& [cls, acc] : per_class) sum += acc.first / static_cast<double>(acc.second);
  out.per_class_map = per_class.empty() ? 0.0 : sum / static_cast<double>(per_class.size());
  return out;
}

std::string history_json(const HistoryRecord& r) {
  nlohmann::json j{{"iter", r.iter},
                   {"loss", r.loss},
                   {"lr", r.lr},
                   {"eval_map", r.eval_map ? nlohmann::json(*r.eval_map) : nlohmann::json(nullptr)},
                   {"counters",
                    {{"forwards", r.counters.forwards},
                     {"backwards", r.counters.backwards},
                     {"updates", r.counters.updates}}}};
  return j.dump();
}

TrainResult train(Embedder& model, const SyntheticDataset& data, const TrainConfig& cfg) {
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed);
  const BinGrid grid(cfg.bins);
  const MultistageConfig ms{cfg.loss == LossKind::TieAware ? ApVariant::TieAware : ApVariant::Quantized,
                            cfg.balanced ? Balancing::ClassBalanced : Balancing::Uniform};
  StagePlan plan(cfg.loss == LossKind::Triplet ? cfg.triplet.triplets_per_update : cfg.batch_size);
  AdamState adam = AdamState::for_params(model.params());
  TripletMiner miner;

  TrainResult result;
  const EvalSummary initial = evaluate_model(model, data);
  result.initial_map = initial.map;
  result.initial_per_class_map = initial.per_class_map;
  result.final_map = initial.map;
  result.final_per_class_map = initial.per_class_map;

  for (std::size_t it = 0; it < cfg.total_iters; ++it) {
    const double lr = lr_schedule(it, cfg);
    double loss = 0.0;
    Params grads;
    if (cfg.loss == LossKind::Triplet) {
      auto step = triplet_loss_step(model, data.train, cfg.triplet, miner, plan, rng);
      loss = step.loss;
      grads = std::move(step.acc.grads);
    } else {
      const Batch batch = sample_batch(data.train, cfg.batch_size, rng, cfg.classes_per_batch);
      auto step = multistage_step(model, batch.features, batch.labels, grid, ms, plan);
      loss = step.loss;
      grads = std::move(step.acc.grads);
    }
    adam_step(model.params(), grads, adam, lr, cfg.weight_decay);
    plan.record_update();

    HistoryRecord rec{it + 1, loss, lr, std::nullopt, plan.counters()};
    if ((it + 1) % cfg.eval_interval == 0 || it + 1 == cfg.total_iters) {
      const EvalSummary ev = evaluate_model(model, data);
      rec.eval_map = ev.map;
      result.final_map = ev.map;
      result.final_per_class_map = ev.per_class_map;
    }
    result.history.push_back(rec);
  }
  plan.add_wall_seconds(std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  result.counters = plan.counters();
  return result;
}

BudgetCounters dry_run_counters(LossKind loss, std::size_t batch_size, std::size_t iters, const TripletConfig& triplet,
                                std::size_t pool_size) {
  StagePlan plan(batch_size);
  if (loss == LossKind::Triplet) {
    TripletConfig cfg = triplet;
    cfg.triplets_per_update = batch_size;
    for (std::size_t u = 0; u < iters; ++u) account_triplet_update(plan, cfg, pool_size, u);
  } else {
    for (std::size_t u = 0; u < iters; ++u) account_multistage_step(plan, batch_size);
  }
  return plan.counters();
}

}  // namespace listap

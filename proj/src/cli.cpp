#include "listap/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include <CLI11.hpp>

#include "listap/ap_exact.hpp"
#include "listap/ap_gradients.hpp"
#include "listap/desc_io.hpp"
#include "listap/error.hpp"
#include "listap/multistage.hpp"
#include "listap/query_expansion.hpp"
#include "listap/report.hpp"
#include "listap/training.hpp"
#include "listap/whitening.hpp"

namespace listap {
namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw CLI::ValidationError("--balanced", "expected true or false, got '" + s + "'");
}

struct EvalArgs {
  std::string queries, db, gt, protocol = "medium", out;
  std::size_t k = 10;
  double alpha = 2.0;
  bool qe = false;
};

struct TrainArgs {
  std::string config, out, loss, balanced;
  std::size_t batch = 0, bins = 0, iters = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double lr = -1.0;
  std::size_t classes = 32, features = 64, dim = 32, per_class = 40;
  std::string embedder = "linear";
};

void print_eval(const RetrievalEval& ev, Protocol protocol, std::ostream& out, std::ostream& err,
                const std::string& csv_path) {
  for (const auto& id : ev.excluded) err << "warning: query " << id << " has no positives under the " << protocol_name(protocol) << " protocol; excluded\n";
  if (ev.per_query.empty()) throw Error(Errc::EmptyQuerySet, "no query has a positive under the protocol");
  out << "mAP(" << protocol_name(protocol) << ")=" << fmt6(ev.map) << '\n';
  std::ofstream file;
  std::ostream* csv = &out;
  if (!csv_path.empty()) {
    file.open(csv_path);
    if (!file) throw Error(Errc::Io, "cannot open " + csv_path + " for writing");
    csv = &file;
  }
  *csv << "query_id,ap\n";
  for (const auto& q : ev.per_query) *csv << q.query_id << ',' << fmt6(q.ap) << '\n';
}

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Protocol protocol = parse_protocol(a.protocol);
  const auto q = read_labeled(a.queries);
  const auto d = read_labeled(a.db);
  const auto gt = read_ground_truth(a.gt);
  const DescriptorMatrix db(d.rows);
  DescriptorMatrix queries(q.rows);
  if (a.qe) queries = DescriptorMatrix(alpha_qe(queries, db, {a.k, a.alpha, true}));
  print_eval(evaluate_retrieval(queries, q.ids, db, d.ids, gt, protocol), protocol, out, err, a.out);
  return 0;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = read_train_config(a.config);
  if (!a.loss.empty()) cfg.loss = parse_loss(a.loss);
  if (!a.balanced.empty()) cfg.balanced = parse_bool(a.balanced);
  if (a.batch > 0) cfg.batch_size = a.batch;
  if (a.bins > 0) cfg.bins = a.bins;
  if (a.iters > 0) cfg.total_iters = a.iters;
  if (a.seed_set) cfg.seed = a.seed;
  if (a.lr >= 0.0) cfg.lr0 = a.lr;
  validate(cfg);

  SyntheticSpec spec;
  spec.num_classes = a.classes;
  spec.feature_dim = a.features;
  spec.samples_per_class = a.per_class;
  spec.seed = cfg.seed;
  const SyntheticDataset data = make_synthetic(spec);

  std::unique_ptr<Embedder> model;
  if (a.embedder == "linear") {
    model = std::make_unique<LinearEmbedder>(a.features, a.dim, cfg.seed + 1);
  } else if (a.embedder == "mlp") {
    model = std::make_unique<MlpEmbedder>(a.features, 2 * a.dim, a.dim, cfg.seed + 1);
  } else if (a.embedder == "gem_parts") {
    model = std::make_unique<GemPartsEmbedder>(a.features, 4, a.dim, cfg.seed + 1);
  } else {
    throw CLI::ValidationError("--embedder", "expected linear, mlp or gem_parts");
  }

  const TrainResult result = train(*model, data, cfg);

  if (!a.out.empty()) {
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    write_train_config(dir / "config.json", cfg);
    std::ofstream hist(dir / "history.jsonl");
    if (!hist) throw Error(Errc::Io, "cannot write " + (dir / "history.jsonl").string());
    for (const auto& r : result.history) hist << history_json(r) << '\n';
    std::ofstream counters(dir / "counters.json");
    counters << counters_json(result.counters) << '\n';

    auto dump_split = [&](const Split& split, const std::string& name) {
      LabeledDescriptors ld{embed_all(*model, split.features), split.ids, {}};
      for (int c : split.labels) ld.classes.push_back(std::to_string(c));
      write_labeled(dir / name, ld);
    };
    dump_split(data.eval_queries, "queries.desc");
    dump_split(data.eval_db, "db.desc");
    dump_split(data.train, "train.desc");
    write_ground_truth(dir / "gt.json", eval_judgments(data));
  }

  out << "loss=" << loss_name(cfg.loss) << " iters=" << cfg.total_iters << " initial_mAP=" << fmt6(result.initial_map)
      << " final_mAP=" << fmt6(result.final_map) << '\n';
  out << "backwards=" << result.counters.backwards << " forwards=" << result.counters.forwards
      << " updates=" << result.counters.updates << " wall_seconds=" << fmt6(result.counters.wall_seconds) << '\n';
  return 0;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Listwise AP training, evaluation and descriptor tools", "listap"};
  app.require_subcommand(1);

  // train
  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train an embedder on a synthetic dataset");
  train_cmd->add_option("--config", ta.config, "Run config JSON");
  train_cmd->add_option("--loss", ta.loss, "ap_q | tie_aware | triplet")->check(CLI::IsMember({"ap_q", "tie_aware", "triplet"}));
  train_cmd->add_option("--B", ta.batch, "Batch size (triplets per update for triplet)");
  train_cmd->add_option("--M", ta.bins, "Quantization bins");
  train_cmd->add_option("--iters", ta.iters, "Training iterations");
  train_cmd->add_option("--balanced", ta.balanced, "true | false")->check(CLI::IsMember({"true", "false"}));
  auto* seed_opt = train_cmd->add_option("--seed", ta.seed, "Random seed");
  train_cmd->add_option("--lr", ta.lr, "Initial learning rate");
  train_cmd->add_option("--classes", ta.classes, "Synthetic classes");
  train_cmd->add_option("--features", ta.features, "Raw feature dimension");
  train_cmd->add_option("--dim", ta.dim, "Descriptor dimension");
  train_cmd->add_option("--per-class", ta.per_class, "Samples per class");
  train_cmd->add_option("--embedder", ta.embedder, "linear | mlp | gem_parts");
  train_cmd->add_option("--out", ta.out, "Output directory");

  // eval
  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Exact mAP under a protocol");
  eval_cmd->add_option("--queries", ea.queries)->required();
  eval_cmd->add_option("--db", ea.db)->required();
  eval_cmd->add_option("--gt", ea.gt)->required();
  eval_cmd->add_option("--protocol", ea.protocol, "medium | hard");
  eval_cmd->add_flag("--qe", ea.qe, "Apply alpha query expansion first");
  eval_cmd->add_option("--k", ea.k, "QE neighbours");
  eval_cmd->add_option("--alpha", ea.alpha, "QE exponent");
  eval_cmd->add_option("--out", ea.out, "Per-query CSV path (default stdout)");

  // whiten
  std::string w_db, w_queries, w_out;
  std::size_t w_keep = 0;
  bool w_signed_sqrt = false;
  auto* whiten_cmd = app.add_subcommand("whiten", "Fit PCA whitening on --db and apply it to --queries");
  whiten_cmd->add_option("--db", w_db, "Descriptors to fit on")->required();
  whiten_cmd->add_option("--queries", w_queries, "Descriptors to transform (default: --db)");
  whiten_cmd->add_option("--keep", w_keep, "Components to keep (0 = all)");
  whiten_cmd->add_flag("--signed-sqrt", w_signed_sqrt, "Signed square root before normalizing");
  whiten_cmd->add_option("--out", w_out)->required();

  // qe
  std::string qe_queries, qe_db, qe_out, qe_self = "true";
  std::size_t qe_k = 10;
  double qe_alpha = 2.0;
  auto* qe_cmd = app.add_subcommand("qe", "Alpha-weighted query expansion");
  qe_cmd->add_option("--queries", qe_queries)->required();
  qe_cmd->add_option("--db", qe_db)->required();
  qe_cmd->add_option("--k", qe_k);
  qe_cmd->add_option("--alpha", qe_alpha);
  qe_cmd->add_option("--qe-include-self", qe_self)->check(CLI::IsMember({"true", "false"}));
  qe_cmd->add_option("--out", qe_out)->required();

  // gradcheck
  std::uint64_t g_seed = 0;
  std::size_t g_b = 8, g_c = 4, g_m = kDefaultBins;
  std::string g_loss = "ap_q", g_balanced = "false";
  double g_h = 1e-6, g_tol = 1e-4;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Analytic vs finite-difference loss gradient");
  grad_cmd->add_option("--seed", g_seed);
  grad_cmd->add_option("--B", g_b);
  grad_cmd->add_option("--C", g_c);
  grad_cmd->add_option("--M", g_m);
  grad_cmd->add_option("--loss", g_loss, "ap_q | tie_aware")->check(CLI::IsMember({"ap_q", "tie_aware"}));
  grad_cmd->add_option("--balanced", g_balanced)->check(CLI::IsMember({"true", "false"}));
  grad_cmd->add_option("--step", g_h, "Finite-difference step");
  grad_cmd->add_option("--tol", g_tol, "Relative tolerance");

  // report
  EvalArgs ra;
  auto* report_cmd = app.add_subcommand("report", "Top-k results tagged positive/negative, plus the worst queries");
  report_cmd->add_option("--queries", ra.queries)->required();
  report_cmd->add_option("--db", ra.db)->required();
  report_cmd->add_option("--gt", ra.gt)->required();
  report_cmd->add_option("--protocol", ra.protocol);
  report_cmd->add_option("--k", ra.k);
  report_cmd->add_option("--out", ra.out, "Report JSON path");

  // counters
  std::size_t c_b = 4096, c_iters = 200, c_pool = 0;
  std::string c_loss = "ap_q", c_out;
  auto* counters_cmd = app.add_subcommand("counters", "Training budget of a run, without running it");
  counters_cmd->add_option("--B", c_b, "Batch size, or triplets per update for triplet");
  counters_cmd->add_option("--iters", c_iters, "Iterations (updates)");
  counters_cmd->add_option("--loss", c_loss)->check(CLI::IsMember({"ap_q", "tie_aware", "triplet"}));
  counters_cmd->add_option("--pool", c_pool, "Triplet mining pool size");
  counters_cmd->add_option("--out", c_out, "Counter JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) {
      ta.seed_set = seed_opt->count() > 0;
      return run_train(ta, out);
    }
    if (eval_cmd->parsed()) return run_eval(ea, out, err);
    if (whiten_cmd->parsed()) {
      const auto fit = read_labeled(w_db);
      WhiteningModel model = fit_whitening(DescriptorMatrix(fit.rows), w_keep);
      model.signed_sqrt = w_signed_sqrt;
      auto target = w_queries.empty() ? fit : read_labeled(w_queries);
      target.rows = apply_whitening(model, target.rows);
      write_labeled(w_out, target);
      out << "whitened " << target.rows.rows() << " descriptors to dim " << model.output_dim() << '\n';
      return 0;
    }
    if (qe_cmd->parsed()) {
      auto q = read_labeled(qe_queries);
      const auto d = read_labeled(qe_db);
      q.rows = alpha_qe(DescriptorMatrix(q.rows), DescriptorMatrix(d.rows), {qe_k, qe_alpha, qe_self == "true"});
      write_labeled(qe_out, q);
      out << "expanded " << q.rows.rows() << " queries (k=" << qe_k << ", alpha=" << fmt6(qe_alpha) << ")\n";
      return 0;
    }
    if (grad_cmd->parsed()) {
      const BinGrid grid(g_m);
      const auto inst = random_grad_instance(g_seed, g_b, g_c, grid);
      GradCheckOptions opts;
      opts.variant = parse_variant(g_loss);
      opts.balancing = g_balanced == "true" ? Balancing::ClassBalanced : Balancing::Uniform;
      opts.step = g_h;
      opts.tolerance = g_tol;
      const auto r = grad_check(inst.rows, inst.labels, grid, opts);
      if (r.step_out_of_range) {
        err << "step " << g_h << " outside [" << kMinStep << ", " << kMaxStep << "]: numeric noise dominates\n";
        out << "FAIL step-out-of-range\n";
        return 2;
      }
      out << "max_abs_err=" << fmt6(r.max_abs_err) << " max_rel_err=" << fmt6(r.max_rel_err)
          << " checked=" << r.checked_entries << " excluded=" << r.excluded_entries << " kinks=" << r.kink_count
          << '\n'
          << (r.passed ? "PASS" : "FAIL") << " at tol " << fmt6(g_tol) << '\n';
      return r.passed ? 0 : 2;
    }
    if (report_cmd->parsed()) {
      const Protocol protocol = parse_protocol(ra.protocol);
      const auto q = read_labeled(ra.queries);
      const auto d = read_labeled(ra.db);
      const auto report = cmd_report(DescriptorMatrix(q.rows), q.ids, DescriptorMatrix(d.rows), d.ids,
                                     read_ground_truth(ra.gt), protocol, ra.k);
      for (const auto& id : report.excluded) err << "notice: query " << id << " excluded (no positives under " << report.protocol << ")\n";
      out << report_table(report);
      if (!ra.out.empty()) {
        std::ofstream f(ra.out);
        if (!f) throw Error(Errc::Io, "cannot open " + ra.out + " for writing");
        f << report_json(report) << '\n';
      }
      return 0;
    }
    if (counters_cmd->parsed()) {
      const LossKind loss = parse_loss(c_loss);
      const BudgetCounters c = dry_run_counters(loss, c_b, c_iters, TripletConfig{}, c_pool);
      out << "backwards=" << c.backwards << " forwards=" << c.forwards << " updates=" << c.updates << '\n';
      if (!c_out.empty()) {
        std::ofstream f(c_out);
        if (!f) throw Error(Errc::Io, "cannot open " + c_out + " for writing");
        f << counters_json(c) << '\n';
      }
      return 0;
    }
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace listap

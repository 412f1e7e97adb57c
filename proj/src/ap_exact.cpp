#include "listap/ap_exact.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "listap/error.hpp"
#include "listap/kernels.hpp"
#include "listap/parallel.hpp"

namespace listap {

std::size_t count_relevant(std::span<const std::uint8_t> relevant) {
  std::size_t n = 0;
  for (auto y : relevant) n += (y != 0);
  return n;
}

std::vector<std::size_t> rank(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double precision_at_k(std::span<const double> scores, std::span<const std::uint8_t> relevant, std::size_t k) {
  if (scores.size() != relevant.size()) throw Error(Errc::DimensionMismatch, "scores and labels differ in length");
  if (k < 1 || k > scores.size()) {
    throw Error(Errc::OutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
  }
  const auto order = rank(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += (relevant[order[i]] != 0);
  return static_cast<double>(hits) / static_cast<double>(k);
}

double exact_ap(std::span<const double> scores, std::span<const std::uint8_t> relevant) {
  if (scores.size() != relevant.size()) throw Error(Errc::DimensionMismatch, "scores and labels differ in length");
  const std::size_t total = count_relevant(relevant);
  if (total == 0) throw Error(Errc::NoRelevantItems, "AP is undefined without relevant items");
  const auto order = rank(scores);
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (relevant[order[k]] == 0) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(total);
}

MapResult exact_map(const std::vector<std::vector<double>>& scores, const std::vector<Relevance>& relevant) {
  if (scores.size() != relevant.size()) throw Error(Errc::DimensionMismatch, "score and label row counts differ");
  MapResult out;
  for (std::size_t q = 0; q < scores.size(); ++q) {
    if (count_relevant(relevant[q]) == 0) {
      out.skipped.push_back(q);
      continue;
    }
    out.per_query.push_back(exact_ap(scores[q], relevant[q]));
  }
  if (out.per_query.empty()) throw Error(Errc::EmptyQuerySet, "no query with a relevant item");
  double sum = 0.0;
  for (double ap : out.per_query) sum += ap;
  out.map = sum / static_cast<double>(out.per_query.size());
  return out;
}

void validate(const RelevanceJudgment& j) {
  const std::set<std::string>* sets[] = {&j.easy, &j.hard, &j.unclear};
  for (const auto* s : sets) {
    if (s->contains(j.query_id)) throw Error(Errc::InvalidArgument, "judgment for " + j.query_id + " lists the query itself");
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      for (const auto& id : *sets[a]) {
        if (sets[b]->contains(id)) {
          throw Error(Errc::InvalidArgument, "judgment for " + j.query_id + " puts " + id + " in two sets");
        }
      }
    }
  }
}

Protocol parse_protocol(std::string_view name) {
  if (name == "medium") return Protocol::Medium;
  if (name == "hard") return Protocol::Hard;
  throw Error(Errc::UnknownProtocol, "unknown protocol '" + std::string(name) + "' (expected medium or hard)");
}

std::string_view protocol_name(Protocol p) { return p == Protocol::Medium ? "medium" : "hard"; }

ProtocolView protocol_view(const RelevanceJudgment& j, Protocol protocol) {
  ProtocolView v;
  switch (protocol) {
    case Protocol::Medium:
      v.positives = j.easy;
      v.positives.insert(j.hard.begin(), j.hard.end());
      v.ignored = j.unclear;
      break;
    case Protocol::Hard:
      v.positives = j.hard;
      v.ignored = j.unclear;
      v.ignored.insert(j.easy.begin(), j.easy.end());
      break;
  }
  return v;
}

FilteredRanking filtered_ranking(std::span<const double> query, const DescriptorMatrix& db,
                                 const std::vector<std::string>& db_ids, const std::string& query_id,
                                 const ProtocolView& view) {
  if (query.size() != db.dim()) throw Error(Errc::DimensionMismatch, "query and database dimensions differ");
  if (db_ids.size() != db.count()) throw Error(Errc::DimensionMismatch, "database id count differs from rows");
  std::vector<std::size_t> rows;
  std::vector<double> scores;
  for (std::size_t i = 0; i < db.count(); ++i) {
    const auto& id = db_ids[i];
    if (id == query_id || view.ignored.contains(id)) continue;
    rows.push_back(i);
    scores.push_back(kernels::dot(query, db.row(i)));
  }
  FilteredRanking out;
  for (std::size_t k : rank(scores)) {
    out.db_rows.push_back(rows[k]);
    out.scores.push_back(scores[k]);
    out.relevant.push_back(view.positives.contains(db_ids[rows[k]]) ? 1 : 0);
  }
  return out;
}

RetrievalEval evaluate_retrieval(const DescriptorMatrix& queries, const std::vector<std::string>& query_ids,
                                 const DescriptorMatrix& db, const std::vector<std::string>& db_ids,
                                 const std::vector<RelevanceJudgment>& judgments, Protocol protocol) {
  if (queries.dim() != db.dim()) {
    throw Error(Errc::DimensionMismatch, "query dim " + std::to_string(queries.dim()) + " != database dim " +
                                             std::to_string(db.dim()));
  }
  if (query_ids.size() != queries.count()) throw Error(Errc::DimensionMismatch, "query id count differs from rows");
  std::map<std::string, const RelevanceJudgment*> by_id;
  for (const auto& j : judgments) by_id[j.query_id] = &j;

  const std::size_t nq = queries.count();
  std::vector<double> ap(nq, -1.0);
  parallel_for(nq, [&](std::size_t q) {
    auto it = by_id.find(query_ids[q]);
    if (it == by_id.end()) return;
    const auto view = protocol_view(*it->second, protocol);
    const auto ranking = filtered_ranking(queries.row(q), db, db_ids, query_ids[q], view);
    if (count_relevant(ranking.relevant) == 0) return;
    ap[q] = exact_ap(ranking.scores, ranking.relevant);
  });

  RetrievalEval out;
  double sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    if (ap[q] < 0.0) {
      out.excluded.push_back(query_ids[q]);
      continue;
    }
    out.per_query.push_back({query_ids[q], ap[q]});
    sum += ap[q];
  }
  if (!out.per_query.empty()) out.map = sum / static_cast<double>(out.per_query.size());
  return out;
}

std::vector<RelevanceJudgment> read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(Errc::Format, path.string() + ": ground truth must be a JSON array");
  std::vector<RelevanceJudgment> out;
  auto id_string = [](const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("query_id")) {
      throw Error(Errc::Format, path.string() + ": each entry needs a query_id");
    }
    RelevanceJudgment j;
    j.query_id = id_string(entry.at("query_id"));
    for (auto [key, set] : {std::pair{"easy", &j.easy}, std::pair{"hard", &j.hard}, std::pair{"unclear", &j.unclear}}) {
      if (!entry.contains(key)) continue;
      for (const auto& id : entry.at(key)) set->insert(id_string(id));
    }
    validate(j);
    out.push_back(std::move(j));
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<RelevanceJudgment>& judgments) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& j : judgments) {
    doc.push_back({{"query_id", j.query_id}, {"easy", j.easy}, {"hard", j.hard}, {"unclear", j.unclear}});
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

}  // namespace listap

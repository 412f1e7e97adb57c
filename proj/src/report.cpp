#include "listap/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "listap/error.hpp"

namespace listap {

RankingReport cmd_report(const DescriptorMatrix& queries, const std::vector<std::string>& query_ids,
                         const DescriptorMatrix& db, const std::vector<std::string>& db_ids,
                         const std::vector<RelevanceJudgment>& judgments, Protocol protocol, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidArgument, "report needs k >= 1");
  const RetrievalEval eval = evaluate_retrieval(queries, query_ids, db, db_ids, judgments, protocol);

  std::map<std::string, const RelevanceJudgment*> by_id;
  for (const auto& j : judgments) by_id[j.query_id] = &j;
  std::map<std::string, std::size_t> row_of;
  for (std::size_t q = 0; q < query_ids.size(); ++q) row_of.emplace(query_ids[q], q);

  RankingReport report;
  report.protocol = std::string(protocol_name(protocol));
  report.k = k;
  report.excluded = eval.excluded;
  report.map = eval.map;
  for (const auto& qa : eval.per_query) {
    const std::size_t row = row_of.at(qa.query_id);
    const auto view = protocol_view(*by_id.at(qa.query_id), protocol);
    const auto ranking = filtered_ranking(queries.row(row), db, db_ids, qa.query_id, view);
    QueryReport qr{qa.query_id, qa.ap, {}};
    for (std::size_t r = 0; r < std::min(k, ranking.db_rows.size()); ++r) {
      qr.top.push_back({db_ids[ranking.db_rows[r]], ranking.scores[r],
                        ranking.relevant[r] != 0 ? ResultTag::Positive : ResultTag::Negative});
    }
    report.queries.push_back(std::move(qr));
  }

  std::vector<std::size_t> order(report.queries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.queries[a].ap < report.queries[b].ap; });
  for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
    report.worst.push_back(report.queries[order[i]].query_id);
  }
  return report;
}

std::string report_json(const RankingReport& report) {
  nlohmann::json queries = nlohmann::json::array();
  for (const auto& q : report.queries) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& item : q.top) {
      top.push_back({{"id", item.id},
                     {"score", item.score},
                     {"tag", item.tag == ResultTag::Positive ? "positive" : "negative"}});
    }
    queries.push_back({{"query_id", q.query_id}, {"ap", q.ap}, {"top", top}});
  }
  nlohmann::json doc{{"protocol", report.protocol}, {"k", report.k},         {"map", report.map},
                     {"queries", queries},          {"worst", report.worst}, {"excluded", report.excluded}};
  return doc.dump(1);
}

std::string report_table(const RankingReport& report) {
  std::ostringstream out;
  char buf[64];
  out << "protocol " << report.protocol << ", top-" << report.k << " (+ positive, - negative)\n";
  for (const auto& q : report.queries) {
    std::snprintf(buf, sizeof(buf), "%-16.16s %8.6f ", q.query_id.c_str(), q.ap);
    out << buf;
    for (const auto& item : q.top) {
      out << ' ' << (item.tag == ResultTag::Positive ? '+' : '-') << item.id;
    }
    out << '\n';
  }
  out << "worst:";
  for (const auto& id : report.worst) out << ' ' << id;
  out << '\n';
  for (const auto& id : report.excluded) out << "excluded (no positives): " << id << '\n';
  return out.str();
}

}  // namespace listap

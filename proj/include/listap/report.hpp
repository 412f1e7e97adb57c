#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "listap/ap_exact.hpp"

namespace listap {

enum class ResultTag { Positive, Negative };

struct RankedItem {
  std::string id;
  double score = 0.0;
  ResultTag tag = ResultTag::Negative;
};

struct QueryReport {
  std::string query_id;
  double ap = 0.0;
  std::vector<RankedItem> top;  // ignored items never appear
};

struct RankingReport {
  std::string protocol;
  std::size_t k = 0;
  std::vector<QueryReport> queries;     // excluded queries omitted
  std::vector<std::string> excluded;    // no positives under the protocol
  std::vector<std::string> worst;       // up to 3 query ids, lowest AP first
  double map = 0.0;
};

RankingReport cmd_report(const DescriptorMatrix& queries, const std::vector<std::string>& query_ids,
                         const DescriptorMatrix& db, const std::vector<std::string>& db_ids,
                         const std::vector<RelevanceJudgment>& judgments, Protocol protocol, std::size_t k = 10);

std::string report_json(const RankingReport& report);
// Fixed-width table, one line per query: id, AP, then top-k ids marked + / -.
std::string report_table(const RankingReport& report);

}  // namespace listap

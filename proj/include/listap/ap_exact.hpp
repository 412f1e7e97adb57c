#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "listap/numerics.hpp"

namespace listap {

// Y^q: entries are 0 or 1.
using Relevance = std::vector<std::uint8_t>;

std::size_t count_relevant(std::span<const std::uint8_t> relevant);

// Indices sorted by descending score; ties keep ascending index order.
std::vector<std::size_t> rank(std::span<const double> scores);

// k is 1-based. Throws OutOfRange unless 1 <= k <= N.
double precision_at_k(std::span<const double> scores, std::span<const std::uint8_t> relevant, std::size_t k);

// Σ_k P_k Δr_k over the ranked list. Throws NoRelevantItems when N^q = 0.
double exact_ap(std::span<const double> scores, std::span<const std::uint8_t> relevant);

struct MapResult {
  double map = 0.0;
  std::vector<double> per_query;       // one entry per scored row
  std::vector<std::size_t> skipped;    // rows with no relevant item
};

MapResult exact_map(const std::vector<std::vector<double>>& scores, const std::vector<Relevance>& relevant);

struct RelevanceJudgment {
  std::string query_id;
  std::set<std::string> easy;
  std::set<std::string> hard;
  std::set<std::string> unclear;
};

// Throws InvalidArgument when the sets overlap or contain the query itself.
void validate(const RelevanceJudgment& j);

enum class Protocol { Medium, Hard };

Protocol parse_protocol(std::string_view name);
std::string_view protocol_name(Protocol p);

struct ProtocolView {
  std::set<std::string> positives;
  std::set<std::string> ignored;
};

ProtocolView protocol_view(const RelevanceJudgment& j, Protocol protocol);

struct QueryAp {
  std::string query_id;
  double ap = 0.0;
};

struct RetrievalEval {
  std::vector<QueryAp> per_query;       // in query order, excluded queries omitted
  double map = 0.0;
  std::vector<std::string> excluded;    // queries with no positive under the protocol
};

// One query's database ranking after protocol filtering.
struct FilteredRanking {
  std::vector<std::size_t> db_rows;     // surviving database rows in ranked order
  Relevance relevant;                   // aligned with db_rows
  std::vector<double> scores;           // aligned with db_rows
};

FilteredRanking filtered_ranking(std::span<const double> query, const DescriptorMatrix& db,
                                 const std::vector<std::string>& db_ids, const std::string& query_id,
                                 const ProtocolView& view);

// Queries and judgments are matched by id; a query without a judgment counts
// as having no positives. A query id present in the database is ignored for
// that query.
RetrievalEval evaluate_retrieval(const DescriptorMatrix& queries, const std::vector<std::string>& query_ids,
                                 const DescriptorMatrix& db, const std::vector<std::string>& db_ids,
                                 const std::vector<RelevanceJudgment>& judgments, Protocol protocol);

std::vector<RelevanceJudgment> read_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const std::vector<RelevanceJudgment>& judgments);

}  // namespace listap

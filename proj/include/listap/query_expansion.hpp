#pragma once

#include <cstddef>
#include <span>

#include "listap/numerics.hpp"

namespace listap {

struct QueryExpansionOptions {
  std::size_t k = 10;
  double alpha = 2.0;
  bool include_self = true;  // the query enters with weight sim(q, q)^α = 1
};

// normalize(q + Σ_{top-k} max(sim_i, 0)^α d_i). Throws TooFewItems when the
// database has fewer than k rows.
Descriptor alpha_qe(std::span<const double> query, const DescriptorMatrix& db, const QueryExpansionOptions& options = {});
Matrix alpha_qe(const DescriptorMatrix& queries, const DescriptorMatrix& db, const QueryExpansionOptions& options = {});

}  // namespace listap

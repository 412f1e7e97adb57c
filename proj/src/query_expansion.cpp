#include "listap/query_expansion.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "listap/ap_exact.hpp"
#include "listap/error.hpp"
#include "listap/kernels.hpp"
#include "listap/parallel.hpp"

namespace listap {

Descriptor alpha_qe(std::span<const double> query, const DescriptorMatrix& db, const QueryExpansionOptions& options) {
  if (query.size() != db.dim()) throw Error(Errc::DimensionMismatch, "query and database dimensions differ");
  if (options.k == 0 || db.count() < options.k) {
    throw Error(Errc::TooFewItems, "query expansion needs k=" + std::to_string(options.k) + " neighbours, database has " +
                                       std::to_string(db.count()));
  }
  std::vector<double> sims(db.count());
  for (std::size_t i = 0; i < db.count(); ++i) sims[i] = kernels::dot(query, db.row(i));
  const auto order = rank(sims);

  std::vector<double> expanded(query.size(), 0.0);
  if (options.include_self) kernels::axpy(1.0, query, expanded);
  for (std::size_t r = 0; r < options.k; ++r) {
    const std::size_t i = order[r];
    const double w = std::pow(std::max(sims[i], 0.0), options.alpha);
    if (w > 0.0) kernels::axpy(w, db.row(i), expanded);
  }
  return l2_normalize(expanded);
}

Matrix alpha_qe(const DescriptorMatrix& queries, const DescriptorMatrix& db, const QueryExpansionOptions& options) {
  Matrix out(queries.count(), queries.dim());
  parallel_for(queries.count(), [&](std::size_t q) {
    const auto d = alpha_qe(queries.row(q), db, options);
    std::copy(d.begin(), d.end(), out.row(q).begin());
  });
  return out;
}

}  // namespace listap

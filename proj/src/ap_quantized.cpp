#include "listap/ap_quantized.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "listap/error.hpp"

namespace listap {
namespace {

double checked_score(double x) {
  if (!(std::abs(x) <= 1.0 + kUnitTolerance)) {
    throw Error(Errc::OutOfDomain, "score " + std::to_string(x) + " outside [-1, 1]");
  }
  return std::clamp(x, -1.0, 1.0);
}

void check_bin(const BinGrid& grid, std::size_t m) {
  if (m >= grid.size()) {
    throw Error(Errc::OutOfRange, "bin " + std::to_string(m) + " outside grid of " + std::to_string(grid.size()));
  }
}

double dot_labels(std::span<const double> row, std::span<const std::uint8_t> relevant) {
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (relevant[i] != 0) s += row[i];
  }
  return s;
}

double sum(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s;
}

}  // namespace

BinGrid::BinGrid(std::size_t bins) : bins_(bins), delta_(0.0) {
  if (bins < 2) throw Error(Errc::InvalidArgument, "bin grid needs M >= 2, got " + std::to_string(bins));
  delta_ = 2.0 / static_cast<double>(bins - 1);
}

double soft_assign(double x, const BinGrid& grid, std::size_t m) {
  check_bin(grid, m);
  const double v = checked_score(x);
  return std::max(1.0 - std::abs(v - grid.center(m)) / grid.delta(), 0.0);
}

SoftAssignment soft_assignment(std::span<const double> scores, const BinGrid& grid) {
  SoftAssignment out{Matrix(grid.size(), scores.size())};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t m = 0; m < grid.size(); ++m) out.values(m, i) = soft_assign(scores[i], grid, m);
  }
  return out;
}

CumulativeAssignment cumulative(const SoftAssignment& assign) {
  const auto& a = assign.values;
  CumulativeAssignment out{Matrix(a.rows(), a.cols())};
  for (std::size_t m = 0; m < a.rows(); ++m) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      out.values(m, i) = a(m, i) + (m > 0 ? out.values(m - 1, i) : 0.0);
    }
  }
  return out;
}

double quantized_precision(const SoftAssignment& assign, const CumulativeAssignment& cum,
                           std::span<const std::uint8_t> relevant, std::size_t m) {
  (void)assign;
  if (m >= cum.values.rows()) throw Error(Errc::OutOfRange, "bin index out of range");
  const auto row = cum.values.row(m);
  const double denom = sum(row);
  if (denom < kEmptyBinMass) return 0.0;
  return dot_labels(row, relevant) / denom;
}

double quantized_incremental_recall(const SoftAssignment& assign, std::span<const std::uint8_t> relevant,
                                    std::size_t m) {
  if (m >= assign.values.rows()) throw Error(Errc::OutOfRange, "bin index out of range");
  const std::size_t total = count_relevant(relevant);
  if (total == 0) throw Error(Errc::NoRelevantItems, "incremental recall undefined without relevant items");
  return dot_labels(assign.values.row(m), relevant) / static_cast<double>(total);
}

double tie_aware_precision(const SoftAssignment& assign, const CumulativeAssignment& cum,
                           std::span<const std::uint8_t> relevant, std::size_t m) {
  if (m >= assign.values.rows()) throw Error(Errc::OutOfRange, "bin index out of range");
  const auto here = assign.values.row(m);
  double num = 1.0 + dot_labels(here, relevant);
  double den = 1.0 + sum(here);
  if (m > 0) {
    const auto before = cum.values.row(m - 1);
    num += 2.0 * dot_labels(before, relevant);
    den += 2.0 * sum(before);
  }
  return num / den;
}

ApVariant parse_variant(std::string_view name) {
  if (name == "ap_q" || name == "quantized") return ApVariant::Quantized;
  if (name == "tie_aware") return ApVariant::TieAware;
  throw Error(Errc::InvalidArgument, "unknown AP variant '" + std::string(name) + "'");
}

std::string_view variant_name(ApVariant v) { return v == ApVariant::Quantized ? "ap_q" : "tie_aware"; }

double ap_q(std::span<const double> scores, std::span<const std::uint8_t> relevant, const BinGrid& grid,
            ApVariant variant) {
  if (scores.size() != relevant.size()) throw Error(Errc::DimensionMismatch, "scores and labels differ in length");
  return detail::ap_from_histogram(detail::histogram(scores, relevant, grid), variant);
}

Relevance BatchLabels::relevance_row(std::size_t q) const {
  Relevance y(class_of.size());
  for (std::size_t j = 0; j < class_of.size(); ++j) y[j] = relevant(q, j) ? 1 : 0;
  return y;
}

void require_no_singletons(const BatchLabels& labels) {
  if (labels.size() == 0) throw Error(Errc::InvalidArgument, "empty batch");
  std::map<int, std::size_t> counts;
  for (int c : labels.class_of) ++counts[c];
  for (const auto& [cls, n] : counts) {
    if (n == 1) throw Error(Errc::SingletonClass, "class " + std::to_string(cls) + " has a single batch member");
  }
}

std::vector<double> query_weights(const BatchLabels& labels, Balancing balancing) {
  const std::size_t b = labels.size();
  std::vector<double> w(b, 1.0 / static_cast<double>(b));
  if (balancing == Balancing::Uniform) return w;
  std::map<int, std::size_t> counts;
  for (int c : labels.class_of) ++counts[c];
  const double classes = static_cast<double>(counts.size());
  for (std::size_t q = 0; q < b; ++q) {
    w[q] = 1.0 / (classes * static_cast<double>(counts[labels.class_of[q]]));
  }
  return w;
}

LossResult map_q_loss(const DescriptorMatrix& d, const BatchLabels& labels, const BinGrid& grid,
                      ApVariant variant, Balancing balancing) {
  return detail::batch_loss(d.matrix(), labels, grid, variant, balancing, detail::ScoreDomain::Strict, nullptr);
}

namespace detail {

std::size_t lower_bin(double x, const BinGrid& grid) {
  const double t = (1.0 - x) / grid.delta();
  const auto last = static_cast<double>(grid.size() - 2);
  return static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, last));
}

QueryHistogram histogram(std::span<const double> scores, std::span<const std::uint8_t> relevant,
                         const BinGrid& grid) {
  QueryHistogram h;
  h.relevant_mass.assign(grid.size(), 0.0);
  h.total_mass.assign(grid.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double x = checked_score(scores[i]);
    const std::size_t lo = lower_bin(x, grid);
    const double w_lo = std::max(1.0 - std::abs(x - grid.center(lo)) / grid.delta(), 0.0);
    const double w_hi = std::max(1.0 - std::abs(x - grid.center(lo + 1)) / grid.delta(), 0.0);
    h.total_mass[lo] += w_lo;
    h.total_mass[lo + 1] += w_hi;
    if (relevant[i] != 0) {
      h.relevant_mass[lo] += w_lo;
      h.relevant_mass[lo + 1] += w_hi;
      h.num_relevant += 1.0;
    }
  }
  if (h.num_relevant == 0.0) throw Error(Errc::NoRelevantItems, "AP_Q is undefined without relevant items");
  return h;
}

double ap_from_histogram(const QueryHistogram& h, ApVariant variant) {
  const std::size_t bins = h.total_mass.size();
  double ap = 0.0;
  double rel_before = 0.0;
  double tot_before = 0.0;
  for (std::size_t m = 0; m < bins; ++m) {
    const double a = h.relevant_mass[m];
    const double c = h.total_mass[m];
    double precision = 0.0;
    if (variant == ApVariant::Quantized) {
      const double den = tot_before + c;
      precision = den < kEmptyBinMass ? 0.0 : (rel_before + a) / den;
    } else {
      precision = (1.0 + a + 2.0 * rel_before) / (1.0 + c + 2.0 * tot_before);
    }
    ap += precision * a;
    rel_before += a;
    tot_before += c;
  }
  return ap / h.num_relevant;
}

}  // namespace detail

}  // namespace listap

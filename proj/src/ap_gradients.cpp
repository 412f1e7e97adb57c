#include "listap/ap_gradients.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "listap/error.hpp"
#include "listap/kernels.hpp"
#include "listap/parallel.hpp"

namespace listap {

double soft_assign_grad(double x, const BinGrid& grid, std::size_t m) {
  if (m >= grid.size()) throw Error(Errc::OutOfRange, "bin index out of range");
  const double delta = grid.delta();
  const double x_c = std::clamp(x, -1.0, 1.0);
  const std::size_t lo = detail::lower_bin(x_c, grid);
  // sitting on an interior peak: flat everywhere
  for (std::size_t k : {lo, lo + 1}) {
    if (k > 0 && k + 1 < grid.size() && x_c == grid.center(k)) return 0.0;
  }
  if (x != x_c) return 0.0;
  if (m == lo) return 1.0 / delta;
  if (m == lo + 1) return -1.0 / delta;
  return 0.0;
}

namespace detail {

double ap_and_score_grad(std::span<const double> scores, std::span<const std::uint8_t> relevant,
                         const BinGrid& grid, ApVariant variant, std::span<double> grad_scores) {
  const QueryHistogram h = histogram(scores, relevant, grid);
  const double ap = ap_from_histogram(h, variant);

  const std::size_t bins = grid.size();
  const double n_rel = h.num_relevant;
  // bracket_k = Y_j * on_relevant[k] - common[k]; ∂AP/∂S_j = Σ_k δ'_k(S_j) bracket_k
  std::vector<double> on_relevant(bins, 0.0);
  std::vector<double> common(bins, 0.0);
  std::vector<double> precision(bins, 0.0);

  if (variant == ApVariant::Quantized) {
    std::vector<double> cum_rel(bins), cum_tot(bins);
    double ar = 0.0, at = 0.0;
    for (std::size_t m = 0; m < bins; ++m) {
      ar += h.relevant_mass[m];
      at += h.total_mass[m];
      cum_rel[m] = ar;
      cum_tot[m] = at;
      precision[m] = at < kEmptyBinMass ? 0.0 : ar / at;
    }
    // suffix sums over m >= k of Δr̂_m ∂P̂_m/∂ξ_m pieces
    double u = 0.0, v = 0.0;
    for (std::size_t k = bins; k-- > 0;) {
      if (cum_tot[k] >= kEmptyBinMass) {
        const double recall = h.relevant_mass[k] / n_rel;
        u += recall / cum_tot[k];
        v += recall * cum_rel[k] / (cum_tot[k] * cum_tot[k]);
      }
      on_relevant[k] = precision[k] / n_rel + u;
      common[k] = v;
    }
  } else {
    std::vector<double> e(bins), f(bins);
    double rel_before = 0.0, tot_before = 0.0;
    for (std::size_t m = 0; m < bins; ++m) {
      const double a = h.relevant_mass[m];
      const double num = 1.0 + a + 2.0 * rel_before;
      const double den = 1.0 + h.total_mass[m] + 2.0 * tot_before;
      precision[m] = num / den;
      e[m] = a / (n_rel * den);
      f[m] = a * num / (n_rel * den * den);
      rel_before += a;
      tot_before += h.total_mass[m];
    }
    double e_after = 0.0, f_after = 0.0;
    for (std::size_t k = bins; k-- > 0;) {
      on_relevant[k] = precision[k] / n_rel + e[k] + 2.0 * e_after;
      common[k] = f[k] + 2.0 * f_after;
      e_after += e[k];
      f_after += f[k];
    }
  }

  for (std::size_t j = 0; j < scores.size(); ++j) {
    const double x = std::clamp(scores[j], -1.0, 1.0);
    const std::size_t lo = lower_bin(x, grid);
    const std::size_t first = lo > 0 ? lo - 1 : 0;
    const std::size_t last = std::min(bins - 1, lo + 2);
    double g = 0.0;
    for (std::size_t k = first; k <= last; ++k) {
      const double slope = soft_assign_grad(x, grid, k);
      if (slope == 0.0) continue;
      g += slope * ((relevant[j] != 0 ? on_relevant[k] : 0.0) - common[k]);
    }
    grad_scores[j] = g;
  }
  return ap;
}

LossResult batch_loss(const Matrix& rows, const BatchLabels& labels, const BinGrid& grid, ApVariant variant,
                      Balancing balancing, ScoreDomain domain, Matrix* grad_rows) {
  const std::size_t b = rows.rows();
  const std::size_t c = rows.cols();
  if (labels.size() != b) {
    throw Error(Errc::ShapeMismatch, std::to_string(labels.size()) + " labels for " + std::to_string(b) + " descriptors");
  }
  require_no_singletons(labels);

  Matrix s(b, b);
  kernels::active().gemm_nt(rows.data().data(), b, rows.data().data(), b, c, s.data().data(), b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double& v = s(i, j);
      if (i == j) {
        v = 1.0;
      } else if (domain == ScoreDomain::Strict && !(std::abs(v) <= 1.0 + kUnitTolerance)) {
        throw Error(Errc::OutOfDomain, "similarity " + std::to_string(v) + " between rows " + std::to_string(i) +
                                           " and " + std::to_string(j) + " outside [-1, 1]");
      } else {
        v = std::clamp(v, -1.0, 1.0);
      }
    }
  }

  const auto weights = query_weights(labels, balancing);
  LossResult out;
  out.per_query_ap.assign(b, 0.0);
  Matrix g_scores;
  if (grad_rows != nullptr) g_scores = Matrix(b, b);

  parallel_for(b, [&](std::size_t q) {
    const Relevance y = labels.relevance_row(q);
    if (grad_rows != nullptr) {
      out.per_query_ap[q] = ap_and_score_grad(s.row(q), y, grid, variant, g_scores.row(q));
    } else {
      out.per_query_ap[q] = ap_from_histogram(histogram(s.row(q), y, grid), variant);
    }
  });

  double map = 0.0;
  for (std::size_t q = 0; q < b; ++q) map += weights[q] * out.per_query_ap[q];
  out.loss = 1.0 - map;

  if (grad_rows != nullptr) {
    // ∂ℓ/∂d_i = -Σ_j (w_i g^i_j + w_j g^j_i) d_j over j != i
    Matrix sym(b, b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        sym(i, j) = i == j ? 0.0 : -(weights[i] * g_scores(i, j) + weights[j] * g_scores(j, i));
      }
    }
    Matrix rows_t(c, b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < c; ++k) rows_t(k, i) = rows(i, k);
    }
    *grad_rows = Matrix(b, c);
    parallel_for(b, [&](std::size_t i) {
      kernels::active().gemm_nt(sym.row(i).data(), 1, rows_t.data().data(), c, b, grad_rows->row(i).data(), c);
    });
  }
  return out;
}

}  // namespace detail

LossAndGrad loss_backward_descriptors(const DescriptorMatrix& d, const BatchLabels& labels, const BinGrid& grid,
                                      ApVariant variant, Balancing balancing) {
  LossAndGrad out;
  auto r = detail::batch_loss(d.matrix(), labels, grid, variant, balancing, detail::ScoreDomain::Strict,
                              &out.buffer.grads);
  out.loss = r.loss;
  out.per_query_ap = std::move(r.per_query_ap);
  return out;
}

double distance_to_kink(double x, const BinGrid& grid) {
  const double t = (1.0 - x) / grid.delta();
  const double nearest = std::clamp(std::round(t), 0.0, static_cast<double>(grid.size() - 1));
  return std::abs(x - grid.center(static_cast<std::size_t>(nearest)));
}

KinkMap kink_map(std::span<const double> scores, const BinGrid& grid, double radius) {
  KinkMap map;
  map.radius = radius;
  const double delta = grid.delta();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const double dist = std::abs(scores[i] - grid.center(m));
      if (std::abs(dist) <= radius || std::abs(dist - delta) <= radius) map.entries.emplace_back(i, m);
    }
  }
  return map;
}

GradCheckReport grad_check(const Matrix& rows, const BatchLabels& labels, const BinGrid& grid,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  const double h = options.step;
  if (!(h >= kMinStep && h <= kMaxStep)) {
    report.step_out_of_range = true;
    return report;
  }
  const std::size_t b = rows.rows();
  const std::size_t c = rows.cols();

  Matrix analytic;
  detail::batch_loss(rows, labels, grid, options.variant, options.balancing, detail::ScoreDomain::Clamp, &analytic);

  Matrix s(b, b);
  kernels::scalar::gemm_nt(rows.data().data(), b, rows.data().data(), b, c, s.data().data(), b);
  const double radius = kKinkRadiusFraction * grid.delta();
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> off_diag;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) off_diag.push_back(s(i, j));
    }
    report.kink_count += kink_map(off_diag, grid, radius).entries.size();
  }

  auto loss_at = [&](const Matrix& m) {
    return detail::batch_loss(m, labels, grid, options.variant, options.balancing, detail::ScoreDomain::Clamp,
                              nullptr)
        .loss;
  };

  Matrix probe = rows;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      // moving d_ik by ±h moves S_ij by ±h d_jk; skip if that can reach a kink
      bool near_kink = false;
      for (std::size_t j = 0; j < b && !near_kink; ++j) {
        if (j == i) continue;
        const double reach = std::max(radius, 2.0 * h * std::abs(rows(j, k)));
        near_kink = distance_to_kink(std::clamp(s(i, j), -1.0, 1.0), grid) <= reach;
      }
      if (near_kink) {
        ++report.excluded_entries;
        continue;
      }
      const double orig = rows(i, k);
      probe(i, k) = orig + h;
      const double up = loss_at(probe);
      probe(i, k) = orig - h;
      const double down = loss_at(probe);
      probe(i, k) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic(i, k);
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-6});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, rel_err);
      ++report.checked_entries;
    }
  }
  report.passed = report.max_rel_err <= options.tolerance;
  return report;
}

bool kink_free(const Matrix& rows, const BinGrid& grid) {
  const std::size_t b = rows.rows();
  const double radius = kKinkRadiusFraction * grid.delta();
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      const double s = kernels::scalar::dot(rows.row(i).data(), rows.row(j).data(), rows.cols());
      if (distance_to_kink(std::clamp(s, -1.0, 1.0), grid) <= radius) return false;
    }
  }
  return true;
}

GradInstance random_grad_instance(std::uint64_t seed, std::size_t batch, std::size_t dim, const BinGrid& grid,
                                  bool require_kink_free) {
  if (batch < 2 || dim == 0) throw Error(Errc::InvalidArgument, "instance needs B >= 2 and C >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t classes = std::max<std::size_t>(1, batch / 3);
  std::vector<int> class_of;
  for (std::size_t c = 0; c < classes; ++c) class_of.insert(class_of.end(), 2, static_cast<int>(c));
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  while (class_of.size() < batch) class_of.push_back(pick(rng));
  std::shuffle(class_of.begin(), class_of.end(), rng);

  GradInstance inst{Matrix(batch, dim), BatchLabels{class_of}, 0};
  for (;;) {
    for (std::size_t i = 0; i < batch; ++i) {
      std::vector<double> x(dim);
      for (double& v : x) v = normal(rng);
      const auto d = l2_normalize(x);
      std::copy(d.begin(), d.end(), inst.rows.row(i).begin());
    }
    if (!require_kink_free || kink_free(inst.rows, grid)) return inst;
    ++inst.redraws;
  }
}

}  // namespace listap

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "listap/ap_exact.hpp"
#include "listap/ap_quantized.hpp"
#include "listap/error.hpp"
#include "support/oracles.hpp"

using namespace listap;

TEST_CASE("bin grid") {
  const BinGrid g(5);
  CHECK(g.delta() == 0.5);
  CHECK(g.center(0) == 1.0);
  CHECK(g.center(4) == -1.0);
  for (std::size_t m = 1; m < 5; ++m) CHECK(g.center(m - 1) - g.center(m) == doctest::Approx(0.5));
  CHECK_THROWS_AS(BinGrid(1), Error);
}

TEST_CASE("soft_assign examples") {
  const BinGrid g(3);
  CHECK(soft_assign(0.5, g, 1) == 0.5);
  for (std::size_t m = 0; m < 3; ++m) CHECK(soft_assign(g.center(m), g, m) == 1.0);
  CHECK(soft_assign(1.0, g, 2) == 0.0);
  CHECK(soft_assign(-0.2, g, 0) == 0.0);
  CHECK(soft_assign(1.0 + 5e-7, g, 0) == 1.0);
  try {
    soft_assign(1.01, g, 0);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfDomain);
  }
}

TEST_CASE("partition of unity") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 10000; ++t) {
    const BinGrid g(2 + rng() % 60);
    const double x = u(rng);
    double s = 0;
    for (std::size_t m = 0; m < g.size(); ++m) s += soft_assign(x, g, m);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("quantized precision and recall") {
  const BinGrid g(5);
  const std::vector<double> all_rel{0.9, 0.2, -0.6};
  const Relevance ones{1, 1, 1};
  const auto a = soft_assignment(all_rel, g);
  const auto c = cumulative(a);
  for (std::size_t m = 0; m < 5; ++m) {
    const double p = quantized_precision(a, c, ones, m);
    CHECK((p == 1.0 || p == 0.0));
    CHECK(tie_aware_precision(a, c, ones, m) == 1.0);
  }
  const std::vector<double> neg{-0.9};
  const auto an = soft_assignment(neg, g);
  CHECK(quantized_precision(an, cumulative(an), Relevance{1}, 0) == 0.0);
  // empty mass: smoothing gives 1
  const std::vector<double> low{-1.0};
  const auto al = soft_assignment(low, g);
  CHECK(tie_aware_precision(al, cumulative(al), Relevance{0}, 0) == 1.0);

  // single relevant at a bin center
  const std::vector<double> one{g.center(3), 0.1};
  const auto ao = soft_assignment(one, g);
  for (std::size_t m = 0; m < 5; ++m) CHECK(quantized_incremental_recall(ao, Relevance{1, 0}, m) == (m == 3 ? 1.0 : 0.0));
  CHECK_THROWS_AS(quantized_incremental_recall(ao, Relevance{0, 0}, 0), Error);
}

TEST_CASE("hard assignments reproduce bin precision") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 200; ++t) {
    const BinGrid g(3 + rng() % 10);
    std::vector<double> s;
    Relevance y;
    const std::size_t n = 1 + rng() % 25;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back(g.center(rng() % g.size()));
      y.push_back(rng() % 2);
    }
    const auto a = soft_assignment(s, g);
    const auto c = cumulative(a);
    for (std::size_t m = 0; m < g.size(); ++m) {
      std::size_t above = 0, rel = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (s[i] >= g.center(m) - 1e-12) {
          ++above;
          rel += y[i];
        }
      }
      const double expect = above ? static_cast<double>(rel) / static_cast<double>(above) : 0.0;
      CHECK(quantized_precision(a, c, y, m) == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("recall telescopes and matches direct evaluation") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const BinGrid g(2 + rng() % 30);
    std::vector<double> s;
    Relevance y;
    for (int i = 0; i < 12; ++i) {
      s.push_back(u(rng));
      y.push_back(rng() % 2);
    }
    y[0] = 1;
    const auto a = soft_assignment(s, g);
    const auto c = cumulative(a);
    const double nq = static_cast<double>(count_relevant(y));
    double sum = 0;
    for (std::size_t m = 0; m < g.size(); ++m) {
      const double r = quantized_incremental_recall(a, y, m);
      double direct = 0, rel_above = 0, all_above = 0, prev_rel = 0, prev_all = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = std::max(1.0 - std::abs(s[i] - g.center(m)) / g.delta(), 0.0);
        direct += d * y[i] / nq;
        double cum = 0;
        for (std::size_t k = 0; k <= m; ++k) cum += std::max(1.0 - std::abs(s[i] - g.center(k)) / g.delta(), 0.0);
        rel_above += cum * y[i];
        all_above += cum;
        prev_rel += (cum - d) * y[i];
        prev_all += cum - d;
      }
      CHECK(r == doctest::Approx(direct).epsilon(1e-13));
      sum += r;
      const double bin_rel = direct * nq;
      double bin_all = 0;
      for (std::size_t i = 0; i < s.size(); ++i) bin_all += std::max(1.0 - std::abs(s[i] - g.center(m)) / g.delta(), 0.0);
      CHECK(tie_aware_precision(a, c, y, m) ==
            doctest::Approx((1 + bin_rel + 2 * prev_rel) / (1 + bin_all + 2 * prev_all)).epsilon(1e-13));
      if (all_above >= 1e-12) CHECK(quantized_precision(a, c, y, m) == doctest::Approx(rel_above / all_above).epsilon(1e-13));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("ap_q examples") {
  const BinGrid g20(20);
  CHECK(ap_q(std::vector<double>{0.3, -0.4, 0.9}, Relevance{1, 1, 1}, g20) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(ap_q(std::vector<double>{.9, .8, .7}, Relevance{1, 0, 1}, BinGrid(10001)) - 5.0 / 6.0) <= 1e-3);
  // one item per bin center
  std::mt19937_64 rng(44);
  for (int t = 0; t < 100; ++t) {
    const BinGrid g(4 + rng() % 20);
    std::vector<std::size_t> bins(g.size());
    std::iota(bins.begin(), bins.end(), 0);
    std::shuffle(bins.begin(), bins.end(), rng);
    std::vector<double> s;
    Relevance y;
    for (std::size_t i = 0; i < 1 + rng() % g.size(); ++i) {
      s.push_back(g.center(bins[i]));
      y.push_back(rng() % 2);
    }
    y[0] = 1;
    CHECK(ap_q(s, y, g) == doctest::Approx(exact_ap(s, y)).epsilon(1e-13));
  }
}

TEST_CASE("ap_q matches the formula oracle and stays in range") {
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t bins = 2 + rng() % 40;
    const BinGrid g(bins);
    std::vector<double> s;
    Relevance y;
    for (std::size_t i = 0; i < 1 + rng() % 30; ++i) {
      s.push_back(u(rng));
      y.push_back(rng() % 2);
    }
    y[0] = 1;
    for (auto v : {ApVariant::Quantized, ApVariant::TieAware}) {
      const double a = ap_q(s, y, g, v);
      CHECK(a == doctest::Approx(oracle::ap_q(s, std::vector<std::uint8_t>(y), bins, v == ApVariant::TieAware)).epsilon(1e-12));
      CHECK(a >= 0.0);
      CHECK(a <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("ap_q permutation invariance") {
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const BinGrid g(20);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s;
    Relevance y;
    for (int i = 0; i < 20; ++i) {
      s.push_back(u(rng));
      y.push_back(rng() % 2);
    }
    y[3] = 1;
    std::vector<std::size_t> p(20);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    std::vector<double> sp;
    Relevance yp;
    for (auto i : p) {
      sp.push_back(s[i]);
      yp.push_back(y[i]);
    }
    for (auto v : {ApVariant::Quantized, ApVariant::TieAware}) {
      CHECK(ap_q(sp, yp, g, v) == doctest::Approx(ap_q(s, y, g, v)).epsilon(1e-14));
    }
  }
}

TEST_CASE("ap_q gap to exact AP shrinks with M") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<std::size_t> grid_sizes{20, 100, 1000, 10001};
  std::vector<double> mean_gap(grid_sizes.size(), 0.0), snapped_gap(grid_sizes.size(), 0.0);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> s;
    Relevance y;
    for (int i = 0; i < 50; ++i) {
      s.push_back(u(rng));
      y.push_back(rng() % 3 == 0);
    }
    y[0] = 1;
    const double ap = exact_ap(s, y);
    for (std::size_t k = 0; k < grid_sizes.size(); ++k) {
      const BinGrid g(grid_sizes[k]);
      mean_gap[k] += std::abs(ap_q(s, y, g) - ap) / 30;
      std::vector<double> c;
      for (double x : s) c.push_back(g.center(static_cast<std::size_t>(std::lround((1.0 - x) / g.delta()))));
      snapped_gap[k] += std::abs(ap_q(c, y, g) - exact_ap(c, y)) / 30;
    }
  }
  for (std::size_t k = 1; k < grid_sizes.size(); ++k) CHECK(mean_gap[k] <= mean_gap[k - 1]);
  // on bin centers only items sharing a bin blur, which vanishes with M
  CHECK(snapped_gap.back() <= 1e-3);
}

TEST_CASE("ap_q self-mass bias does not depend on M") {
  // one negative ranked first; the positive sits a fraction t below a center
  for (std::size_t bins : {101, 1001, 10001}) {
    const BinGrid g(bins);
    for (double t : {0.0, 0.25, 0.5, 0.75}) {
      const std::vector<double> s{0.9, g.center(bins / 2) - t * g.delta()};
      const double bias = -(1 - t) * t / (2 * (2 - t));
      CHECK(ap_q(s, Relevance{0, 1}, g) == doctest::Approx(0.5 + bias).epsilon(1e-9));
    }
  }
}

TEST_CASE("query weights") {
  const BatchLabels equal{{0, 0, 1, 1, 2, 2}};
  const auto wu = query_weights(equal, Balancing::Uniform);
  const auto wb = query_weights(equal, Balancing::ClassBalanced);
  CHECK(wu == wb);

  const BatchLabels skew{{0, 0, 0, 0, 0, 1, 1, 2, 2, 2}};
  const auto w = query_weights(skew, Balancing::ClassBalanced);
  double total = 0;
  std::map<int, double> per_class;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += w[i];
    per_class[skew.class_of[i]] += w[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  for (auto& [c, v] : per_class) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  try {
    require_no_singletons(BatchLabels{{0, 0, 1}});
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingletonClass);
  }
}

TEST_CASE("map_q_loss") {
  const BinGrid g(20);
  const auto same = DescriptorMatrix::from_rows({{0.6, 0.8}, {0.6, 0.8}});
  const auto r = map_q_loss(same, BatchLabels{{0, 0}}, g);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-14));
  for (double ap : r.per_query_ap) CHECK(ap == doctest::Approx(1.0));

  std::mt19937_64 rng(48);
  std::normal_distribution<double> n;
  for (int t = 0; t < 20; ++t) {
    std::vector<Descriptor> rows;
    BatchLabels labels;
    for (int i = 0; i < 16; ++i) {
      rows.push_back(l2_normalize(std::vector<double>{n(rng), n(rng), n(rng), n(rng), n(rng)}));
      labels.class_of.push_back(i % 4);
    }
    std::shuffle(labels.class_of.begin(), labels.class_of.end(), rng);
    const auto d = DescriptorMatrix::from_rows(rows);
    const auto s = similarity_matrix(d);
    for (auto v : {ApVariant::Quantized, ApVariant::TieAware}) {
      double mean = 0;
      for (std::size_t q = 0; q < 16; ++q) {
        const auto row = s.row(q);
        mean += ap_q(std::vector<double>(row.begin(), row.end()), labels.relevance_row(q), g, v) / 16.0;
      }
      const auto lu = map_q_loss(d, labels, g, v, Balancing::Uniform);
      CHECK(lu.loss == doctest::Approx(1.0 - mean).epsilon(1e-13));
      CHECK(lu.loss >= 0.0);
      CHECK(lu.loss <= 1.0);
      CHECK(map_q_loss(d, labels, g, v, Balancing::ClassBalanced).loss == doctest::Approx(lu.loss).epsilon(1e-13));
    }
  }
}

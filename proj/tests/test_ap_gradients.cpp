#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "listap/ap_gradients.hpp"
#include "listap/error.hpp"

using namespace listap;

TEST_CASE("soft_assign_grad examples") {
  const BinGrid g(5);
  const double d = g.delta();
  CHECK(soft_assign_grad(g.center(2), g, 2) == 0.0);
  CHECK(soft_assign_grad(g.center(2) - 0.3 * d, g, 2) == doctest::Approx(1.0 / d));
  CHECK(soft_assign_grad(g.center(2) + 0.3 * d, g, 2) == doctest::Approx(-1.0 / d));
  CHECK(soft_assign_grad(g.center(2) + 1.5 * d, g, 2) == 0.0);
  CHECK(soft_assign_grad(1.0, g, 0) == doctest::Approx(1.0 / d));
  CHECK(soft_assign_grad(-1.0, g, 4) == doctest::Approx(-1.0 / d));
}

TEST_CASE("soft_assign_grad sums to zero") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 5000; ++t) {
    const BinGrid g(2 + rng() % 50);
    // include exact centers
    const double x = t % 5 == 0 ? g.center(rng() % g.size()) : u(rng);
    double s = 0;
    for (std::size_t m = 0; m < g.size(); ++m) s += soft_assign_grad(x, g, m);
    CHECK(std::abs(s) <= 1e-9 / g.delta());
  }
}

TEST_CASE("loss_backward_descriptors shares the forward with map_q_loss") {
  std::mt19937_64 rng(52);
  for (int t = 0; t < 20; ++t) {
    const BinGrid g(20);
    const auto inst = random_grad_instance(rng(), 12, 6, g);
    const DescriptorMatrix d(inst.rows);
    for (auto v : {ApVariant::Quantized, ApVariant::TieAware}) {
      for (auto b : {Balancing::Uniform, Balancing::ClassBalanced}) {
        const auto lg = loss_backward_descriptors(d, inst.labels, g, v, b);
        const auto lf = map_q_loss(d, inst.labels, g, v, b);
        CHECK(lg.loss == lf.loss);
        CHECK(lg.per_query_ap == lf.per_query_ap);
      }
    }
  }
}

TEST_CASE("identical pair") {
  const BinGrid g(20);
  const DescriptorMatrix d = DescriptorMatrix::from_rows({{0.6, 0.8}, {0.6, 0.8}});
  const auto lg = loss_backward_descriptors(d, BatchLabels{{0, 0}}, g);
  for (double v : lg.buffer.grads.data()) CHECK(std::isfinite(v));
  const auto rep = grad_check(d.matrix(), BatchLabels{{0, 0}}, g, {ApVariant::Quantized, Balancing::Uniform, 1e-6, 1e-4});
  CHECK(rep.max_abs_err <= 1e-5);
}

TEST_CASE("descriptor gradient has the two-term pair structure") {
  std::mt19937_64 rng(53);
  for (int t = 0; t < 10; ++t) {
    const BinGrid g(20);
    const auto inst = random_grad_instance(rng(), 10, 5, g);
    const DescriptorMatrix d(inst.rows);
    const auto s = similarity_matrix(d);
    const std::size_t b = d.count();
    for (auto bal : {Balancing::Uniform, Balancing::ClassBalanced}) {
      const auto w = query_weights(inst.labels, bal);
      Matrix gq(b, b);
      for (std::size_t q = 0; q < b; ++q) {
        const auto row = s.row(q);
        std::vector<double> grad(b);
        detail::ap_and_score_grad(row, inst.labels.relevance_row(q), g, ApVariant::Quantized, grad);
        for (std::size_t j = 0; j < b; ++j) gq(q, j) = j == q ? 0.0 : w[q] * grad[j];
      }
      const auto lg = loss_backward_descriptors(d, inst.labels, g, ApVariant::Quantized, bal);
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < d.dim(); ++k) {
          double expect = 0;
          for (std::size_t j = 0; j < b; ++j) expect -= (gq(i, j) + gq(j, i)) * d.row(j)[k];
          CHECK(lg.buffer.grads(i, k) == doctest::Approx(expect).epsilon(1e-12).scale(1.0));
        }
      }
    }
  }
}

TEST_CASE("grad_check on random kink-free instances") {
  for (std::size_t bins : {5, 20, 50}) {
    const BinGrid g(bins);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto inst = random_grad_instance(seed, 8, 4, g);
      CHECK(kink_free(inst.rows, g));
      for (auto v : {ApVariant::Quantized, ApVariant::TieAware}) {
        for (auto b : {Balancing::Uniform, Balancing::ClassBalanced}) {
          const auto rep = grad_check(inst.rows, inst.labels, g, {v, b, 1e-6, 1e-4});
          CHECK(rep.passed);
          CHECK(rep.max_rel_err <= 1e-4);
          CHECK(rep.kink_count == 0);
          CHECK(rep.checked_entries > 0);
        }
      }
    }
  }
}

TEST_CASE("grad_check step bounds") {
  const BinGrid g(20);
  const auto inst = random_grad_instance(3, 8, 4, g);
  const auto tiny = grad_check(inst.rows, inst.labels, g, {ApVariant::Quantized, Balancing::Uniform, 1e-12, 1e-4});
  CHECK(tiny.step_out_of_range);
  CHECK_FALSE(tiny.passed);
  const auto big = grad_check(inst.rows, inst.labels, g, {ApVariant::Quantized, Balancing::Uniform, 0.1, 1e-4});
  CHECK(big.step_out_of_range);
}

TEST_CASE("grad_check excludes everything when all scores sit on kinks") {
  // Δ = 1 with M = 3: every pairwise score of these rows is 0 or ±1
  const BinGrid g(3);
  Matrix rows(4, 2, {1, 0, 0, 1, -1, 0, 0, -1});
  const BatchLabels labels{{0, 0, 1, 1}};
  const auto rep = grad_check(rows, labels, g);
  CHECK(rep.passed);
  CHECK(rep.checked_entries == 0);
  CHECK(rep.excluded_entries == 8);
  CHECK(rep.kink_count >= 12);
}

TEST_CASE("kink map") {
  const BinGrid g(5);
  const std::vector<double> s{0.5, 0.51, 1e-4, 0.3};
  const auto k = kink_map(s, g, 1e-3);
  bool has0 = false, has2 = false, has1 = false;
  for (auto [i, m] : k.entries) {
    has0 |= i == 0;
    has1 |= i == 1;
    has2 |= i == 2;
  }
  CHECK(has0);
  CHECK(has2);
  CHECK_FALSE(has1);
  CHECK(distance_to_kink(0.51, g) == doctest::Approx(0.01));
}

TEST_CASE("no NaN or Inf on adversarial batches") {
  std::mt19937_64 rng(54);
  std::normal_distribution<double> n;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t b = 2 + rng() % 9, c = 1 + rng() % 5;
    const BinGrid g(2 + rng() % 30);
    Matrix rows(b, c);
    for (std::size_t i = 0; i < b; ++i) {
      const int mode = static_cast<int>(rng() % 4);
      std::vector<double> x(c);
      if (i > 0 && mode == 0) {
        // exact duplicate
        auto r = rows.row(i - 1);
        x.assign(r.begin(), r.end());
      } else if (i > 0 && mode == 1) {
        // near duplicate
        auto r = rows.row(i - 1);
        for (std::size_t k = 0; k < c; ++k) x[k] = r[k] + 1e-9 * n(rng);
      } else if (mode == 2) {
        // axis aligned, lands on bin centers
        x[rng() % c] = rng() % 2 ? 1.0 : -1.0;
      } else {
        for (auto& v : x) v = n(rng);
      }
      const auto d = l2_normalize(x);
      std::copy(d.begin(), d.end(), rows.row(i).begin());
    }
    BatchLabels labels;
    for (std::size_t i = 0; i < b; ++i) labels.class_of.push_back(static_cast<int>(i % (1 + b / 2)));
    // pair up any singleton with class 0
    std::map<int, int> count;
    for (int cl : labels.class_of) ++count[cl];
    for (auto& cl : labels.class_of) {
      if (count[cl] == 1) cl = 0;
    }
    const auto v = rng() % 2 ? ApVariant::Quantized : ApVariant::TieAware;
    const auto bal = rng() % 2 ? Balancing::Uniform : Balancing::ClassBalanced;
    const auto lg = loss_backward_descriptors(DescriptorMatrix(rows), labels, g, v, bal);
    bool finite = std::isfinite(lg.loss) && lg.loss >= -1e-12 && lg.loss <= 1 + 1e-12;
    for (double x : lg.buffer.grads.data()) finite = finite && std::isfinite(x);
    REQUIRE(finite);
  }
}

TEST_CASE("random_grad_instance") {
  const BinGrid g(20);
  const auto a = random_grad_instance(9, 8, 4, g);
  const auto b = random_grad_instance(9, 8, 4, g);
  CHECK(a.rows == b.rows);
  CHECK(a.labels.class_of == b.labels.class_of);
  CHECK_NOTHROW(require_no_singletons(a.labels));
  CHECK_NOTHROW(DescriptorMatrix(a.rows));
}

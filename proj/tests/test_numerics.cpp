#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "listap/error.hpp"
#include "listap/numerics.hpp"

using namespace listap;

namespace {

std::vector<double> randvec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

DescriptorMatrix random_descriptors(std::mt19937_64& rng, std::size_t b, std::size_t c) {
  std::vector<Descriptor> rows;
  for (std::size_t i = 0; i < b; ++i) rows.push_back(l2_normalize(randvec(rng, c)));
  return DescriptorMatrix::from_rows(rows);
}

}  // namespace

TEST_CASE("l2_normalize examples") {
  CHECK(l2_normalize(std::vector<double>{1, 0, 0, 0}) == std::vector<double>{1, 0, 0, 0});
  const auto d = l2_normalize(std::vector<double>{3, 4});
  CHECK(d[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(0.8).epsilon(1e-15));
  try {
    l2_normalize(std::vector<double>{0, 0});
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NearZeroNorm);
  }
}

TEST_CASE("l2_normalize is idempotent") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto d = l2_normalize(randvec(rng, 7));
    const auto dd = l2_normalize(d);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - dd[i]) <= 1e-12);
  }
}

TEST_CASE("l2_normalize_backward") {
  auto run = [](std::vector<double> x, std::vector<double> g) {
    auto [d, tape] = l2_normalize_taped(x);
    return l2_normalize_backward(tape, g);
  };
  const auto tangential = run({1, 0}, {0, 1});
  CHECK(tangential[0] == 0.0);
  CHECK(tangential[1] == doctest::Approx(1.0));
  const auto radial = run({1, 0}, {1, 0});
  CHECK(radial[0] == 0.0);
  CHECK(radial[1] == 0.0);

  // central differences of g·normalize(x)
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  for (int t = 0; t < 100; ++t) {
    auto x = randvec(rng, 5);
    const auto g = randvec(rng, 5);
    const auto analytic = run(x, g);
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto f = [&](double shift) {
        auto xs = x;
        xs[k] += shift;
        const auto d = l2_normalize(xs);
        double s = 0;
        for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * g[i];
        return s;
      };
      const double numeric = (f(h) - f(-h)) / (2 * h);
      CHECK(std::abs(numeric - analytic[k]) <= 1e-5);
    }
  }
}

TEST_CASE("cosine_similarity") {
  const std::vector<double> a{0.6, 0.8}, b{-0.8, 0.6}, c{-0.6, -0.8};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
  const std::vector<double> off{2.0, 0.0};
  CHECK_THROWS_AS(cosine_similarity(off, a), Error);
  const std::vector<double> short_vec{1.0};
  CHECK_THROWS_AS(cosine_similarity(short_vec, a), Error);
}

TEST_CASE("similarity_matrix") {
  const auto one = similarity_matrix(DescriptorMatrix::from_rows({{0.0, 1.0}}));
  CHECK(one.rows() == 1);
  CHECK(one(0, 0) == 1.0);
  const auto eye = similarity_matrix(DescriptorMatrix::from_rows({{1, 0}, {0, 1}}));
  CHECK(eye == Matrix(2, 2, {1, 0, 0, 1}));

  std::mt19937_64 rng(3);
  for (std::size_t b : {3, 9, 17}) {
    const auto d = random_descriptors(rng, b, 13);
    const auto s = similarity_matrix(d);
    for (std::size_t i = 0; i < b; ++i) {
      CHECK(s(i, i) == 1.0);
      for (std::size_t j = 0; j < b; ++j) {
        CHECK(s(i, j) == s(j, i));
        if (i != j) CHECK(s(i, j) == doctest::Approx(cosine_similarity(d.row(i), d.row(j))).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("DescriptorMatrix rejects non-unit rows") {
  try {
    DescriptorMatrix::from_rows({{1.0, 1.0}});
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotUnitNorm);
  }
}

TEST_CASE("gem_pool examples") {
  const auto [mean, t1] = gem_pool(Matrix(2, 2, {1, 3, 3, 1}), 1.0);
  CHECK(mean[0] == doctest::Approx(2.0));
  CHECK(mean[1] == doctest::Approx(2.0));

  const auto [mx, t2] = gem_pool(Matrix(2, 2, {1, 0.5, 0.2, 0.9}), 100.0);
  CHECK(std::abs(mx[0] - 1.0) <= 0.02);
  CHECK(std::abs(mx[1] - 0.9) <= 0.02);

  for (double p : {0.5, 1.0, 3.0, 17.0}) {
    const auto [single, t3] = gem_pool(Matrix(1, 3, {0.3, -2.0, 1.5}), p);
    CHECK(single[0] == doctest::Approx(0.3));
    CHECK(single[1] == doctest::Approx(kGemClampFloor));
    CHECK(single[2] == doctest::Approx(1.5));
  }
  try {
    gem_pool(Matrix(1, 1, {1.0}), 0.0);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidPower);
  }
}

TEST_CASE("gem_pool is monotone in p") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto v = randvec(rng, 4 * 6, 0.05, 1.0);
    const Matrix x(4, 6, v);
    double prev_p = 0.5;
    auto prev = gem_pool(x, prev_p).first;
    for (double p : {1.0, 2.0, 3.5, 8.0}) {
      const auto cur = gem_pool(x, p).first;
      for (std::size_t c = 0; c < cur.size(); ++c) CHECK(prev[c] <= cur[c] + 1e-15);
      prev = cur;
    }
  }
}

TEST_CASE("gem_pool_backward") {
  {
    const auto [g, tape] = gem_pool(Matrix(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 2, 3}), 1.0);
    const auto grad = gem_pool_backward(tape, std::vector<double>{1, 1, 1});
    for (double v : grad.input.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix x(5, 4, randvec(rng, 20, 0.1, 1.0));
    const auto w = randvec(rng, 4);
    const double p = 3.0;
    auto f = [&](const Matrix& xs, double ps) {
      const auto g = gem_pool(xs, ps).first;
      double s = 0;
      for (std::size_t c = 0; c < g.size(); ++c) s += g[c] * w[c];
      return s;
    };
    const auto [g, tape] = gem_pool(x, p);
    const auto grad = gem_pool_backward(tape, w);

    const double hp = 1e-5;
    const double dp = (f(x, p + hp) - f(x, p - hp)) / (2 * hp);
    CHECK(std::abs(dp - grad.power) <= 1e-4);

    const double hx = 1e-6;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        Matrix a = x, b = x;
        a(i, c) += hx;
        b(i, c) -= hx;
        CHECK(std::abs((f(a, p) - f(b, p)) / (2 * hx) - grad.input(i, c)) <= 1e-4);
      }
    }
  }
}

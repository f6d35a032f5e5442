#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <algorithm>

#include "s2g/core/io.hpp"
#include "s2g/core/rng.hpp"
#include "s2g/eval/metrics.hpp"
#include "support/metric_oracles.hpp"

using namespace s2g;
using namespace s2g::eval;

namespace {

std::vector<double> skewed(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = std::exp(rng.normal(0.8, 0.7)) - 0.5 * rng.uniform();
  for (double& x : v) x = std::max(0.0, x);
  return v;
}

}  // namespace

TEST_CASE("regression metric examples") {
  std::vector<double> y{1.0, 2.5, 7.0};
  auto perfect = regression_metrics(y, y);
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.msle == 0.0);
  CHECK(perfect.mad == 0.0);
  CHECK(perfect.log_mape_pct == 0.0);
  CHECK(perfect.r2 == 1.0);

  std::vector<double> z{0.0}, e{std::numbers::e - 1.0};
  CHECK(regression_metrics(z, e).msle == doctest::Approx(1.0).epsilon(1e-15));

  std::vector<double> a{1, 2, 3}, b{2, 2, 2};
  auto m = regression_metrics(a, b);
  CHECK(m.mse == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.mad == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.r2 == 0.0);

  std::vector<double> c{4, 4, 4};
  CHECK(std::isnan(regression_metrics(c, a).r2));
  CHECK_THROWS(regression_metrics(a, std::vector<double>{1, 2}));
  CHECK_THROWS(regression_metrics(std::vector<double>{-1}, std::vector<double>{1}));
}

TEST_CASE("metrics match brute-force oracles") {
  Rng rng(42);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 10 + rng.below(200);
    auto y = skewed(rng, n);
    auto p = skewed(rng, n);
    if (rep % 3 == 0) {
      for (std::size_t i = 0; i < n; ++i) p[i] = std::max(0.0, y[i] + rng.normal(0, 0.5));
    }
    const auto o = s2g::testing::oracle_metrics(y, p);
    const auto m = regression_metrics(y, p);
    CHECK(std::abs(m.mse - double(o.mse)) <= 1e-10 * std::max(1.0, double(o.mse)));
    CHECK(std::abs(m.msle - double(o.msle)) <= 1e-10);
    CHECK(std::abs(m.mad - double(o.mad)) <= 1e-10);
    CHECK(std::abs(m.log_mape_pct - double(o.log_mape_pct)) <= 1e-10 * std::max(1.0, double(o.log_mape_pct)));
    CHECK(std::abs(m.r2 - double(o.r2)) <= 1e-10);
    CHECK(std::abs(weighted_kappa(y, p).kappa - double(o.kappa)) <= 1e-10);

    // MSLE is MSE in the log1p domain.
    std::vector<double> ly(n), lp(n);
    for (std::size_t i = 0; i < n; ++i) {
      ly[i] = std::log1p(y[i]);
      lp[i] = std::log1p(p[i]);
    }
    CHECK(std::abs(m.msle - regression_metrics(ly, lp).mse) <= 1e-12);
    CHECK(m.r2 <= 1.0);
  }
}

TEST_CASE("metrics are permutation invariant") {
  Rng rng(3);
  auto y = skewed(rng, 50);
  auto p = skewed(rng, 50);
  auto base = evaluate(y, p);
  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int rep = 0; rep < 5; ++rep) {
    rng.shuffle(perm);
    std::vector<double> y2(50), p2(50);
    for (std::size_t i = 0; i < 50; ++i) {
      y2[i] = y[perm[i]];
      p2[i] = p[perm[i]];
    }
    auto r = evaluate(y2, p2);
    CHECK(r.mse == doctest::Approx(base.mse).epsilon(1e-13));
    CHECK(r.r2 == doctest::Approx(base.r2).epsilon(1e-13));
    CHECK(r.kappa == doctest::Approx(base.kappa).epsilon(1e-13));
    CHECK(r.ece == doctest::Approx(base.ece).epsilon(1e-13));
  }
  // R^2 of the mean predictor is 0.
  double mean = 0;
  for (double v : y) mean += v / 50;
  CHECK(std::abs(regression_metrics(y, std::vector<double>(50, mean)).r2) < 1e-12);
}

TEST_CASE("weighted kappa") {
  Rng rng(5);
  auto y = skewed(rng, 40);
  CHECK(weighted_kappa(y, y).kappa == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(1.0 - 1.0 / 9.0 == doctest::Approx(8.0 / 9.0));

  // 6 samples, 3 bins, confusion built by hand:
  //   true  0 0 1 1 2 2
  //   pred  0 1 1 2 2 0
  std::vector<std::size_t> a{0, 0, 1, 1, 2, 2}, b{0, 1, 1, 2, 2, 0};
  // Observed weighted agreement: weights 1, .5, 1, .5, 1, 0 -> 4/6.
  const double po = 4.0 / 6.0;
  // Marginals are uniform (2/6 each): expected = (1/9) * sum w = (1/9)(3 + 4*.5) = 5/9.
  const double pe = 5.0 / 9.0;
  CHECK(weighted_kappa_from_bins(a, b, 3) == doctest::Approx((po - pe) / (1 - pe)).epsilon(1e-15));

  // One maximally distant misassignment strictly lowers kappa.
  std::vector<std::size_t> t(50), q(50);
  for (std::size_t i = 0; i < 50; ++i) t[i] = q[i] = i % 10;
  CHECK(weighted_kappa_from_bins(t, q, 10) == doctest::Approx(1.0).epsilon(1e-15));
  q[0] = 9;
  CHECK(weighted_kappa_from_bins(t, q, 10) < 1.0);

  std::vector<double> flat(8, 2.0);
  CHECK(std::isnan(weighted_kappa(flat, flat).kappa));
  auto edges = weighted_kappa(y, y).edges;
  CHECK(edges.size() == 9);
  CHECK(std::is_sorted(edges.begin(), edges.end()));
}

TEST_CASE("reliability and ece") {
  Rng rng(9);
  auto y = skewed(rng, 57);
  CHECK(reliability_ece(y, y).ece == 0.0);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  std::vector<double> shifted(y);
  for (double& v : shifted) v += 0.75;
  CHECK(reliability_ece(y, shifted).ece == doctest::Approx(0.75 / (*hi - *lo)).epsilon(1e-12));

  // Common positive rescaling leaves the normalized error unchanged.
  auto p = skewed(rng, 57);
  std::vector<double> y3(y), p3(p);
  for (double& v : y3) v *= 3.5;
  for (double& v : p3) v *= 3.5;
  CHECK(reliability_ece(y3, p3).ece == doctest::Approx(reliability_ece(y, p).ece).epsilon(1e-12));

  // 20 points: exhaustive grouping by sorted prediction rank.
  std::vector<double> yt(20), yp(20);
  for (int i = 0; i < 20; ++i) {
    yt[i] = rng.uniform(0, 10);
    yp[i] = rng.uniform(0, 10);
  }
  auto rel = reliability_ece(yt, yp, 4);
  REQUIRE(rel.counts.size() == 4);
  std::size_t total = 0;
  for (int b = 0; b < 4; ++b) {
    // Members of bin b: predictions with rank in [5b, 5b+5).
    double sp = 0, st = 0;
    int cnt = 0;
    for (int i = 0; i < 20; ++i) {
      int rank = 0;
      for (int j = 0; j < 20; ++j) rank += yp[j] < yp[i] || (yp[j] == yp[i] && j < i);
      if (rank / 5 == b) {
        sp += yp[i];
        st += yt[i];
        ++cnt;
      }
    }
    CHECK(rel.counts[b] == std::size_t(cnt));
    CHECK(rel.mean_pred[b] == doctest::Approx(sp / cnt).epsilon(1e-13));
    CHECK(rel.mean_true[b] == doctest::Approx(st / cnt).epsilon(1e-13));
    total += rel.counts[b];
  }
  CHECK(total == 20);
}

TEST_CASE("seed aggregation") {
  MetricReport a, b;
  a.r2 = 0.4;
  b.r2 = 0.44;
  std::vector<MetricReport> one{a};
  auto s = aggregate_seeds(one);
  CHECK(s.mean.r2 == 0.4);
  CHECK(s.std.r2 == 0.0);
  std::vector<MetricReport> two{a, b};
  auto t = aggregate_seeds(two);
  CHECK(t.mean.r2 == doctest::Approx(0.42).epsilon(1e-14));
  CHECK(t.std.r2 == doctest::Approx(0.0282842712).epsilon(1e-8));
  std::vector<MetricReport> same{b, b, b};
  CHECK(aggregate_seeds(same).std.r2 == 0.0);
}

TEST_CASE("report key=value round trip") {
  Rng rng(1);
  auto y = skewed(rng, 30);
  auto p = skewed(rng, 30);
  auto r = evaluate(y, p);
  auto back = from_key_values(parse_key_values(to_key_values(r), "mem"));
  CHECK(back.n == 30);
  CHECK(back.r2 == r.r2);
  CHECK(back.kappa == r.kappa);
  CHECK(back.ece == r.ece);
  CHECK(to_key_values(back) == to_key_values(r));
}

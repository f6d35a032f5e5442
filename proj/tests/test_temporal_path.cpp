#include <doctest.h>

#include <cmath>

#include "s2g/core/io.hpp"
#include "s2g/temporal/temporal_path.hpp"
#include "support/gradcheck.hpp"

using namespace s2g;
using namespace s2g::temporal;
using s2g::testing::check_gradients;
using s2g::testing::random_tensor;

namespace {

Tensor ones_mask(std::size_t b, std::size_t t) { return Tensor({b, t}, 1.0); }

}  // namespace

TEST_CASE("input embedding") {
  Rng rng(1);
  auto w0 = Var::parameter(random_tensor({3, 4}, rng));
  auto gain = Var::parameter(Tensor({4}, 1.0));

  auto zero = embed_input(Var::constant(Tensor({1, 2, 3})), w0, Var::constant(Tensor({4})), gain, 1e-6);
  for (double v : zero.value().data()) CHECK(v == 0.0);

  // Pre-activation rows have unit RMS when gain = 1.
  auto x = Var::constant(random_tensor({2, 5, 3}, rng));
  auto b0 = Var::parameter(random_tensor({4}, rng));
  auto pre = ad::rms_norm(ad::linear(x, w0, b0), gain, 0.0);
  for (std::size_t r = 0; r < 10; ++r) {
    double ss = 0;
    for (std::size_t j = 0; j < 4; ++j) ss += pre.value().at(r, j) * pre.value().at(r, j);
    CHECK(std::abs(std::sqrt(ss / 4) - 1.0) < 1e-9);
  }

  // 1x2x3 input with hand-set weights, evaluated step by step.
  Tensor xv({1, 2, 3}, {1.0, -2.0, 0.5, 0.0, 3.0, -1.0});
  Tensor w = Tensor::matrix(3, 2, {1.0, 0.5, -1.0, 2.0, 0.25, 0.0});
  Tensor b({2}, {0.1, -0.2});
  Tensor g({2}, {1.5, 0.5});
  auto out = embed_input(Var::constant(xv), Var::constant(w), Var::constant(b), Var::constant(g), 1e-6);
  for (std::size_t t = 0; t < 2; ++t) {
    double z[2];
    for (std::size_t j = 0; j < 2; ++j) {
      z[j] = b[j];
      for (std::size_t i = 0; i < 3; ++i) z[j] += xv[t * 3 + i] * w.at(i, j);
    }
    const double rms = std::sqrt((z[0] * z[0] + z[1] * z[1]) / 2 + 1e-6);
    for (std::size_t j = 0; j < 2; ++j) {
      const double u = g[j] * z[j] / rms;
      const double expect = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
      CHECK(out.value()[t * 2 + j] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(embed_input(Var::constant(Tensor({1, 2, 5})), w0, b0, gain, 1e-6), ShapeError);
}

TEST_CASE("selective scan: two-step recurrence by hand") {
  // One channel, one state, A = -1.
  const double d1 = 0.5, d2 = 0.25, x1 = 2.0, x2 = -1.0, b1 = 0.7, b2 = 1.3, c1 = 0.9, c2 = -0.4;
  auto y = selective_scan(Var::constant(Tensor({1, 2, 1}, {x1, x2})), Var::constant(Tensor({1, 2, 1}, {d1, d2})),
                          Var::constant(Tensor({1, 1}, {0.0})), Var::constant(Tensor({1, 2, 1}, {b1, b2})),
                          Var::constant(Tensor({1, 2, 1}, {c1, c2})));
  const double s1 = d1 * b1 * x1;
  const double s2 = std::exp(-d2) * s1 + d2 * b2 * x2;
  CHECK(y.value()[0] == doctest::Approx(c1 * s1).epsilon(1e-15));
  CHECK(y.value()[1] == doctest::Approx(c2 * s2).epsilon(1e-15));
}

TEST_CASE("selective scan gradients") {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    auto x = Var::parameter(random_tensor({2, 4, 3}, rng));
    Tensor dv = random_tensor({2, 4, 3}, rng, 0.3);
    for (double& v : dv.storage()) v = std::abs(v) + 0.05;
    auto delta = Var::parameter(dv);
    auto a_log = Var::parameter(random_tensor({3, 2}, rng, 0.5));
    auto b = Var::parameter(random_tensor({2, 4, 2}, rng));
    auto c = Var::parameter(random_tensor({2, 4, 2}, rng));
    Tensor w = random_tensor({2, 4, 3}, rng);
    auto res = check_gradients(
        [&] { return ad::weighted_sum(selective_scan(x, delta, a_log, b, c), w); }, {x, delta, a_log, b, c});
    CHECK(res.max_rel_error < 1e-6);
  }
}

TEST_CASE("ssm block") {
  Rng rng(5);
  auto blk = SsmBlock::init(4, 3, rng);
  Rng drop(0);
  // Zero input: every projection is bias-only and x = 0, so the scan is 0.
  for (double& v : blk.in_x.bias.mutable_value().storage()) v = 0.0;
  auto zero_in = Var::constant(Tensor({1, 3, 4}));
  auto out0 = blk(zero_in, 0.0, drop, false);
  for (std::size_t i = 0; i < out0.value().size(); ++i) CHECK(out0.value()[i] == doctest::Approx(blk.out.bias.value()[i % 4]));

  auto h = Var::parameter(random_tensor({2, 4, 4}, rng));
  Tensor w = random_tensor({2, 4, 4}, rng);
  nn::ParamList params;
  blk.collect("b", params);
  std::vector<Var> inputs{h};
  for (auto& p : params) inputs.push_back(p.var);
  auto res = check_gradients([&] { return ad::weighted_sum(blk(h, 0.0, drop, true), w); }, inputs);
  CHECK(res.max_rel_error < 1e-5);

  // Causality: truncating to the first t steps reproduces those outputs.
  auto long_in = random_tensor({1, 10, 4}, rng);
  auto full = blk(Var::constant(long_in), 0.0, drop, false).value();
  for (std::size_t t = 1; t <= 10; ++t) {
    Tensor prefix({1, t, 4}, std::vector<double>(long_in.data().begin(), long_in.data().begin() + t * 4));
    auto part = blk(Var::constant(prefix), 0.0, drop, false).value();
    for (std::size_t i = 0; i < t * 4; ++i) CHECK(part[i] == full[i]);
  }
}

TEST_CASE("zero output projections make stacked blocks the identity") {
  Rng rng(9);
  TemporalConfig cfg{3, 6, 4, 2, 0.0, PoolMode::last};
  auto enc = TemporalEncoder::init(cfg, rng);
  for (auto& blk : enc.blocks) blk = SsmBlock::init(6, 4, rng, true);
  auto h = Var::constant(random_tensor({2, 5, 6}, rng));
  Var out = h;
  Rng drop(0);
  for (const auto& blk : enc.blocks) out = blk(out, 0.1, drop, true);
  CHECK(out.value() == h.value());
}

TEST_CASE("state stays bounded over 48 steps") {
  Rng rng(4);
  auto blk = SsmBlock::init(8, 4, rng);
  Tensor x = random_tensor({3, 48, 8}, rng, 5.0);
  Rng drop(0);
  auto out = blk(Var::constant(x), 0.0, drop, false);
  CHECK(out.value().all_finite());
  double mx = 0;
  for (double v : out.value().data()) mx = std::max(mx, std::abs(v));
  CHECK(mx < 1e6);
}

TEST_CASE("mask pool") {
  Rng rng(2);
  Tensor hv = random_tensor({1, 4, 3}, rng);
  auto h = Var::constant(hv);

  auto all = mask_pool(h, ones_mask(1, 4), PoolMode::mean);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t t = 0; t < 4; ++t) s += hv[t * 3 + j];
    CHECK(all.value()[j] == doctest::Approx(s / 4).epsilon(1e-15));
  }

  Tensor two = random_tensor({1, 2, 3}, rng);
  auto first = mask_pool(Var::constant(two), Tensor({1, 2}, {1, 0}), PoolMode::mean);
  for (std::size_t j = 0; j < 3; ++j) CHECK(first.value()[j] == two[j]);

  auto last = mask_pool(h, Tensor({1, 4}, {1, 1, 0, 1}), PoolMode::last);
  for (std::size_t j = 0; j < 3; ++j) CHECK(last.value()[j] == hv[3 * 3 + j]);
  auto last2 = mask_pool(h, Tensor({1, 4}, {1, 1, 0, 0}), PoolMode::last);
  for (std::size_t j = 0; j < 3; ++j) CHECK(last2.value()[j] == hv[1 * 3 + j]);

  CHECK_THROWS_AS(mask_pool(h, Tensor({1, 4}), PoolMode::mean), DataError);

  // Values at masked-out steps never reach the output.
  for (int rep = 0; rep < 20; ++rep) {
    Tensor m({2, 6});
    for (double& v : m.storage()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    m.at(0, 0) = 1.0;
    m.at(1, 5) = 1.0;
    Tensor a = random_tensor({2, 6, 3}, rng);
    Tensor b = a;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t t = 0; t < 6; ++t) {
        if (m.at(r, t) == 0.0) {
          for (std::size_t j = 0; j < 3; ++j) b[(r * 6 + t) * 3 + j] = rng.normal() * 100;
        }
      }
    }
    for (auto mode : {PoolMode::mean, PoolMode::last}) {
      CHECK(mask_pool(Var::constant(a), m, mode).value() == mask_pool(Var::constant(b), m, mode).value());
    }
  }

  auto hp = Var::parameter(random_tensor({2, 4, 3}, rng));
  Tensor m({2, 4}, {1, 0, 1, 1, 0, 1, 1, 0});
  Tensor w = random_tensor({2, 3}, rng);
  for (auto mode : {PoolMode::mean, PoolMode::last}) {
    auto res = check_gradients([&] { return ad::weighted_sum(mask_pool(hp, m, mode), w); }, {hp});
    CHECK(res.max_rel_error < 1e-8);
  }
}

TEST_CASE("end-to-end encoder gradient reaches the input projection") {
  Rng rng(7);
  TemporalConfig cfg{3, 5, 3, 2, 0.0, PoolMode::mean};
  auto enc = TemporalEncoder::init(cfg, rng);
  TimeSeriesBatch x{random_tensor({2, 4, 3}, rng), Tensor({2, 4}, {1, 1, 0, 1, 0, 1, 1, 1})};
  x.validate();
  Tensor w = random_tensor({2, 5}, rng);
  nn::ParamList params;
  enc.collect("ts", params);
  std::vector<Var> inputs;
  for (auto& p : params) inputs.push_back(p.var);
  Rng drop(0);
  auto res = check_gradients([&] { return ad::weighted_sum(enc(x, drop, false), w); }, inputs);
  CHECK(res.max_rel_error < 1e-5);
  auto w0 = check_gradients([&] { return ad::weighted_sum(enc(x, drop, false), w); }, {enc.embed.proj.weight});
  CHECK(w0.max_rel_error < 1e-5);
}

TEST_CASE("batch validation") {
  TimeSeriesBatch bad{Tensor({1, 3, 2}), Tensor({1, 3})};
  CHECK_THROWS_AS(bad.validate(), DataError);
  TimeSeriesBatch shape{Tensor({1, 3, 2}), Tensor({1, 4}, 1.0)};
  CHECK_THROWS_AS(shape.validate(), ShapeError);
  CHECK(parse_pool_mode("last") == PoolMode::last);
  CHECK_THROWS(parse_pool_mode("max"));
}

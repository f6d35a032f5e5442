#include <doctest.h>

#include <cmath>
#include <numbers>

#include "s2g/model/model.hpp"
#include "support/gradcheck.hpp"

using namespace s2g;
using namespace s2g::model;
using s2g::testing::check_gradients;
using s2g::testing::random_tensor;

namespace {

std::vector<Var> params_of(const nn::ParamList& list) {
  std::vector<Var> out;
  for (const auto& p : list) out.push_back(p.var);
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_ts_in = 3;
  c.d_flat = 2;
  c.d_model = 3;
  c.d_state = 2;
  c.ts_layers = 1;
  c.gps_layers = 1;
  c.d_edge = 2;
  c.ts_dropout = c.gps_dropout = c.flat_dropout = 0.0;
  c.bn_momentum = 0.0;
  return c;
}

ModelInputs tiny_inputs(Rng& rng, std::size_t nodes = 4, std::size_t steps = 4) {
  ModelInputs in;
  in.ts.values = random_tensor({nodes, steps, 3}, rng);
  in.ts.mask = Tensor({nodes, steps}, 1.0);
  in.ts.mask.at(1, 3) = 0.0;
  in.x_flat = random_tensor({2, 2}, rng);
  in.edges.node_count = nodes;
  in.edges.edges = {{1, 0, 0.5, graph::EdgeType::diagnosis},
                    {2, 0, 0.9, graph::EdgeType::semantic},
                    {3, 1, 0.3, graph::EdgeType::mst_bridge},
                    {0, 2, 0.7, graph::EdgeType::diffusion},
                    {2, 3, 0.2, graph::EdgeType::diagnosis}};
  in.target_count = 2;
  in.noise_seed = 5;
  return in;
}

}  // namespace

TEST_CASE("static encoder") {
  Rng rng(1);
  auto enc = StaticEncoder::init(5, 4, rng);
  enc.proj.bias.mutable_value().fill(0.0);
  auto z = enc(Var::constant(Tensor({2, 5})), 0.0, rng, true);
  CHECK(z.value().all_finite());

  const Tensor x = random_tensor({2, 5}, rng);
  enc.proj.bias.mutable_value() = random_tensor({4}, rng);
  enc.norm.gain.mutable_value() = random_tensor({4}, rng);
  enc.norm.bias.mutable_value() = random_tensor({4}, rng);
  auto a = enc(Var::constant(x), 0.0, rng, true).value();
  CHECK(enc(Var::constant(x), 0.0, rng, true).value() == a);

  // Linear, population-variance layer norm, exact GELU.
  const Tensor& w = enc.proj.weight.value();
  for (std::size_t i = 0; i < 2; ++i) {
    double h[4];
    for (std::size_t j = 0; j < 4; ++j) {
      h[j] = enc.proj.bias.value()[j];
      for (std::size_t k = 0; k < 5; ++k) h[j] += x.at(i, k) * w.at(k, j);
    }
    double mu = 0, var = 0;
    for (double v : h) mu += v / 4;
    for (double v : h) var += (v - mu) * (v - mu) / 4;
    for (std::size_t j = 0; j < 4; ++j) {
      const double ln = (h[j] - mu) / std::sqrt(var + enc.norm.eps) * enc.norm.gain.value()[j] + enc.norm.bias.value()[j];
      const double g = 0.5 * ln * (1.0 + std::erf(ln / std::numbers::sqrt2));
      CHECK(a.at(i, j) == doctest::Approx(g).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(enc(Var::constant(Tensor({2, 4})), 0.0, rng, false), ShapeError);
}

TEST_CASE("fusion weights") {
  Rng rng(2);
  const Var zg = Var::constant(random_tensor({2, 4}, rng));
  const Var zt = Var::constant(random_tensor({2, 3}, rng));
  const Var zf = Var::constant(random_tensor({2, 2}, rng));

  auto eq = fuse(zg, zt, zf, Var::constant(Tensor::vector({0.2, 0.2, 0.2}))).value();
  REQUIRE(eq.shape() == Shape{2, 9});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(eq.at(i, j) == doctest::Approx(zg.value().at(i, j) / 3));
    for (std::size_t j = 0; j < 3; ++j) CHECK(eq.at(i, 4 + j) == doctest::Approx(zt.value().at(i, j) / 3));
    for (std::size_t j = 0; j < 2; ++j) CHECK(eq.at(i, 7 + j) == doctest::Approx(zf.value().at(i, j) / 3));
  }

  auto sat = fuse(zg, zt, zf, Var::constant(Tensor::vector({100, 0, 0}))).value();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(sat.at(i, j) == doctest::Approx(zg.value().at(i, j)).epsilon(1e-12));
    for (std::size_t j = 4; j < 9; ++j) CHECK(std::abs(sat.at(i, j)) < 1e-40);
  }

  // Adding a constant to every logit changes nothing; with exactly
  // representable sums the output is bit-identical.
  auto base = fuse(zg, zt, zf, Var::constant(Tensor::vector({0.5, -0.25, 0.125}))).value();
  CHECK(fuse(zg, zt, zf, Var::constant(Tensor::vector({4.5, 3.75, 4.125}))).value() == base);
  for (int rep = 0; rep < 10; ++rep) {
    const double c = rng.uniform(-20, 20);
    auto shifted = fuse(zg, zt, zf, Var::constant(Tensor::vector({0.5 + c, -0.25 + c, 0.125 + c}))).value();
    for (std::size_t k = 0; k < base.size(); ++k) CHECK(shifted[k] == doctest::Approx(base[k]).epsilon(1e-12));
  }

  auto w = FusionWeights::init().normalized();
  CHECK(w[0] > w[1]);
  CHECK(w[1] == w[2]);
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0));
  CHECK_THROWS_AS(fuse(zg, Var::constant(Tensor({3, 3})), zf, FusionWeights::init().logits), ShapeError);
}

TEST_CASE("target transform") {
  CHECK(target_transform(0.0) == 0.0);
  CHECK(inverse_transform(0.0) == 0.0);
  CHECK(inverse_transform(-0.5) == 0.0);
  CHECK(target_transform(std::numbers::e - 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(inverse_transform(std::log(4.0)) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK_THROWS_AS(target_transform(-1e-9), std::invalid_argument);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double y = std::exp(rng.normal(0.5, 1.5));
    CHECK(std::abs(inverse_transform(target_transform(y)) - y) <= 1e-12 * std::max(1.0, y));
    CHECK(inverse_transform(rng.normal(0, 3)) >= 0.0);
  }
}

TEST_CASE("loss examples") {
  const double t = std::log1p(10.0);
  LossConfig cfg;  // alpha .3, gamma .5, tau 7, delta 1
  Var main = Var::parameter(Tensor::vector({t + 0.2}));
  Var ts = Var::parameter(Tensor::vector({t + 0.4}));
  std::vector<double> y{10.0};
  CHECK(compute_loss(main, ts, y, cfg).value().item() == doctest::Approx(0.057).epsilon(1e-12));
  CHECK(std::abs(compute_loss(main, ts, y, cfg).value().item() - 0.057) < 1e-12);

  std::vector<double> ys{0.5, 3.0, 12.0};
  const auto tt = target_transform(ys);
  Var exact_main = Var::constant(Tensor::vector(tt));
  Var exact_ts = Var::constant(Tensor::vector(tt));
  for (double a : {0.0, 0.3, 1.0}) {
    for (double g : {0.0, 2.0}) {
      CHECK(compute_loss(exact_main, exact_ts, ys, {a, g, 7.0, 1.0}).value().item() == 0.0);
    }
  }
  CHECK_THROWS(compute_loss(main, ts, ys, cfg));
}

TEST_CASE("auxiliary weight isolates the heads") {
  Rng rng(4);
  std::vector<double> y(16);
  for (double& v : y) v = std::exp(rng.normal(1, 1));
  for (double alpha : {0.0, 1.0}) {
    Var main = Var::parameter(random_tensor({16, 1}, rng));
    Var ts = Var::parameter(random_tensor({16, 1}, rng));
    ad::backward(compute_loss(main, ts, y, {alpha, 0.5, 7.0, 1.0}));
    const Tensor dead = alpha == 0.0 ? ts.grad() : main.grad();
    const Tensor live = alpha == 0.0 ? main.grad() : ts.grad();
    for (double g : dead.storage()) CHECK(g == 0.0);
    double norm = 0;
    for (double g : live.storage()) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("loss is monotone in the tail boost") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> y(10);
    for (double& v : y) v = std::exp(rng.normal(1.2, 1.0));
    y[0] = 9.0;  // at least one tail sample
    Var main = Var::constant(random_tensor({10}, rng));
    Var ts = Var::constant(random_tensor({10}, rng));
    double prev = -1.0;
    for (double g = 0.0; g <= 3.0; g += 0.25) {
      const double l = compute_loss(main, ts, y, {0.3, g, 7.0, 1.0}).value().item();
      CHECK(l > prev);
      prev = l;
    }
  }
}

TEST_CASE("loss gradient matches finite differences") {
  Rng rng(6);
  std::vector<double> y(12);
  for (double& v : y) v = std::exp(rng.normal(1.5, 1.0));
  Var main = Var::parameter(random_tensor({12, 1}, rng, 1.5));
  Var ts = Var::parameter(random_tensor({12, 1}, rng, 1.5));
  // Keep residuals away from the Huber transition.
  for (auto* v : {&main, &ts}) {
    for (std::size_t i = 0; i < 12; ++i) {
      double& p = v->mutable_value()[i];
      const double r = p - std::log1p(y[i]);
      if (std::abs(std::abs(r) - 1.0) < 1e-3) p += 0.01;
    }
  }
  const LossConfig cfg{0.4, 0.5, 7.0, 1.0};
  auto r = check_gradients([&] { return compute_loss(main, ts, y, cfg); }, {main, ts});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("prediction and end-to-end model") {
  ModelOutputs out;
  out.main = Var::constant(Tensor::matrix(3, 1, {0.0, std::log(4.0), -2.0}));
  auto days = predict_days(out);
  CHECK(days[0] == 0.0);
  CHECK(days[1] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(days[2] == 0.0);

  Rng rng(7);
  auto m = Model::init(tiny_config(), rng);
  const auto in = tiny_inputs(rng);
  Rng r1(1), r2(2);
  const auto a = m.forward(in, r1, false);
  CHECK(a.main.shape() == Shape{2, 1});
  CHECK(m.forward(in, r2, false).main.value() == a.main.value());
  for (double d : predict_days(a)) CHECK(d >= 0.0);
}

TEST_CASE("end-to-end gradient") {
  Rng rng(8);
  auto m = Model::init(tiny_config(), rng);
  // Move the fusion logits off their symmetric start, and lift the scan
  // step sizes to ~0.7 so the state-matrix gradients are well above
  // differencing noise (at the 1e-3 init they are ~1e-7).
  m.fusion.logits.mutable_value() = random_tensor({3}, rng, 0.5);
  for (auto& b : m.temporal.blocks) b.in_delta.bias.mutable_value().fill(0.0);
  for (auto& b : m.graph.blocks) b.global.in_delta.bias.mutable_value().fill(0.0);
  const auto in = tiny_inputs(rng);
  const std::vector<double> y{2.0, 9.0};
  const LossConfig cfg{0.3, 0.5, 7.0, 1.0};
  auto f = [&] {
    Rng drop(0);
    return m.loss(m.forward(in, drop, true), y, cfg);
  };
  auto r = check_gradients(f, params_of(m.parameters()));
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("modality switches") {
  Rng rng(9);
  const auto in = tiny_inputs(rng);
  auto perturbed = in;
  perturbed.x_flat = random_tensor({2, 2}, rng);
  auto ts_changed = in;
  ts_changed.ts.values = random_tensor({4, 4, 3}, rng);

  auto cfg = tiny_config();
  cfg.use_static = false;
  Rng init_rng(1);
  auto no_static = Model::init(cfg, init_rng);
  Rng r(0);
  CHECK(no_static.forward(in, r, false).main.value() == no_static.forward(perturbed, r, false).main.value());

  cfg = tiny_config();
  cfg.use_graph = cfg.use_ts = false;
  Rng init_rng2(1);
  auto static_only = Model::init(cfg, init_rng2);
  CHECK(static_only.forward(in, r, false).main.value() == static_only.forward(ts_changed, r, false).main.value());
  CHECK(static_only.forward(in, r, false).main.value() != static_only.forward(perturbed, r, false).main.value());

  // Without the temporal branch its head gets no weight in the loss.
  const std::vector<double> y{2.0, 9.0};
  auto out = static_only.forward(in, r, true);
  auto with_alpha = static_only.loss(out, y, {0.9, 0.5, 7.0, 1.0}).value().item();
  auto without = compute_loss(out.main, out.ts, y, {0.0, 0.5, 7.0, 1.0}).value().item();
  CHECK(with_alpha == without);

  auto bad = in;
  bad.target_count = 5;
  auto full = Model::init(tiny_config(), rng);
  CHECK_THROWS(full.forward(bad, r, false));
}

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "s2g/core/autodiff.hpp"
#include "s2g/core/nn.hpp"
#include "s2g/core/optim.hpp"
#include "support/gradcheck.hpp"

using namespace s2g;
using ad::Var;
using testing::check_gradients;
using testing::random_tensor;

namespace {

// Maclaurin series for erf, summed in long double until terms vanish.
long double erf_series(long double x) {
  long double sum = 0.0L;
  long double power = x;  // x^(2n+1)
  long double fact = 1.0L;
  for (int n = 0; n < 60; ++n) {
    if (n > 0) {
      fact *= n;
      power *= x * x;
    }
    const long double term = power / (fact * (2 * n + 1));
    sum += (n % 2 == 0) ? term : -term;
  }
  return 2.0L / std::sqrt(std::numbers::pi_v<long double>) * sum;
}

}  // namespace

TEST_CASE("gelu examples") {
  CHECK(ad::gelu(Tensor::scalar(0.0))[0] == 0.0);
  CHECK(ad::gelu(Tensor::scalar(10.0))[0] == doctest::Approx(10.0).epsilon(1e-15));
  const long double oracle = 0.5L * (1.0L + erf_series(1.0L / std::sqrt(2.0L)));
  CHECK(std::abs(ad::gelu(Tensor::scalar(1.0))[0] - static_cast<double>(oracle)) < 1e-15);
  CHECK_THROWS_AS(ad::gelu(Tensor::scalar(std::nan(""))), NumericError);
  CHECK_THROWS_AS(ad::gelu(Tensor::scalar(INFINITY)), NumericError);
}

TEST_CASE("rms_norm examples") {
  const Tensor ones({2, 4}, 1.0);
  const Tensor gain({4}, 1.0);
  CHECK(ad::rms_norm(ones, gain, 0.0) == ones);

  const Tensor row = Tensor::matrix(1, 2, {3.0, 4.0});
  const Tensor out = ad::rms_norm(row, Tensor({2}, 1.0), 0.0);
  CHECK(out[0] == doctest::Approx(3.0 / std::sqrt(12.5)).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(4.0 / std::sqrt(12.5)).epsilon(1e-15));

  Rng rng(3);
  const Tensor x = random_tensor({5, 7}, rng);
  Tensor scaled = x;
  for (double& v : scaled.storage()) v *= 13.7;
  const Tensor a = ad::rms_norm(x, Tensor({7}, 1.0), 0.0);
  const Tensor b = ad::rms_norm(scaled, Tensor({7}, 1.0), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));

  CHECK_THROWS_AS(ad::rms_norm(Tensor({3, 0}), Tensor({0}), 1e-6), ShapeError);
}

TEST_CASE("rms_norm rows have unit RMS") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({4, 9}, rng, 1.0 + trial);
    const Tensor y = ad::rms_norm(x, Tensor({9}, 1.0), 0.0);
    for (std::size_t r = 0; r < 4; ++r) {
      double ss = 0.0;
      for (std::size_t c = 0; c < 9; ++c) ss += y.at(r, c) * y.at(r, c);
      CHECK(std::abs(std::sqrt(ss / 9.0) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("huber examples and C1 continuity") {
  CHECK(ad::huber_scalar(0.0, 1.0) == 0.0);
  CHECK(ad::huber_scalar(0.5, 1.0) == 0.125);
  CHECK(ad::huber_scalar(3.0, 1.0) == 2.5);
  CHECK(ad::huber_scalar(-3.0, 1.0) == 2.5);
  for (double delta : {0.3, 1.0, 2.5}) {
    for (double sign : {-1.0, 1.0}) {
      const double r = sign * delta;
      const double h = 1e-7;
      const double left = ad::huber_scalar(r - h, delta);
      const double right = ad::huber_scalar(r + h, delta);
      CHECK(std::abs(left - right) < 1e-6);
      // one-sided slopes from each branch formula evaluated at the joint
      const double quad_slope = r;
      const double lin_slope = sign * delta;
      CHECK(std::abs(quad_slope - lin_slope) < 1e-9);
      CHECK(std::abs(ad::huber_grad_scalar(r - sign * 1e-12, delta) -
                     ad::huber_grad_scalar(r + sign * 1e-12, delta)) < 1e-9);
    }
  }
}

TEST_CASE("backward examples") {
  Var x = Var::parameter(Tensor::scalar(3.0));
  ad::backward(ad::mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  Var c = Var::parameter(Tensor::scalar(2.0));
  Var k = Var::constant(Tensor::scalar(5.0));
  Var y = ad::add_scalar(ad::scale(k, 2.0), 1.0);
  ad::backward(y);
  CHECK(c.grad()[0] == 0.0);

  Var v = Var::parameter(Tensor({3}, 1.0));
  CHECK_THROWS_AS(ad::backward(ad::gelu(v)), ShapeError);
  CHECK(v.grad() == Tensor({3}));
}

TEST_CASE("sum(gelu(Wx)) matches central differences") {
  Rng rng(5);
  Var w = Var::parameter(random_tensor({4, 3}, rng));
  Var x = Var::parameter(random_tensor({2, 4}, rng));
  auto f = [&] { return ad::sum(ad::gelu(ad::matmul(x, w))); };
  CHECK(check_gradients(f, {w, x}).max_rel_error < 1e-6);
}

TEST_CASE("every differentiable op passes finite differences at 10 random points") {
  Rng rng(2024);
  const double tol = 1e-6;
  for (int point = 0; point < 10; ++point) {
    Var a = Var::parameter(random_tensor({3, 4}, rng));
    Var b = Var::parameter(random_tensor({3, 4}, rng));
    Var w = Var::parameter(random_tensor({4, 5}, rng));
    Var bias = Var::parameter(random_tensor({4}, rng));
    Var gain = Var::parameter(random_tensor({4}, rng));
    Var logits = Var::parameter(random_tensor({3}, rng));
    const Tensor weights = random_tensor({3, 4}, rng);
    const Tensor target = random_tensor({3, 4}, rng, 2.0);

    // A fixed random projection turns each op's output into a scalar.
    auto project = [&](const Var& v) {
      Rng prng(99);
      return ad::weighted_sum(v, random_tensor(v.shape(), prng));
    };

    CHECK(check_gradients([&] { return project(ad::add(a, b)); }, {a, b}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::sub(a, b)); }, {a, b}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::mul(a, b)); }, {a, b}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::scale(a, -1.7)); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::add_bias(a, bias)); }, {a, bias}).max_rel_error <
          tol);
    CHECK(check_gradients([&] { return project(ad::matmul(a, w)); }, {a, w}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::gelu(a)); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::silu(a)); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::softplus(a)); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::relu(a)); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::rms_norm(a, gain, 1e-6)); }, {a, gain})
              .max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::layer_norm(a, gain, bias, 1e-5)); },
                          {a, gain, bias})
              .max_rel_error < tol);
    CHECK(check_gradients(
              [&] {
                ad::BatchNormState st{Tensor({4}), Tensor({4}, 1.0), 0.1};
                return project(ad::batch_norm(a, gain, bias, st, true));
              },
              {a, gain, bias})
              .max_rel_error < tol);
    CHECK(check_gradients(
              [&] {
                ad::BatchNormState st{Tensor({4}, 0.3), Tensor({4}, 2.0), 0.1};
                return project(ad::batch_norm(a, gain, bias, st, false));
              },
              {a, gain, bias})
              .max_rel_error < tol);
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    CHECK(check_gradients([&] { return project(ad::gather_rows(a, idx)); }, {a}).max_rel_error <
          tol);
    CHECK(check_gradients([&] { return project(ad::concat_cols({a, b, a})); }, {a, b})
              .max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::softmax(logits)); }, {logits}).max_rel_error <
          tol);
    CHECK(check_gradients([&] { return project(ad::scale_by(a, logits, 1)); }, {a, logits})
              .max_rel_error < tol);
    CHECK(check_gradients([&] { return ad::mean(ad::mul(a, a)); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return ad::weighted_sum(a, weights); }, {a}).max_rel_error < tol);
    CHECK(check_gradients([&] { return project(ad::huber(a, target, 1.0)); }, {a}).max_rel_error <
          tol);
    CHECK(check_gradients([&] { return project(ad::reshape(a, {4, 3})); }, {a}).max_rel_error <
          tol);
  }
}

TEST_CASE("batch_norm running statistics and eval mode") {
  Var x = Var::constant(Tensor::matrix(4, 1, {1.0, 2.0, 3.0, 4.0}));
  Var g = Var::parameter(Tensor({1}, 1.0));
  Var b = Var::parameter(Tensor({1}));
  ad::BatchNormState st{Tensor({1}), Tensor({1}, 1.0), 0.1};
  ad::batch_norm(x, g, b, st, true);
  CHECK(st.running_mean[0] == doctest::Approx(0.25));
  CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * (5.0 / 3.0)));
  const Tensor e1 = ad::batch_norm(x, g, b, st, false).value();
  const Tensor e2 = ad::batch_norm(x, g, b, st, false).value();
  CHECK(e1 == e2);
}

TEST_CASE("dropout is identity in eval mode and rescales in training") {
  Rng rng(1);
  Var x = Var::constant(Tensor({1000}, 1.0));
  CHECK(ad::dropout(x, 0.5, rng, false).value() == x.value());
  CHECK(ad::dropout(x, 0.0, rng, true).value() == x.value());
  const Tensor y = ad::dropout(x, 0.5, rng, true).value();
  for (double v : y.storage()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("optimize_step examples") {
  SUBCASE("zero gradient, zero weight decay leaves params unchanged") {
    std::vector<Tensor> params{Tensor::vector({1.0, -2.0, 3.0})};
    AdamWState st;
    AdamWOptions opt{.lr = 0.1, .weight_decay = 0.0, .clip_norm = 1.0};
    for (int i = 0; i < 3; ++i) optimize_step(params, {Tensor({3})}, st, opt);
    CHECK(params[0] == Tensor::vector({1.0, -2.0, 3.0}));
  }
  SUBCASE("global norm 4 with clip 2 halves the gradients") {
    std::vector<Tensor> grads{Tensor::vector({0.0, 4.0 * 0.6}), Tensor::vector({4.0 * 0.8})};
    CHECK(clip_global_norm(grads, 2.0) == doctest::Approx(4.0));
    CHECK(grads[0][1] == doctest::Approx(1.2));
    CHECK(grads[1][0] == doctest::Approx(1.6));
  }
  SUBCASE("scalar trajectory matches the hand-rolled recurrence") {
    Rng rng(7);
    const double g[3] = {rng.normal(), rng.normal(), rng.normal()};
    const double lr = 0.05;
    const double wd = 0.1;
    std::vector<Tensor> params{Tensor::scalar(0.8)};
    AdamWState st;
    AdamWOptions opt{.lr = lr, .weight_decay = wd, .clip_norm = 0.0};

    double p = 0.8;
    double m = 0.0;
    double v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      optimize_step(params, {Tensor::scalar(g[t - 1])}, st, opt);
      m = 0.9 * m + 0.1 * g[t - 1];
      v = 0.999 * v + 0.001 * g[t - 1] * g[t - 1];
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      p = p - lr * wd * p - lr * mh / (std::sqrt(vh) + 1e-8);
      CHECK(params[0][0] == doctest::Approx(p).epsilon(1e-14));
    }
  }
  SUBCASE("autodiff overload applies the accumulated gradient and clears it") {
    Var w = Var::parameter(Tensor::vector({1.0, -1.0}));
    ad::backward(ad::sum(ad::mul(w, w)));
    std::vector<Var> params{w};
    AdamWState st;
    AdamWOptions opt{.lr = 0.1, .weight_decay = 0.0, .clip_norm = 0.0};
    optimize_step(params, st, opt);
    // First Adam step moves each coordinate by lr against the gradient sign.
    CHECK(w.value()[0] == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(w.value()[1] == doctest::Approx(-0.9).epsilon(1e-9));
    CHECK(w.grad()[0] == 0.0);
  }
  SUBCASE("shape mismatch is an error") {
    std::vector<Tensor> params{Tensor({2})};
    AdamWState st;
    CHECK_THROWS_AS(optimize_step(params, {Tensor({3})}, st, AdamWOptions{}), ShapeError);
  }
}

TEST_CASE("clipping never increases the global norm") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> grads{random_tensor({3, 2}, rng, 1.0 + trial),
                              random_tensor({5}, rng, 0.1 * trial)};
    const double clip = rng.uniform(0.1, 10.0);
    const double before = global_norm(grads);
    clip_global_norm(grads, clip);
    const double after = global_norm(grads);
    CHECK(after <= before + 1e-12);
    CHECK(after <= clip + 1e-12);
  }
}

TEST_CASE("non-finite op output is an error") {
  Var x = Var::parameter(Tensor::scalar(1e308));
  CHECK_THROWS_AS(ad::scale(x, 10.0), NumericError);
}

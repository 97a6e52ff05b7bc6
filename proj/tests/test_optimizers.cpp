#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "resetopt/optimizers.hpp"

using namespace resetopt;

namespace {

FlatParams scalar(double x) { return {Tensor::vector({x})}; }
Tensor grad_of(double g) { return Tensor::vector({g}); }

OptimHyper adam_hyper(double alpha = 0.1) {
  OptimHyper h;
  h.kind = OptimizerKind::adam;
  h.alpha = alpha;
  h.beta1 = 0.9;
  h.beta2 = 0.999;
  h.epsilon = 1e-8;
  return h;
}

// Scalar replay of the Adam recurrences, written out independently.
struct ScalarAdamOracle {
  double m = 0.0, v = 0.0, p;
  long i = 0;
  double b1, b2, alpha, eps;
  double m_hat = 0.0;

  double step(double g) {
    ++i;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    m_hat = m / (1 - std::pow(b1, double(i)));
    const double v_hat = v / (1 - std::pow(b2, double(i)));
    p -= alpha * m_hat / (std::sqrt(v_hat) + eps);
    return p;
  }
};

std::vector<std::vector<double>> random_sequences(std::size_t count, std::size_t length, std::size_t dim,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::vector<std::vector<double>> out(count * length, std::vector<double>(dim));
  for (auto& g : out) {
    for (auto& x : g) x = normal(rng);
  }
  return out;
}

}  // namespace

TEST_CASE("fresh_state and reset_state") {
  const auto s = fresh_state({3});
  CHECK(s.m == Tensor::vector({0, 0, 0}));
  CHECK(s.v == Tensor::vector({0, 0, 0}));
  CHECK(s.i == 0);
  const auto s22 = fresh_state({2, 2});
  CHECK(s22.m.shape() == std::vector<std::size_t>{2, 2});
  CHECK(s22.v.data() == std::vector<double>(4, 0.0));
  CHECK(fresh_state({3}) == fresh_state({3}));

  auto populated = adam_step(FlatParams{Tensor::vector({1, 2, 3})}, Tensor::vector({0.5, -1, 2}), s, adam_hyper()).state;
  CHECK(populated.i == 1);
  const auto r = reset_state(populated);
  CHECK(r.i == 0);
  CHECK(r == fresh_state({3}));
  CHECK(reset_state(r) == r);
}

TEST_CASE("adam_step") {
  const auto h = adam_hyper(0.1);
  SUBCASE("first step from a fresh state") {
    const auto out = adam_step(scalar(1.0), grad_of(2.0), fresh_state({1}), h);
    CHECK(out.state.i == 1);
    CHECK(out.report.debias1 == doctest::Approx(0.1).epsilon(1e-15));
    // Stored moments are the raw averages, not the debiased ones.
    CHECK(out.state.m[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(out.state.v[0] == doctest::Approx(0.004).epsilon(1e-15));
    CHECK(out.params.values[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
    CHECK(out.params.values[0] == doctest::Approx(0.9).epsilon(1e-8));
  }
  SUBCASE("zero gradient from fresh leaves params unchanged") {
    const auto out = adam_step(scalar(1.5), grad_of(0.0), fresh_state({1}), h);
    CHECK(out.params.values[0] == 1.5);
    CHECK(out.state.m[0] == 0.0);
    CHECK(out.state.v[0] == 0.0);
    CHECK(out.state.i == 1);
  }
  SUBCASE("constant unit gradient moves by -alpha each step") {
    // With g = 1 throughout, m_hat = v_hat = 1, so each step is -alpha / (1 + eps).
    ScalarAdamOracle oracle{0, 0, 0.0, 0, 0.9, 0.999, 0.1, 1e-8};
    FlatParams p = scalar(0.0);
    auto st = fresh_state({1});
    double prev = 0.0;
    for (int k = 0; k < 3; ++k) {
      auto out = adam_step(p, grad_of(1.0), st, h);
      CHECK(std::abs((out.params.values[0] - prev) - (-0.1 / (1.0 + 1e-8))) < 1e-12);
      CHECK(out.params.values[0] == doctest::Approx(oracle.step(1.0)).epsilon(1e-15));
      prev = out.params.values[0];
      p = out.params;
      st = out.state;
    }
  }
  SUBCASE("trajectory matches the scalar oracle; stored state is never debiased") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    ScalarAdamOracle oracle{0, 0, 0.5, 0, 0.9, 0.999, 0.01, 1e-8};
    FlatParams p = scalar(0.5);
    auto st = fresh_state({1});
    auto hh = adam_hyper(0.01);
    for (int k = 0; k < 300; ++k) {
      const double g = normal(rng);
      auto out = adam_step(p, grad_of(g), st, hh);
      oracle.step(g);
      CHECK(std::abs(out.params.values[0] - oracle.p) <= 1e-12);
      CHECK(std::abs(out.state.m[0] - oracle.m) <= 1e-15);
      CHECK(std::abs(out.state.v[0] - oracle.v) <= 1e-15);
      CHECK(std::abs(out.state.m[0] / out.report.debias1 - oracle.m_hat) <= 1e-12);
      p = out.params;
      st = out.state;
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(adam_step(scalar(1.0), grad_of(std::nan("")), fresh_state({1}), h), NonFiniteGradient);
    CHECK_THROWS_AS(adam_step(scalar(1.0), grad_of(INFINITY), fresh_state({1}), h), NonFiniteGradient);
    CHECK_THROWS_AS(adam_step(scalar(1.0), Tensor::vector({1, 2}), fresh_state({1}), h), DimensionError);
    CHECK_THROWS_AS(adam_step(scalar(1.0), grad_of(1.0), fresh_state({2}), h), DimensionError);
    auto bad = h;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(adam_step(scalar(1.0), grad_of(1.0), fresh_state({1}), bad), std::invalid_argument);
  }
}

TEST_CASE("rmsprop_step") {
  OptimHyper h;
  h.kind = OptimizerKind::rmsprop;
  h.alpha = 0.1;
  h.beta2 = 0.999;
  h.epsilon = 1e-8;
  SUBCASE("first step") {
    const auto out = rmsprop_step(scalar(0.0), grad_of(3.0), fresh_state({1}), h);
    CHECK(out.state.v[0] == doctest::Approx(0.009).epsilon(1e-14));
    CHECK(out.params.values[0] == doctest::Approx(-0.1 * 3.0 / (std::sqrt(0.009) + 1e-8)).epsilon(1e-14));
    CHECK(out.state.m[0] == 0.0);
    CHECK(out.state.i == 1);
  }
  SUBCASE("zero gradient") {
    CHECK(rmsprop_step(scalar(2.0), grad_of(0.0), fresh_state({1}), h).params.values[0] == 2.0);
  }
  SUBCASE("bit-identical to Adam with beta1 = 0 and no debiasing") {
    auto adam0 = h;
    adam0.kind = OptimizerKind::adam;
    adam0.beta1 = 0.0;
    const auto seqs = random_sequences(10, 100, 4, 9);
    for (std::size_t s = 0; s < 10; ++s) {
      FlatParams pr{Tensor::vector({0.1, -0.2, 0.3, 0.0})}, pa = pr;
      auto sr = fresh_state({4}), sa = sr;
      for (std::size_t k = 0; k < 100; ++k) {
        const auto g = Tensor::vector(seqs[s * 100 + k]);
        auto r = rmsprop_step(pr, g, sr, h);
        auto a = adam_step_without_debias(pa, g, sa, adam0);
        REQUIRE(r.params == a.params);
        pr = r.params;
        sr = r.state;
        pa = a.params;
        sa = a.state;
      }
    }
  }
}

TEST_CASE("radam_step") {
  OptimHyper h = adam_hyper(0.1);
  h.kind = OptimizerKind::radam;
  SUBCASE("rho at i = 1 is 1 for any beta2, so the rectifier is off") {
    for (double b2 : {0.9, 0.99, 0.999, 0.9999}) CHECK(radam_rho(b2, 1) == doctest::Approx(1.0).epsilon(1e-9));
    const auto out = radam_step(scalar(1.0), grad_of(2.0), fresh_state({1}), h);
    CHECK_FALSE(out.report.rectifier_active);
    // Momentum-only step: m_hat = g on the first step.
    CHECK(out.params.values[0] == doctest::Approx(1.0 - 0.1 * 2.0).epsilon(1e-14));
  }
  SUBCASE("rectifier engages once rho exceeds the threshold") {
    // rho_i grows by roughly 1 per early step: rho_5 ~ 4.99 for beta2 = 0.999.
    CHECK(radam_rho(0.999, 4) < 4.0);
    CHECK(radam_rho(0.999, 5) > 4.0);
    auto st = fresh_state({1});
    FlatParams p = scalar(0.0);
    for (int k = 1; k <= 5; ++k) {
      auto out = radam_step(p, grad_of(1.0), st, h);
      CHECK(out.report.rectifier_active == (k >= 5));
      p = out.params;
      st = out.state;
    }
  }
  SUBCASE("for large i the step approaches Adam's") {
    CHECK(radam_rectifier(0.999, 1'000'000) == doctest::Approx(1.0).epsilon(1e-3));
    OptimizerState st{Tensor::vector({0.3}), Tensor::vector({0.2}), 999'999};
    const auto r = radam_step(scalar(1.0), grad_of(0.7), st, h);
    const auto a = adam_step(scalar(1.0), grad_of(0.7), st, adam_hyper(0.1));
    CHECK(r.report.rectifier_active);
    const double dr = r.params.values[0] - 1.0, da = a.params.values[0] - 1.0;
    CHECK(std::abs(dr - da) <= 1e-3 * std::abs(da));
  }
  SUBCASE("zero gradient") { CHECK(radam_step(scalar(2.0), grad_of(0.0), fresh_state({1}), h).params.values[0] == 2.0); }
}

TEST_CASE("sgd_step") {
  OptimHyper h;
  h.kind = OptimizerKind::sgd;
  h.alpha = 0.5;
  const auto out = sgd_step(FlatParams{Tensor::vector({0, 0})}, Tensor::vector({1, -1}), fresh_state({2}), h);
  CHECK(out.params.values == Tensor::vector({-0.5, 0.5}));
  CHECK(out.state.i == 1);
  CHECK(out.state.m == Tensor::vector({0, 0}));
  auto next = sgd_step(out.params, Tensor::vector({1, 1}), out.state, h);
  CHECK(next.state.i == 2);
  auto after_reset = sgd_step(out.params, Tensor::vector({1, 1}), reset_state(out.state), h);
  CHECK(after_reset.params == next.params);
}

TEST_CASE("apply_proximal") {
  const FlatParams w{Tensor::vector({1.0, 2.0})}, theta{Tensor::vector({0.0, 2.5})};
  const auto g = Tensor::vector({0.3, -0.4});
  CHECK(apply_proximal(g, w, theta, 0.0) == g);
  CHECK(apply_proximal(g, w, w, 3.0) == g);
  CHECK(apply_proximal(Tensor::vector({0.0}), FlatParams{Tensor::vector({1.0})}, FlatParams{Tensor::vector({0.0})}, 0.5) ==
        Tensor::vector({0.5}));
  CHECK(apply_proximal(g, w, theta, 2.0) == Tensor::vector({0.3 + 2.0, -0.4 - 1.0}));
  CHECK_THROWS_AS(apply_proximal(Tensor::vector({1.0}), w, theta, 1.0), DimensionError);
  CHECK_THROWS_AS(apply_proximal(g, w, theta, -1.0), std::invalid_argument);
}

TEST_CASE("property: reset then replay equals fresh then replay, for every kind") {
  const auto seqs = random_sequences(20, 50, 3, 21);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop, OptimizerKind::radam}) {
    OptimHyper h = adam_hyper(0.01);
    h.kind = kind;
    for (std::size_t s = 0; s < 20; ++s) {
      // Populate a state with an unrelated history first.
      FlatParams p{Tensor::vector({0.2, -0.1, 0.4})};
      auto dirty = fresh_state({3});
      for (std::size_t k = 0; k < 10; ++k) dirty = optimizer_step(p, Tensor::vector(seqs[(s + 1) % 20 * 50 + k]), dirty, h).state;

      auto a = reset_state(dirty);
      auto b = fresh_state({3});
      FlatParams pa = p, pb = p;
      for (std::size_t k = 0; k < 50; ++k) {
        const auto g = Tensor::vector(seqs[s * 50 + k]);
        auto ra = optimizer_step(pa, g, a, h);
        auto rb = optimizer_step(pb, g, b, h);
        REQUIRE(ra.params == rb.params);
        REQUIRE(ra.state == rb.state);
        pa = ra.params;
        a = ra.state;
        pb = rb.params;
        b = rb.state;
      }
    }
  }
}

TEST_CASE("debias factors saturate without resets") {
  const double b1 = 0.9;
  CHECK(std::abs(1.0 - (1.0 - std::pow(b1, 131.0))) >= 1e-6);
  CHECK(std::abs(1.0 - (1.0 - std::pow(b1, 132.0))) < 1e-6);
  CHECK(1.0 - std::pow(b1, 8000.0) == 1.0);

  // Same facts read off the optimizer's own reports.
  auto st = fresh_state({1});
  FlatParams p = scalar(0.0);
  const auto h = adam_hyper(1e-3);
  StepReport last;
  for (int k = 1; k <= 132; ++k) {
    auto out = adam_step(p, grad_of(0.1), st, h);
    p = out.params;
    st = out.state;
    last = out.report;
    if (k == 131) CHECK(1.0 - last.debias1 >= 1e-6);
  }
  CHECK(1.0 - last.debias1 < 1e-6);
}

TEST_CASE("steps are pure and thread-safe") {
  const auto h = adam_hyper(0.05);
  OptimizerState st{Tensor::vector({0.1, 0.2}), Tensor::vector({0.3, 0.4}), 7};
  const FlatParams p{Tensor::vector({1.0, -1.0})};
  const auto g = Tensor::vector({0.25, -0.75});
  const auto reference = adam_step(p, g, st, h);
  std::vector<StepResult> results(4);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < results.size(); ++t) pool.emplace_back([&, t] { results[t] = adam_step(p, g, st, h); });
  }
  for (const auto& r : results) {
    CHECK(r.params == reference.params);
    CHECK(r.state == reference.state);
  }
  CHECK(st.i == 7);  // input untouched
}

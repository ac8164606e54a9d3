#include <gtest/gtest.h>

#include <cmath>

#include "occnet/error.hpp"
#include "occnet/gru.hpp"
#include "oracles.hpp"

using namespace occnet;
using namespace occnet::gru;
using oracle::random_tensor;

namespace {

struct Fixture {
  GruCellParams params;
  Tensor h0;
  std::vector<Tensor> xs, targets;
};

Fixture random_fixture(Rng& rng, std::size_t nx, std::size_t nh, std::size_t ny, std::size_t steps, bool every_step) {
  Fixture f{GruCellParams::initialize(nx, nh, ny, rng), random_tensor({nh}, rng, -0.5, 0.5), {}, {}};
  f.params.for_each([&](std::string_view, Tensor& t) {
    for (auto& v : t.values()) v += rng.uniform(-0.3, 0.3);
  });
  for (std::size_t t = 0; t < steps; ++t) {
    f.xs.push_back(random_tensor({nx}, rng));
    if (every_step || t + 1 == steps) {
      Tensor y({ny});
      y[rng.below(ny)] = 1.0;
      f.targets.push_back(y);
    }
  }
  return f;
}

double loss_of(const Fixture& f) { return sequence_loss(gru_forward(f.params, f.h0, f.xs).trace, f.targets); }

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST(GruCell, ScalarCellMatchesStraightLineEvaluation) {
  GruCellParams p = GruCellParams::zeros(1, 1, 2);
  p.W_g[0] = 0.4, p.W_f[0] = -0.7, p.W_r[0] = 0.3;
  p.U_g[0] = 1.1, p.U_f[0] = 0.5, p.U_r[0] = -0.9;
  p.b_g[0] = 0.05, p.b_f[0] = 0.2, p.b_r[0] = -0.1;
  p.V[0] = 1.5, p.V[1] = -0.5;
  p.b[0] = 0.1, p.b[1] = -0.2;
  const double xs[3] = {0.3, -1.2, 0.8};

  double h = 0.25;
  for (double x : xs) {
    const double f = sig(-0.7 * h + 0.5 * x + 0.2);
    const double r = sig(0.3 * h - 0.9 * x - 0.1);
    const double g = std::tanh(0.4 * (r * h) + 1.1 * x + 0.05);
    h = f * h + (1 - f) * g;
  }
  const double z0 = 1.5 * h + 0.1, z1 = -0.5 * h - 0.2;
  const double y0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));

  const auto out = gru_forward(p, Tensor::vector({0.25}), {Tensor::vector({0.3}), Tensor::vector({-1.2}), Tensor::vector({0.8})});
  EXPECT_NEAR(out.trace.hs.back()[0], h, 1e-12);
  EXPECT_NEAR(out.y_hat[0], y0, 1e-12);
  EXPECT_NEAR(out.y_hat[0] + out.y_hat[1], 1.0, 1e-15);
}

TEST(GruCell, ForgetGateOfOneCarriesStateThrough) {
  GruCellParams p = GruCellParams::zeros(2, 3, 2);
  p.b_f.fill(60.0);
  const Tensor h = Tensor::vector({0.3, -0.4, 0.9});
  const auto step = gru_cell_step(p, h, Tensor::vector({5.0, -5.0}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(step.h[i], h[i], 1e-12);
}

TEST(GruCell, HiddenStateStaysBounded) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto f = random_fixture(rng, 3, 5, 4, 5, false);
    for (auto& x : f.xs) scale_into(x, 50.0);
    for (const auto& h : gru_forward(f.params, Tensor({5}), f.xs).trace.hs)
      for (double v : h.values()) ASSERT_LE(std::abs(v), 1.0);
  }
}

TEST(GruForward, RejectsEmptySequenceAndBadShapes) {
  Rng rng(1);
  auto p = GruCellParams::initialize(2, 3, 4, rng);
  EXPECT_THROW(gru_forward(p, Tensor({3}), {}), Error);
  EXPECT_THROW(gru_forward(p, Tensor({2}), {Tensor({2})}), ShapeError);
  EXPECT_THROW(gru_forward(p, Tensor({3}), {Tensor({5})}), ShapeError);
}

TEST(GruInit, GlorotRangeAndForgetBias) {
  Rng rng(8);
  auto p = GruCellParams::initialize(4, 6, 5, rng);
  const double lim = std::sqrt(6.0 / (6 + 4));
  for (double v : p.U_g.values()) EXPECT_LE(std::abs(v), lim);
  for (double v : p.b_f.values()) EXPECT_EQ(v, 1.0);
  for (double v : p.b_g.values()) EXPECT_EQ(v, 0.0);
}

TEST(CrossEntropy, FloorAndErrors) {
  EXPECT_NEAR(cross_entropy(Tensor::vector({0.25, 0.75}), Tensor::vector({0, 1})), -std::log(0.75), 1e-15);
  EXPECT_THROW(cross_entropy(Tensor::vector({0.0, 1.0}), Tensor::vector({1, 0})), Error);
}

TEST(GruBackward, MatchesFiniteDifferencesOnRandomCells) {
  Rng rng(2024);
  for (int cell = 0; cell < 60; ++cell) {
    const std::size_t nx = 1 + rng.below(4), nh = 1 + rng.below(8), ny = 2 + rng.below(4), steps = 1 + rng.below(5);
    auto f = random_fixture(rng, nx, nh, ny, steps, rng.bernoulli(0.5));
    const auto grads = gru_backward(f.params, gru_forward(f.params, f.h0, f.xs).trace, f.targets);

    std::vector<const Tensor*> analytic;
    grads.params.for_each([&](std::string_view, const Tensor& t) { analytic.push_back(&t); });
    std::size_t k = 0;
    double worst = 0.0;
    f.params.for_each([&](std::string_view, Tensor& p) {
      const Tensor& a = *analytic[k++];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + 1e-5;
        const double up = loss_of(f);
        p[i] = saved - 1e-5;
        const double down = loss_of(f);
        p[i] = saved;
        worst = std::max(worst, oracle::relative_error(a[i], (up - down) / 2e-5));
      }
    });
    for (std::size_t i = 0; i < nh; ++i) {
      const double saved = f.h0[i];
      f.h0[i] = saved + 1e-5;
      const double up = loss_of(f);
      f.h0[i] = saved - 1e-5;
      const double down = loss_of(f);
      f.h0[i] = saved;
      worst = std::max(worst, oracle::relative_error(grads.initial_state[i], (up - down) / 2e-5));
    }
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < nx; ++i) {
        const double saved = f.xs[t][i];
        f.xs[t][i] = saved + 1e-5;
        const double up = loss_of(f);
        f.xs[t][i] = saved - 1e-5;
        const double down = loss_of(f);
        f.xs[t][i] = saved;
        worst = std::max(worst, oracle::relative_error(grads.inputs[t][i], (up - down) / 2e-5));
      }
    }
    ASSERT_LE(worst, 1e-5) << "cell " << cell;
  }
}

TEST(GruBackward, WindowAtLeastSequenceEqualsFullUnroll) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t steps = 1 + rng.below(5);
    auto f = random_fixture(rng, 3, 4, 3, steps, true);
    const auto trace = gru_forward(f.params, f.h0, f.xs).trace;
    const auto full = gru_backward(f.params, trace, f.targets, 0);
    const auto windowed = gru_backward(f.params, trace, f.targets, steps + rng.below(3));
    std::vector<const Tensor*> a;
    full.params.for_each([&](std::string_view, const Tensor& t) { a.push_back(&t); });
    std::size_t k = 0;
    windowed.params.for_each([&](std::string_view, const Tensor& t) { EXPECT_EQ(t, *a[k++]); });
  }
}

// Truncation to w steps equals summing, per loss term, the full gradient of a
// w-step subsequence that starts from the recorded state as a constant.
TEST(GruBackward, TruncatedWindowMatchesSubsequenceOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t steps = 3 + rng.below(3), window = 1 + rng.below(steps - 1);
    auto f = random_fixture(rng, 2, 4, 3, steps, true);
    const auto trace = gru_forward(f.params, f.h0, f.xs).trace;
    const auto truncated = gru_backward(f.params, trace, f.targets, window);

    auto expect = GruCellParams::zeros(2, 4, 3);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
      std::vector<Tensor> sub(f.xs.begin() + first, f.xs.begin() + t + 1);
      const auto sub_trace = gru_forward(f.params, trace.hs[first], sub).trace;
      const auto g = gru_backward(f.params, sub_trace, {f.targets[t]});
      std::vector<const Tensor*> parts;
      g.params.for_each([&](std::string_view, const Tensor& p) { parts.push_back(&p); });
      std::size_t k = 0;
      expect.for_each([&](std::string_view, Tensor& e) { add_into(e, *parts[k++]); });
    }
    std::vector<const Tensor*> got;
    truncated.params.for_each([&](std::string_view, const Tensor& p) { got.push_back(&p); });
    std::size_t k = 0;
    expect.for_each([&](std::string_view name, const Tensor& e) {
      EXPECT_LE(oracle::max_abs_diff(*got[k++], e), 1e-12) << name << " window " << window;
    });
  }
}

TEST(GruBackward, RejectsMismatchedTargets) {
  Rng rng(3);
  auto f = random_fixture(rng, 2, 3, 3, 4, true);
  const auto trace = gru_forward(f.params, f.h0, f.xs).trace;
  EXPECT_THROW(gru_backward(f.params, trace, {f.targets[0], f.targets[1]}), Error);
  EXPECT_THROW(gru_backward(f.params, trace, {Tensor({5})}), Error);
}

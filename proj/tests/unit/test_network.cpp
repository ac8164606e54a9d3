#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "occnet/error.hpp"
#include "occnet/network.hpp"
#include "oracles.hpp"

using namespace occnet;
using oracle::random_tensor;

namespace {

Tensor random_batch(const NetworkConfig& cfg, std::size_t n, Rng& rng) {
  return random_tensor({n, cfg.input_height, cfg.input_width, cfg.input_channels}, rng, 0.0, 1.0);
}

void expect_rows_are_distributions(const Tensor& probs) {
  ASSERT_EQ(probs.rank(), 2u);
  ASSERT_EQ(probs.dim(1), 5u);
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_GE(probs.at(i, c), 0.0);
      sum += probs.at(i, c);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

std::vector<std::pair<std::string, Tensor>> snapshot(const Model& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  m.for_each([&](const std::string& n, const Tensor& t, ParamRole) { out.emplace_back(n, t); });
  return out;
}

}  // namespace

TEST(NetworkConfig, StrideShapePropagation) {
  const auto full = NetworkConfig::full();
  EXPECT_EQ(full.feature_height(), 7u);
  EXPECT_EQ(full.feature_width(), 7u);
  EXPECT_EQ(full.sequence_length(), 49u);
  std::size_t blocks = 0;
  for (const auto& b : full.blocks) blocks += b.repeats;
  EXPECT_EQ(blocks, 17u);
  const auto toy = NetworkConfig::toy();
  EXPECT_EQ(toy.feature_height(), 4u);
  EXPECT_EQ(toy.sequence_length(), 16u);
}

TEST(NetworkConfig, TextRoundTripAndValidation) {
  for (auto cfg : {NetworkConfig::full(), NetworkConfig::toy()}) {
    cfg.batch_norm = false;
    cfg.sequence = SequenceOrder::column_major;
    EXPECT_EQ(NetworkConfig::from_text(cfg.to_text()), cfg);
  }
  auto bad = NetworkConfig::toy();
  bad.blocks[1].stride = 3;
  EXPECT_THROW(bad.validate(), ValueError);
  EXPECT_THROW(build_network(bad, 0), ValueError);
  bad = NetworkConfig::toy();
  bad.blocks.clear();
  EXPECT_THROW(bad.validate(), ValueError);
  bad = NetworkConfig::toy();
  bad.class_count = 4;
  EXPECT_THROW(bad.validate(), ValueError);
  EXPECT_THROW(NetworkConfig::from_profile("huge"), ValueError);
}

TEST(NetworkConfig, WidthMultiplierChannels) {
  const auto toy = NetworkConfig::toy();
  EXPECT_EQ(toy.scaled(32), 8u);
  EXPECT_EQ(toy.scaled(64), 16u);
  EXPECT_EQ(toy.scaled(96), 24u);
  EXPECT_EQ(NetworkConfig::full().scaled(24), 24u);
}

TEST(BuildNetwork, SameSeedIsBitwiseIdentical) {
  const auto a = snapshot(build_network(NetworkConfig::toy(), 5));
  const auto b = snapshot(build_network(NetworkConfig::toy(), 5));
  const auto c = snapshot(build_network(NetworkConfig::toy(), 6));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(BuildNetwork, ParameterNamesAreUniqueAndOrdered) {
  const Model m = build_network(NetworkConfig::toy(), 0);
  std::set<std::string> names;
  std::vector<std::string> order;
  m.for_each([&](const std::string& n, const Tensor&, ParamRole) {
    EXPECT_TRUE(names.insert(n).second) << n;
    order.push_back(n);
  });
  EXPECT_EQ(order.front(), "stem.weights");
  EXPECT_EQ(order.back(), "gru.b");
  EXPECT_GT(m.trainable_count(), 0u);
}

TEST(Forward, FullProfileMapsToSevenBySevenAndRowsSumToOne) {
  const auto cfg = NetworkConfig::full();
  Model model = build_network(cfg, 1);
  Rng rng(1);
  const Tensor batch = random_batch(cfg, 1, rng);
  ForwardCache cache;
  const Tensor probs = forward_train(model, batch, &cache);
  EXPECT_EQ(cache.features.shape(), (Shape{1, 7, 7, 1280}));
  ASSERT_EQ(cache.sequences.size(), 1u);
  EXPECT_EQ(cache.sequences[0].trace.length(), 49u);
  expect_rows_are_distributions(probs);
  expect_rows_are_distributions(forward(model, batch));
}

TEST(Forward, ToyProfileShapesAndDistributions) {
  const auto cfg = NetworkConfig::toy();
  Model model = build_network(cfg, 2);
  Rng rng(2);
  const Tensor batch = random_batch(cfg, 6, rng);
  ForwardCache cache;
  expect_rows_are_distributions(forward_train(model, batch, &cache));
  EXPECT_EQ(cache.features.shape(), (Shape{6, 4, 4, 64}));
  EXPECT_EQ(cache.sequences[0].trace.length(), 16u);
  expect_rows_are_distributions(forward(model, batch));
}

TEST(Forward, ZeroReadoutGivesUniformRows) {
  Model model = build_network(NetworkConfig::toy(), 3);
  model.gru.V.fill(0.0);
  model.gru.b.fill(0.0);
  Rng rng(3);
  const Tensor probs = forward(model, random_batch(model.config, 3, rng));
  for (double v : probs.values()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Forward, BatchIndependentInInferenceMode) {
  const Model model = build_network(NetworkConfig::toy(), 4);
  Rng rng(4);
  const Tensor batch = random_batch(model.config, 4, rng);
  const Tensor all = forward(model, batch);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor one({1, 32, 32, 3});
    std::copy(batch.data() + i * one.size(), batch.data() + (i + 1) * one.size(), one.data());
    const Tensor alone = forward(model, one);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(alone[c], all.at(i, c));
  }
}

TEST(Forward, RejectsWrongExtents) {
  const Model model = build_network(NetworkConfig::toy(), 0);
  EXPECT_THROW(forward(model, Tensor({1, 30, 32, 3})), ShapeError);
  EXPECT_THROW(forward(model, std::vector<Tensor>{Tensor({32, 32, 1})}), ShapeError);
}

TEST(Embed, UnitNormAndDeterministic) {
  const Model model = build_network(NetworkConfig::toy(), 5);
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    const Tensor img = random_tensor({32, 32, 3}, rng, 0.0, 1.0);
    const Tensor e = embed(model, img);
    EXPECT_EQ(e.size(), 16u);
    EXPECT_NEAR(l2_norm(e.values()), 1.0, 1e-9);
    EXPECT_EQ(embed(model, img), e);
  }
  EXPECT_EQ(embed(model, Tensor({64, 64, 3}, 0.5)).size(), 16u);
}

namespace {

// Finite differences on randomly chosen scalar parameters against backprop.
double end_to_end_worst(bool batch_norm, std::uint64_t seed, std::size_t probes) {
  auto cfg = NetworkConfig::toy();
  cfg.batch_norm = batch_norm;
  Model model = build_network(cfg, seed);
  Rng rng(seed, 99);
  const Tensor batch = random_batch(cfg, 3, rng);
  const std::vector<int> labels = {0, 3, 1};
  const auto mode = kernels::Mode::train;
  const auto analytic = loss_and_gradients(model, batch, labels, mode);

  std::vector<Tensor*> params;
  std::vector<const Tensor*> grads;
  model.for_each([&](const std::string&, Tensor& t, ParamRole role) {
    if (role != ParamRole::running_stat) params.push_back(&t);
  });
  analytic.gradients.for_each([&](const std::string&, const Tensor& t, ParamRole role) {
    if (role != ParamRole::running_stat) grads.push_back(&t);
  });

  auto loss_at = [&] {
    Model copy = model;
    return loss_and_gradients(copy, batch, labels, mode).loss;
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t which = rng.below(params.size());
    Tensor& t = *params[which];
    const std::size_t i = rng.below(t.size());
    const double saved = t[i];
    t[i] = saved + 1e-6;
    const double up = loss_at();
    t[i] = saved - 1e-6;
    const double down = loss_at();
    t[i] = saved;
    worst = std::max(worst, oracle::relative_error((*grads[which])[i], (up - down) / 2e-6));
  }
  return worst;
}

}  // namespace

TEST(Backprop, EndToEndMatchesFiniteDifferencesWithoutBatchNorm) {
  EXPECT_LE(end_to_end_worst(false, 7, 20), 1e-4);
  EXPECT_LE(end_to_end_worst(false, 8, 20), 1e-4);
}

TEST(Backprop, EndToEndMatchesFiniteDifferencesWithBatchNorm) {
  EXPECT_LE(end_to_end_worst(true, 9, 20), 1e-4);
}

TEST(Backprop, InferenceModeLossMatchesBatchLoss) {
  Model model = build_network(NetworkConfig::toy(), 10);
  Rng rng(10);
  const Tensor batch = random_batch(model.config, 4, rng);
  const std::vector<int> labels = {0, 1, 2, 4};
  const auto lg = loss_and_gradients(model, batch, labels, kernels::Mode::infer);
  EXPECT_NEAR(lg.loss, batch_loss(model, batch, labels), 1e-12);
  EXPECT_THROW(loss_and_gradients(model, batch, {0, 1}, kernels::Mode::infer), Error);
  EXPECT_THROW(loss_and_gradients(model, batch, {0, 1, 2, 5}, kernels::Mode::infer), Error);
}

TEST(Precision, SnapRoundsEveryTensorToFloat) {
  Model model = build_network(NetworkConfig::toy(), 11);
  snap_to_single_precision(model);
  model.for_each([](const std::string& n, const Tensor& t, ParamRole) {
    for (double v : t.values()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v))) << n;
  });
}

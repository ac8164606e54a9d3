#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "occnet/data.hpp"
#include "occnet/network.hpp"

namespace occnet {

enum class OptimizerKind { adam, sgd_momentum };
enum class ScheduleKind { constant, stepwise, one_cycle };

struct TrainConfig {
  double base_learning_rate = 0.1;
  ScheduleKind schedule = ScheduleKind::stepwise;
  double momentum = 0.95;  // Adam beta1, or the SGD momentum
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  std::size_t batch_size = 50;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::size_t cycle_length = 10;  // epochs per one-cycle period
  double pct_start = 0.9;         // share of a cycle spent warming up
  std::size_t step_epochs = 10;   // stepwise: epochs between decays
  double step_factor = 0.1;
  // Stop once the end-of-epoch training accuracy reaches this value (0 disables).
  double target_accuracy = 0.0;

  void validate() const;
  // `key = value` lines; '#' starts a comment. Unknown keys are rejected.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::string& path);
};

double learning_rate_at(const TrainConfig& tc, std::size_t epoch, std::size_t batch, std::size_t batches_per_epoch);

// Adam (or SGD with momentum) with decoupled weight decay on weight tensors only.
class Optimizer {
 public:
  Optimizer(const TrainConfig& tc, const Model& model);
  void step(Model& model, const Model& gradients, double learning_rate);
  std::uint64_t steps() const { return steps_; }

 private:
  TrainConfig config_;
  std::vector<Tensor> first_, second_;
  std::uint64_t steps_ = 0;
};

struct Example {
  Tensor pixels;  // model input extents
  int label = 0;
};

std::vector<Example> make_examples(const NetworkConfig& cfg, std::span<const data::LabeledImage> images);

struct EpochStats {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double batch_loss = 0.0;  // mean over the epoch's train-mode batches
  double train_loss = 0.0;  // inference-mode pass over the training set
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::uint64_t step) : Error(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

Evaluation evaluate(const Model& model, std::span<const Example> examples, std::size_t batch_size = 50);

using EpochCallback = std::function<void(const EpochStats&)>;

std::vector<EpochStats> train(Model& model, std::span<const Example> train_set, const TrainConfig& tc,
                              std::span<const Example> validation = {}, const EpochCallback& on_epoch = {});

}  // namespace occnet

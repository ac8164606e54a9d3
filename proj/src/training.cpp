#include "occnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "occnet/rng.hpp"

namespace occnet {

void TrainConfig::validate() const {
  if (!(base_learning_rate >= 0.0) || !std::isfinite(base_learning_rate)) {
    throw ValueError("base_learning_rate must be a finite value >= 0");
  }
  if (batch_size < 1) throw ValueError("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValueError("beta2 must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValueError("weight_decay must be >= 0");
  if (cycle_length < 1) throw ValueError("cycle_length must be >= 1");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw ValueError("pct_start must be in (0, 1)");
  if (step_epochs < 1) throw ValueError("step_epochs must be >= 1");
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig tc;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValueError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto number = [&]() {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty()) {
        throw ValueError("config key '" + key + "': '" + value + "' is not a number");
      }
      return v;
    };
    auto count = [&]() {
      const double v = number();
      if (v < 0 || v != std::floor(v)) throw ValueError("config key '" + key + "' must be a non-negative integer");
      return static_cast<std::size_t>(v);
    };
    if (key == "base_learning_rate") tc.base_learning_rate = number();
    else if (key == "momentum") tc.momentum = number();
    else if (key == "beta2") tc.beta2 = number();
    else if (key == "weight_decay") tc.weight_decay = number();
    else if (key == "cycle_length") tc.cycle_length = count();
    else if (key == "pct_start") tc.pct_start = number();
    else if (key == "batch_size") tc.batch_size = count();
    else if (key == "epochs") tc.epochs = count();
    else if (key == "seed") tc.seed = count();
    else if (key == "step_epochs") tc.step_epochs = count();
    else if (key == "step_factor") tc.step_factor = number();
    else if (key == "target_accuracy") tc.target_accuracy = number();
    else if (key == "optimiser" || key == "optimizer") {
      std::string v = value;
      std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
      if (v == "adam") tc.optimizer = OptimizerKind::adam;
      else if (v == "sgd" || v == "sgd-momentum") tc.optimizer = OptimizerKind::sgd_momentum;
      else throw ValueError("config key 'optimiser': unknown optimiser '" + value + "'");
    } else if (key == "schedule") {
      if (value == "stepwise") tc.schedule = ScheduleKind::stepwise;
      else if (value == "one_cycle" || value == "one-cycle") tc.schedule = ScheduleKind::one_cycle;
      else if (value == "constant") tc.schedule = ScheduleKind::constant;
      else throw ValueError("config key 'schedule': unknown schedule '" + value + "'");
    } else {
      throw ValueError("unknown config key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  tc.validate();
  return tc;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

double learning_rate_at(const TrainConfig& tc, std::size_t epoch, std::size_t batch, std::size_t batches_per_epoch) {
  const double base = tc.base_learning_rate;
  switch (tc.schedule) {
    case ScheduleKind::constant:
      return base;
    case ScheduleKind::stepwise:
      return base * std::pow(tc.step_factor, static_cast<double>(epoch / tc.step_epochs));
    case ScheduleKind::one_cycle: {
      // Cosine warm-up from base/25 to base over pct_start of the cycle, then
      // cosine annealing down to base/1e4; the cycle repeats every cycle_length epochs.
      const double start = base / 25.0, finish = base / 1e4;
      const double pos = (static_cast<double>(epoch % tc.cycle_length) +
                          static_cast<double>(batch) / static_cast<double>(std::max<std::size_t>(1, batches_per_epoch))) /
                         static_cast<double>(tc.cycle_length);
      auto cosine = [](double from, double to, double u) { return to + (from - to) * (1.0 + std::cos(std::numbers::pi * u)) / 2.0; };
      if (pos < tc.pct_start) return cosine(start, base, pos / tc.pct_start);
      return cosine(base, finish, (pos - tc.pct_start) / (1.0 - tc.pct_start));
    }
  }
  return base;
}

Optimizer::Optimizer(const TrainConfig& tc, const Model& model) : config_(tc) {
  model.for_each([&](const std::string&, const Tensor& t, ParamRole role) {
    if (role == ParamRole::running_stat) return;
    first_.emplace_back(t.shape());
    second_.emplace_back(t.shape());
  });
}

void Optimizer::step(Model& model, const Model& gradients, double learning_rate) {
  std::vector<const Tensor*> grads;
  gradients.for_each([&](const std::string&, const Tensor& t, ParamRole role) {
    if (role != ParamRole::running_stat) grads.push_back(&t);
  });
  if (grads.size() != first_.size()) throw ShapeError("gradient structure does not match the optimizer state");
  ++steps_;
  const double b1 = config_.momentum, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  std::size_t k = 0;
  model.for_each([&](const std::string& name, Tensor& p, ParamRole role) {
    if (role == ParamRole::running_stat) return;
    const Tensor& g = *grads[k];
    Tensor& m = first_[k];
    Tensor& v = second_[k];
    ++k;
    if (g.shape() != p.shape()) throw ShapeError("gradient for " + name + " has the wrong shape");
    const double decay = role == ParamRole::weight ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double update = 0.0;
      if (config_.optimizer == OptimizerKind::adam) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
      } else {
        m[i] = b1 * m[i] + g[i];
        update = m[i];
      }
      p[i] -= learning_rate * (update + decay * p[i]);
    }
  });
}

std::vector<Example> make_examples(const NetworkConfig& cfg, std::span<const data::LabeledImage> images) {
  std::vector<Example> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back({fit_to_input(cfg, img.pixels), class_code(img.occlusion)});
  return out;
}

namespace {

Tensor gather(const NetworkConfig& cfg, std::span<const Example> examples, std::span<const std::size_t> order,
              std::vector<int>& labels) {
  std::vector<Tensor> images;
  images.reserve(order.size());
  labels.clear();
  for (auto i : order) {
    images.push_back(examples[i].pixels);
    labels.push_back(examples[i].label);
  }
  return stack_images(cfg, images);
}

}  // namespace

Evaluation evaluate(const Model& model, std::span<const Example> examples, std::size_t batch_size) {
  Evaluation ev;
  if (examples.empty()) return ev;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t correct = 0;
  std::vector<int> labels;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto chunk = std::span<const std::size_t>(order).subspan(start, std::min(batch_size, order.size() - start));
    const Tensor probs = forward(model, gather(model.config, examples, chunk, labels));
    const std::size_t k = probs.dim(1);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double* row = probs.data() + i * k;
      const int pred = static_cast<int>(std::max_element(row, row + k) - row);
      ev.predictions.push_back(pred);
      if (pred == labels[i]) ++correct;
      ev.loss -= std::log(std::max(row[labels[i]], gru::kProbabilityFloor));
    }
  }
  ev.loss /= static_cast<double>(examples.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return ev;
}

std::vector<EpochStats> train(Model& model, std::span<const Example> train_set, const TrainConfig& tc,
                              std::span<const Example> validation, const EpochCallback& on_epoch) {
  tc.validate();
  if (train_set.empty()) throw ValueError("training set is empty");
  for (const auto& ex : train_set) {
    if (ex.label < 0 || ex.label >= static_cast<int>(model.config.class_count)) {
      throw ValueError("training label " + std::to_string(ex.label) + " outside the class range");
    }
  }
  Rng rng(tc.seed);
  Optimizer opt(tc, model);
  std::vector<EpochStats> history;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batches = (order.size() + tc.batch_size - 1) / tc.batch_size;
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.learning_rate = learning_rate_at(tc, epoch, 0, batches);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t start = b * tc.batch_size;
      const auto chunk = std::span<const std::size_t>(order).subspan(start, std::min(tc.batch_size, order.size() - start));
      const Tensor batch = gather(model.config, train_set, chunk, labels);
      auto lg = loss_and_gradients(model, batch, labels, kernels::Mode::train);
      if (!std::isfinite(lg.loss)) {
        throw TrainingError("loss became non-finite at step " + std::to_string(model.step + 1), model.step + 1);
      }
      opt.step(model, lg.gradients, learning_rate_at(tc, epoch, b, batches));
      ++model.step;
      stats.batch_loss += lg.loss * static_cast<double>(chunk.size());
    }
    stats.batch_loss /= static_cast<double>(order.size());
    const auto tr = evaluate(model, train_set, tc.batch_size);
    stats.train_loss = tr.loss;
    stats.train_accuracy = tr.accuracy;
    if (!validation.empty()) {
      const auto va = evaluate(model, validation, tc.batch_size);
      stats.val_loss = va.loss;
      stats.val_accuracy = va.accuracy;
    }
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (tc.target_accuracy > 0.0 && stats.train_accuracy >= tc.target_accuracy) break;
  }
  model.rng_state = rng.state();
  return history;
}

}  // namespace occnet

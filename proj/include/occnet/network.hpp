#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "occnet/data.hpp"
#include "occnet/gru.hpp"
#include "occnet/kernels.hpp"
#include "occnet/tensor.hpp"

namespace occnet {

struct BlockSpec {
  std::size_t expansion = 6;
  std::size_t channels = 0;  // before the width multiplier
  std::size_t repeats = 1;
  std::size_t stride = 1;    // stride of the first repeat; the rest use 1

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

// Order in which feature-map positions become GRU timesteps.
enum class SequenceOrder { row_major, column_major };

struct NetworkConfig {
  std::string profile = "full";
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t input_channels = 3;
  std::size_t stem_channels = 32;
  std::size_t stem_stride = 2;
  std::vector<BlockSpec> blocks;
  double width_multiplier = 1.0;
  std::size_t head_channels = 1280;
  std::size_t bridge_size = 128;
  std::size_t hidden_size = 64;
  std::size_t class_count = kOcclusionClassCount;
  SequenceOrder sequence = SequenceOrder::row_major;
  bool batch_norm = true;

  // Standard MobileNetV2 table at 224x224x3: 17 inverted residual blocks, 7x7 output.
  static NetworkConfig full();
  // Width 0.25, three stride-2 blocks, 32x32x3 input, 4x4 output, n_h = 16.
  static NetworkConfig toy();
  static NetworkConfig from_profile(std::string_view name);

  void validate() const;
  std::size_t scaled(std::size_t channels) const;
  std::size_t feature_height() const;
  std::size_t feature_width() const;
  std::size_t sequence_length() const { return feature_height() * feature_width(); }

  std::string to_text() const;
  static NetworkConfig from_text(std::string_view text);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class ParamRole { weight, affine, running_stat };

struct Model {
  NetworkConfig config;
  Tensor stem_weights;  // [3, 3, C_in, C_stem]
  kernels::BatchNormParams stem_bn;
  std::vector<kernels::ConvBlockParams> blocks;
  Tensor head_weights;  // [C_last, C_head]
  kernels::BatchNormParams head_bn;
  Tensor bridge_weights;  // [bridge, C_head]
  Tensor bridge_bias;     // [bridge]
  gru::GruCellParams gru;

  std::uint64_t step = 0;
  std::string rng_state;

  // Visits every tensor in a fixed order with a stable dotted name.
  void for_each(const std::function<void(const std::string&, Tensor&, ParamRole)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&, ParamRole)>& fn) const;
  std::size_t trainable_count() const;
};

Model build_network(const NetworkConfig& cfg, std::uint64_t seed);
// Same structure with every tensor zeroed; used as a gradient accumulator.
Model zeros_like(const Model& model);
// Rounds every tensor to the nearest float, which is what a checkpoint stores.
void snap_to_single_precision(Model& model);

// Stacks [H, W, C] images into [N, H, W, C], checking them against the config.
Tensor stack_images(const NetworkConfig& cfg, const std::vector<Tensor>& images);
// Resizes to the model's input extents when needed.
Tensor fit_to_input(const NetworkConfig& cfg, const Tensor& image);

struct ForwardCache {
  Tensor input;
  Tensor stem_conv, stem_pre_act, stem_act;
  kernels::BatchNormCache stem_bn;
  std::vector<kernels::InvertedResidualCache> blocks;
  Tensor trunk_out;
  Tensor head_conv, head_pre_act, features;
  kernels::BatchNormCache head_bn;
  Tensor bridge_pre_act, bridge_act;  // [N, T, bridge]
  std::vector<gru::GruOutput> sequences;
};

// Class probabilities [N, class_count] with batch-norm in inference mode.
Tensor forward(const Model& model, const Tensor& batch);
Tensor forward(const Model& model, const std::vector<Tensor>& images);
// Train mode uses batch statistics and updates the running estimates.
Tensor forward_train(Model& model, const Tensor& batch, ForwardCache* cache);

struct Prediction {
  OcclusionClass occlusion = OcclusionClass::Face;
  Tensor probabilities;
  Tensor embedding;
};

Prediction classify(const Model& model, const Tensor& image);
// Final GRU hidden state, L2-normalised.
Tensor embed(const Model& model, const Tensor& image);

struct LossAndGradients {
  double loss = 0.0;  // mean cross-entropy over the batch
  std::size_t correct = 0;
  Model gradients;
};

// Mean cross-entropy of the final-step readout and its gradient for every trainable tensor.
LossAndGradients loss_and_gradients(Model& model, const Tensor& batch, const std::vector<int>& labels,
                                    kernels::Mode mode);
double batch_loss(const Model& model, const Tensor& batch, const std::vector<int>& labels);

}  // namespace occnet

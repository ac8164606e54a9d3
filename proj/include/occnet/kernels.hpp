#pragma once

#include <cstdint>
#include <vector>

#include "occnet/tensor.hpp"

// MobileNetV2 building blocks. Every image op accepts either a single image
// [H, W, C] or a batch [N, H, W, C] and returns a tensor of the same rank.
namespace occnet::kernels {

enum class Padding { same, valid };
enum class Mode { train, infer };

struct SpatialGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

// TF-style geometry: same-padding puts the odd extra pixel on the bottom/right.
SpatialGeometry conv_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

// Dense k x k convolution, weights [k, k, C_in, C_out]. Used for the stem.
Tensor conv2d(const Tensor& input, const Tensor& weights, std::size_t stride, Padding padding);

// One k x k filter per channel, kernels [k, k, C].
Tensor depthwise_conv(const Tensor& input, const Tensor& kernels, std::size_t stride, Padding padding);

// 1x1 convolution, weights [C_in, C_out].
Tensor pointwise_conv(const Tensor& input, const Tensor& weights);

struct ConvGrads {
  Tensor input;
  Tensor weights;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                          std::size_t stride, Padding padding);
ConvGrads depthwise_conv_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                                  std::size_t stride, Padding padding);
ConvGrads pointwise_conv_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out);

// Elementwise ReLU6 derivative given the pre-activation.
Tensor relu6_backward(const Tensor& pre_activation, const Tensor& grad_out);

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct BatchNormParams {
  Tensor scale;
  Tensor shift;
  Tensor running_mean;
  Tensor running_var;

  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return scale.size(); }
};

struct BatchNormCache {
  Mode mode = Mode::infer;
  Tensor normalized;
  std::vector<double> inv_std;
};

// Normalizes over every axis but the last. Train mode uses batch statistics and
// folds them into the running estimates; infer mode uses the running estimates.
Tensor batch_norm(const Tensor& input, BatchNormParams& params, Mode mode, BatchNormCache* cache = nullptr);
Tensor batch_norm(const Tensor& input, const BatchNormParams& params, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor input;
  Tensor scale;
  Tensor shift;
};

BatchNormGrads batch_norm_backward(const Tensor& grad_out, const BatchNormParams& params,
                                   const BatchNormCache& cache);

// [H, W, C] -> [C], or [N, H, W, C] -> [N, C].
Tensor global_average_pool(const Tensor& input);

struct ConvBlockParams {
  Tensor expand_weights;     // [d_in, t * d_in]
  BatchNormParams expand_bn;
  Tensor depthwise_weights;  // [3, 3, t * d_in]
  BatchNormParams depthwise_bn;
  Tensor project_weights;    // [t * d_in, d_out]
  BatchNormParams project_bn;
  std::size_t stride = 1;
  std::size_t expansion = 6;
  bool use_batch_norm = true;

  std::size_t in_channels() const { return expand_weights.dim(0); }
  std::size_t hidden_channels() const { return expand_weights.dim(1); }
  std::size_t out_channels() const { return project_weights.dim(1); }
  bool has_residual() const { return stride == 1 && in_channels() == out_channels(); }
  void validate() const;
};

struct InvertedResidualCache {
  Tensor input;
  Tensor expanded, expand_pre_act;
  BatchNormCache expand_bn;
  Tensor filtered, depthwise_pre_act;
  BatchNormCache depthwise_bn;
  Tensor projected;
  BatchNormCache project_bn;
  Tensor expand_act, depthwise_act;
};

// expand 1x1 + BN + ReLU6 -> depthwise 3x3 + BN + ReLU6 -> project 1x1 + BN,
// plus the identity shortcut when stride is 1 and channel counts agree.
Tensor inverted_residual(const Tensor& input, ConvBlockParams& params, Mode mode,
                         InvertedResidualCache* cache = nullptr);
Tensor inverted_residual(const Tensor& input, const ConvBlockParams& params);

struct InvertedResidualGrads {
  Tensor input;
  ConvBlockParams params;  // weights and BN scale/shift gradients; running stats unused
};

InvertedResidualGrads inverted_residual_backward(const Tensor& grad_out, const ConvBlockParams& params,
                                                 const InvertedResidualCache& cache);

struct ConvCostInput {
  std::uint64_t height = 1;
  std::uint64_t width = 1;
  std::uint64_t in_channels = 1;
  std::uint64_t out_channels = 1;
  std::uint64_t kernel = 1;

  void validate() const;
};

// Multiply-accumulates of a depthwise-separable layer:
// h*w*d_in*k^2 (depthwise) + h*w*d_in*d_out (pointwise). Throws on overflow.
std::uint64_t conv_cost(const ConvCostInput& c);

// Separable cost over the standard-convolution cost h*w*d_in*d_out*k^2.
double depletion_ratio(const ConvCostInput& c);

}  // namespace occnet::kernels

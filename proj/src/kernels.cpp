#include "occnet/kernels.hpp"

#include <cmath>
#include <string>

#include "occnet/error.hpp"

namespace occnet::kernels {
namespace {

struct ImageDims {
  std::size_t n, h, w, c;
};

ImageDims image_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  throw ShapeError(std::string(op) + " expects [H,W,C] or [N,H,W,C], got " + shape_to_string(t.shape()));
}

Shape image_shape(const Tensor& like, std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  if (like.rank() == 3) return {h, w, c};
  return {n, h, w, c};
}

void check_stride(std::size_t stride, const char* op) {
  if (stride != 1 && stride != 2) {
    throw ValueError(std::string(op) + " stride must be 1 or 2, got " + std::to_string(stride));
  }
}

// Window geometry shared by the forward and backward passes.
struct Window {
  SpatialGeometry rows, cols;
  std::size_t k, stride;

  // Input coordinate for output index o and kernel tap t; false when in padding.
  static bool source(const SpatialGeometry& g, std::size_t in, std::size_t stride, std::size_t o, std::size_t t,
                     std::size_t& i) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + t) - static_cast<std::ptrdiff_t>(g.pad_before);
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(in)) return false;
    i = static_cast<std::size_t>(pos);
    return true;
  }
};

Window make_window(const ImageDims& d, std::size_t k, std::size_t stride, Padding padding) {
  return {conv_geometry(d.h, k, stride, padding), conv_geometry(d.w, k, stride, padding), k, stride};
}

std::vector<double> channel_mean(const Tensor& t, std::size_t c) {
  std::vector<double> mean(c, 0.0);
  const std::size_t m = t.size() / c;
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += t[p * c + ch];
  for (auto& v : mean) v /= static_cast<double>(m);
  return mean;
}

void check_bn_params(const Tensor& input, const BatchNormParams& params) {
  const std::size_t c = input.shape().back();
  if (params.scale.size() != c || params.shift.size() != c || params.running_mean.size() != c ||
      params.running_var.size() != c) {
    throw ShapeError("batch norm parameters do not match " + std::to_string(c) + " channels");
  }
}

Tensor residual_sum(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }

}  // namespace

SpatialGeometry conv_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (padding == Padding::valid) {
    if (in < kernel) throw ShapeError("valid convolution input smaller than kernel");
    return {(in - kernel) / stride + 1, 0};
  }
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t pad_total = needed > in ? needed - in : 0;
  return {out, pad_total / 2};
}

Tensor conv2d(const Tensor& input, const Tensor& weights, std::size_t stride, Padding padding) {
  const auto d = image_dims(input, "conv2d");
  check_stride(stride, "conv2d");
  if (weights.rank() != 4 || weights.dim(0) != weights.dim(1) || weights.dim(2) != d.c) {
    throw ShapeError("conv2d weights " + shape_to_string(weights.shape()) + " do not fit input " +
                     shape_to_string(input.shape()));
  }
  const std::size_t k = weights.dim(0), c_out = weights.dim(3);
  const auto win = make_window(d, k, stride, padding);
  Tensor out(image_shape(input, d.n, win.rows.out, win.cols.out, c_out));
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < win.rows.out; ++oy) {
      for (std::size_t ox = 0; ox < win.cols.out; ++ox) {
        double* dst = out.data() + ((n * win.rows.out + oy) * win.cols.out + ox) * c_out;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t iy;
          if (!Window::source(win.rows, d.h, stride, oy, ky, iy)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ix;
            if (!Window::source(win.cols, d.w, stride, ox, kx, ix)) continue;
            const double* src = input.data() + ((n * d.h + iy) * d.w + ix) * d.c;
            const double* wrow = weights.data() + (ky * k + kx) * d.c * c_out;
            for (std::size_t ci = 0; ci < d.c; ++ci) {
              const double x = src[ci];
              const double* wv = wrow + ci * c_out;
              for (std::size_t co = 0; co < c_out; ++co) dst[co] += x * wv[co];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                          std::size_t stride, Padding padding) {
  const auto d = image_dims(input, "conv2d_backward");
  const std::size_t k = weights.dim(0), c_out = weights.dim(3);
  const auto win = make_window(d, k, stride, padding);
  if (grad_out.shape() != image_shape(input, d.n, win.rows.out, win.cols.out, c_out)) {
    throw ShapeError("conv2d_backward gradient shape " + shape_to_string(grad_out.shape()) + " is inconsistent");
  }
  ConvGrads g{Tensor(input.shape()), Tensor(weights.shape())};
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < win.rows.out; ++oy) {
      for (std::size_t ox = 0; ox < win.cols.out; ++ox) {
        const double* go = grad_out.data() + ((n * win.rows.out + oy) * win.cols.out + ox) * c_out;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t iy;
          if (!Window::source(win.rows, d.h, stride, oy, ky, iy)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ix;
            if (!Window::source(win.cols, d.w, stride, ox, kx, ix)) continue;
            const std::size_t in_off = ((n * d.h + iy) * d.w + ix) * d.c;
            const std::size_t w_off = (ky * k + kx) * d.c * c_out;
            for (std::size_t ci = 0; ci < d.c; ++ci) {
              const double x = input[in_off + ci];
              const double* wv = weights.data() + w_off + ci * c_out;
              double* gw = g.weights.data() + w_off + ci * c_out;
              double acc = 0.0;
              for (std::size_t co = 0; co < c_out; ++co) {
                gw[co] += x * go[co];
                acc += wv[co] * go[co];
              }
              g.input[in_off + ci] += acc;
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor depthwise_conv(const Tensor& input, const Tensor& kernels, std::size_t stride, Padding padding) {
  const auto d = image_dims(input, "depthwise_conv");
  check_stride(stride, "depthwise_conv");
  if (kernels.rank() != 3 || kernels.dim(0) != kernels.dim(1) || kernels.dim(0) % 2 == 0) {
    throw ShapeError("depthwise kernels must be [k,k,C] with odd k, got " + shape_to_string(kernels.shape()));
  }
  if (kernels.dim(2) != d.c) {
    throw ShapeError("depthwise kernel channels " + std::to_string(kernels.dim(2)) + " != input channels " +
                     std::to_string(d.c));
  }
  const std::size_t k = kernels.dim(0);
  const auto win = make_window(d, k, stride, padding);
  Tensor out(image_shape(input, d.n, win.rows.out, win.cols.out, d.c));
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < win.rows.out; ++oy) {
      for (std::size_t ox = 0; ox < win.cols.out; ++ox) {
        double* dst = out.data() + ((n * win.rows.out + oy) * win.cols.out + ox) * d.c;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t iy;
          if (!Window::source(win.rows, d.h, stride, oy, ky, iy)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ix;
            if (!Window::source(win.cols, d.w, stride, ox, kx, ix)) continue;
            const double* src = input.data() + ((n * d.h + iy) * d.w + ix) * d.c;
            const double* kv = kernels.data() + (ky * k + kx) * d.c;
            for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c] * kv[c];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads depthwise_conv_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out,
                                  std::size_t stride, Padding padding) {
  const auto d = image_dims(input, "depthwise_conv_backward");
  const std::size_t k = kernels.dim(0);
  const auto win = make_window(d, k, stride, padding);
  if (grad_out.shape() != image_shape(input, d.n, win.rows.out, win.cols.out, d.c)) {
    throw ShapeError("depthwise_conv_backward gradient shape " + shape_to_string(grad_out.shape()) +
                     " is inconsistent");
  }
  ConvGrads g{Tensor(input.shape()), Tensor(kernels.shape())};
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t oy = 0; oy < win.rows.out; ++oy) {
      for (std::size_t ox = 0; ox < win.cols.out; ++ox) {
        const double* go = grad_out.data() + ((n * win.rows.out + oy) * win.cols.out + ox) * d.c;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t iy;
          if (!Window::source(win.rows, d.h, stride, oy, ky, iy)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ix;
            if (!Window::source(win.cols, d.w, stride, ox, kx, ix)) continue;
            const std::size_t in_off = ((n * d.h + iy) * d.w + ix) * d.c;
            const std::size_t k_off = (ky * k + kx) * d.c;
            for (std::size_t c = 0; c < d.c; ++c) {
              g.weights[k_off + c] += input[in_off + c] * go[c];
              g.input[in_off + c] += kernels[k_off + c] * go[c];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor pointwise_conv(const Tensor& input, const Tensor& weights) {
  const auto d = image_dims(input, "pointwise_conv");
  if (weights.rank() != 2 || weights.dim(0) != d.c) {
    throw ShapeError("pointwise weights " + shape_to_string(weights.shape()) + " do not fit " +
                     std::to_string(d.c) + " input channels");
  }
  const std::size_t c_out = weights.dim(1);
  const std::size_t pixels = d.n * d.h * d.w;
  Tensor out(image_shape(input, d.n, d.h, d.w, c_out));
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* src = input.data() + p * d.c;
    double* dst = out.data() + p * c_out;
    for (std::size_t ci = 0; ci < d.c; ++ci) {
      const double x = src[ci];
      const double* wv = weights.data() + ci * c_out;
      for (std::size_t co = 0; co < c_out; ++co) dst[co] += x * wv[co];
    }
  }
  return out;
}

ConvGrads pointwise_conv_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
  const auto d = image_dims(input, "pointwise_conv_backward");
  const std::size_t c_out = weights.dim(1);
  if (grad_out.shape() != image_shape(input, d.n, d.h, d.w, c_out)) {
    throw ShapeError("pointwise_conv_backward gradient shape " + shape_to_string(grad_out.shape()) +
                     " is inconsistent");
  }
  ConvGrads g{Tensor(input.shape()), Tensor(weights.shape())};
  const std::size_t pixels = d.n * d.h * d.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double* src = input.data() + p * d.c;
    const double* go = grad_out.data() + p * c_out;
    double* gi = g.input.data() + p * d.c;
    for (std::size_t ci = 0; ci < d.c; ++ci) {
      const double x = src[ci];
      const double* wv = weights.data() + ci * c_out;
      double* gw = g.weights.data() + ci * c_out;
      double acc = 0.0;
      for (std::size_t co = 0; co < c_out; ++co) {
        gw[co] += x * go[co];
        acc += wv[co] * go[co];
      }
      gi[ci] = acc;
    }
  }
  return g;
}

Tensor relu6_backward(const Tensor& pre_activation, const Tensor& grad_out) {
  if (pre_activation.shape() != grad_out.shape()) throw ShapeError("relu6_backward shape mismatch");
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = pre_activation[i];
    g[i] = (v > 0.0 && v < 6.0) ? grad_out[i] : 0.0;
  }
  return g;
}

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  return {Tensor({channels}, 1.0), Tensor({channels}, 0.0), Tensor({channels}, 0.0), Tensor({channels}, 1.0)};
}

Tensor batch_norm(const Tensor& input, BatchNormParams& params, Mode mode, BatchNormCache* cache) {
  if (mode == Mode::infer) return batch_norm(input, static_cast<const BatchNormParams&>(params), cache);
  if (input.rank() == 0 || input.empty()) throw ShapeError("batch norm needs a non-empty tensor");
  check_bn_params(input, params);
  const std::size_t c = input.shape().back();
  const std::size_t m = input.size() / c;
  const auto mean = channel_mean(input, c);
  std::vector<double> var(c, 0.0);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double dv = input[p * c + ch] - mean[ch];
      var[ch] += dv * dv;
    }
  }
  for (auto& v : var) v /= static_cast<double>(m);

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + kBatchNormEpsilon);

  Tensor normalized(input.shape());
  Tensor out(input.shape());
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      normalized[i] = (input[i] - mean[ch]) * inv_std[ch];
      out[i] = params.scale[ch] * normalized[i] + params.shift[ch];
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    params.running_mean[ch] = kBatchNormMomentum * params.running_mean[ch] + (1.0 - kBatchNormMomentum) * mean[ch];
    params.running_var[ch] = kBatchNormMomentum * params.running_var[ch] + (1.0 - kBatchNormMomentum) * var[ch];
  }
  if (cache) {
    cache->mode = Mode::train;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Tensor batch_norm(const Tensor& input, const BatchNormParams& params, BatchNormCache* cache) {
  if (input.rank() == 0 || input.empty()) throw ShapeError("batch norm needs a non-empty tensor");
  check_bn_params(input, params);
  const std::size_t c = input.shape().back();
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!(params.running_var[ch] > 0.0)) {
      throw ValueError("batch norm running variance must be positive (channel " + std::to_string(ch) + ")");
    }
    inv_std[ch] = 1.0 / std::sqrt(params.running_var[ch] + kBatchNormEpsilon);
  }
  Tensor normalized(input.shape());
  Tensor out(input.shape());
  const std::size_t m = input.size() / c;
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      normalized[i] = (input[i] - params.running_mean[ch]) * inv_std[ch];
      out[i] = params.scale[ch] * normalized[i] + params.shift[ch];
    }
  }
  if (cache) {
    cache->mode = Mode::infer;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGrads batch_norm_backward(const Tensor& grad_out, const BatchNormParams& params,
                                   const BatchNormCache& cache) {
  if (grad_out.shape() != cache.normalized.shape()) throw ShapeError("batch_norm_backward shape mismatch");
  const std::size_t c = grad_out.shape().back();
  const std::size_t m = grad_out.size() / c;
  BatchNormGrads g{Tensor(grad_out.shape()), Tensor({c}), Tensor({c})};
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      g.scale[ch] += grad_out[i] * cache.normalized[i];
      g.shift[ch] += grad_out[i];
    }
  }
  if (cache.mode == Mode::infer) {
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        g.input[p * c + ch] = grad_out[p * c + ch] * params.scale[ch] * cache.inv_std[ch];
    return g;
  }
  // d/dx of gamma * (x - mean) / std with batch statistics.
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = p * c + ch;
      const double dxhat = grad_out[i] * params.scale[ch];
      const double sum_dxhat = g.shift[ch] * params.scale[ch];
      const double sum_dxhat_xhat = g.scale[ch] * params.scale[ch];
      g.input[i] = cache.inv_std[ch] * inv_m *
                   (static_cast<double>(m) * dxhat - sum_dxhat - cache.normalized[i] * sum_dxhat_xhat);
    }
  }
  return g;
}

Tensor global_average_pool(const Tensor& input) {
  const auto d = image_dims(input, "global_average_pool");
  if (d.h == 0 || d.w == 0) throw ShapeError("global_average_pool needs non-empty spatial extents");
  Tensor out(input.rank() == 3 ? Shape{d.c} : Shape{d.n, d.c});
  const std::size_t pixels = d.h * d.w;
  for (std::size_t n = 0; n < d.n; ++n) {
    double* dst = out.data() + n * d.c;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double* src = input.data() + (n * pixels + p) * d.c;
      for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c];
    }
    for (std::size_t c = 0; c < d.c; ++c) dst[c] /= static_cast<double>(pixels);
  }
  return out;
}

void ConvBlockParams::validate() const {
  if (expand_weights.rank() != 2 || depthwise_weights.rank() != 3 || project_weights.rank() != 2) {
    throw ShapeError("inverted residual weights have the wrong rank");
  }
  const std::size_t hidden = expand_weights.dim(1);
  if (depthwise_weights.dim(2) != hidden || project_weights.dim(0) != hidden) {
    throw ShapeError("inverted residual channels do not chain: expand " + shape_to_string(expand_weights.shape()) +
                     ", depthwise " + shape_to_string(depthwise_weights.shape()) + ", project " +
                     shape_to_string(project_weights.shape()));
  }
  if (expansion < 1 || hidden != expansion * expand_weights.dim(0)) {
    throw ShapeError("expansion factor " + std::to_string(expansion) + " does not match expand weights " +
                     shape_to_string(expand_weights.shape()));
  }
  if (stride != 1 && stride != 2) throw ValueError("inverted residual stride must be 1 or 2");
  if (use_batch_norm) {
    if (expand_bn.channels() != hidden || depthwise_bn.channels() != hidden ||
        project_bn.channels() != project_weights.dim(1)) {
      throw ShapeError("inverted residual batch norm channel counts are inconsistent");
    }
  }
}

namespace {

Tensor maybe_bn(const Tensor& x, BatchNormParams& bn, Mode mode, bool enabled, BatchNormCache* cache) {
  if (!enabled) return x;
  return batch_norm(x, bn, mode, cache);
}

Tensor block_forward(const Tensor& input, ConvBlockParams& p, Mode mode, InvertedResidualCache* cache) {
  const auto d = image_dims(input, "inverted_residual");
  p.validate();
  if (d.c != p.in_channels()) {
    throw ShapeError("inverted residual expects " + std::to_string(p.in_channels()) + " input channels, got " +
                     std::to_string(d.c));
  }
  InvertedResidualCache local;
  InvertedResidualCache& c = cache ? *cache : local;
  c.input = input;
  c.expanded = pointwise_conv(input, p.expand_weights);
  c.expand_pre_act = maybe_bn(c.expanded, p.expand_bn, mode, p.use_batch_norm, &c.expand_bn);
  c.expand_act = activate(Activation::relu6, c.expand_pre_act);
  c.filtered = depthwise_conv(c.expand_act, p.depthwise_weights, p.stride, Padding::same);
  c.depthwise_pre_act = maybe_bn(c.filtered, p.depthwise_bn, mode, p.use_batch_norm, &c.depthwise_bn);
  c.depthwise_act = activate(Activation::relu6, c.depthwise_pre_act);
  c.projected = pointwise_conv(c.depthwise_act, p.project_weights);
  Tensor out = maybe_bn(c.projected, p.project_bn, mode, p.use_batch_norm, &c.project_bn);
  if (p.has_residual()) out = residual_sum(out, input);
  return out;
}

}  // namespace

Tensor inverted_residual(const Tensor& input, ConvBlockParams& params, Mode mode, InvertedResidualCache* cache) {
  return block_forward(input, params, mode, cache);
}

Tensor inverted_residual(const Tensor& input, const ConvBlockParams& params) {
  // Infer mode never touches running statistics, so the copy is only for the shared code path.
  ConvBlockParams copy = params;
  return block_forward(input, copy, Mode::infer, nullptr);
}

InvertedResidualGrads inverted_residual_backward(const Tensor& grad_out, const ConvBlockParams& p,
                                                 const InvertedResidualCache& c) {
  InvertedResidualGrads g;
  g.params.stride = p.stride;
  g.params.expansion = p.expansion;
  g.params.use_batch_norm = p.use_batch_norm;

  Tensor grad = grad_out;
  if (p.use_batch_norm) {
    auto bn = batch_norm_backward(grad, p.project_bn, c.project_bn);
    grad = std::move(bn.input);
    g.params.project_bn = {std::move(bn.scale), std::move(bn.shift), Tensor(), Tensor()};
  }
  auto proj = pointwise_conv_backward(c.depthwise_act, p.project_weights, grad);
  g.params.project_weights = std::move(proj.weights);

  grad = relu6_backward(c.depthwise_pre_act, proj.input);
  if (p.use_batch_norm) {
    auto bn = batch_norm_backward(grad, p.depthwise_bn, c.depthwise_bn);
    grad = std::move(bn.input);
    g.params.depthwise_bn = {std::move(bn.scale), std::move(bn.shift), Tensor(), Tensor()};
  }
  auto dw = depthwise_conv_backward(c.expand_act, p.depthwise_weights, grad, p.stride, Padding::same);
  g.params.depthwise_weights = std::move(dw.weights);

  grad = relu6_backward(c.expand_pre_act, dw.input);
  if (p.use_batch_norm) {
    auto bn = batch_norm_backward(grad, p.expand_bn, c.expand_bn);
    grad = std::move(bn.input);
    g.params.expand_bn = {std::move(bn.scale), std::move(bn.shift), Tensor(), Tensor()};
  }
  auto ex = pointwise_conv_backward(c.input, p.expand_weights, grad);
  g.params.expand_weights = std::move(ex.weights);
  g.input = std::move(ex.input);
  if (p.has_residual()) add_into(g.input, grad_out);
  return g;
}

void ConvCostInput::validate() const {
  if (height < 1 || width < 1 || in_channels < 1 || out_channels < 1 || kernel < 1) {
    throw ValueError("cost model inputs must all be >= 1");
  }
}

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw ValueError("convolution cost overflows 64-bit integer");
  return r;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw ValueError("convolution cost overflows 64-bit integer");
  return r;
}

}  // namespace

std::uint64_t conv_cost(const ConvCostInput& c) {
  c.validate();
  const std::uint64_t plane = checked_mul(checked_mul(c.height, c.width), c.in_channels);
  return checked_add(checked_mul(plane, checked_mul(c.kernel, c.kernel)), checked_mul(plane, c.out_channels));
}

double depletion_ratio(const ConvCostInput& c) {
  c.validate();
  const long double plane = static_cast<long double>(c.height) * c.width * c.in_channels;
  const long double k2 = static_cast<long double>(c.kernel) * c.kernel;
  const long double numerator = plane * k2 + plane * c.out_channels;
  const long double denominator = plane * c.out_channels * k2;
  return static_cast<double>(numerator / denominator);
}

}  // namespace occnet::kernels

#include "occnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <type_traits>

#include "occnet/error.hpp"
#include "occnet/rng.hpp"

namespace occnet {

using kernels::BatchNormParams;
using kernels::ConvBlockParams;
using kernels::Mode;
using kernels::Padding;

NetworkConfig NetworkConfig::full() {
  NetworkConfig c;
  c.profile = "full";
  c.blocks = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
              {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  return c;
}

NetworkConfig NetworkConfig::toy() {
  NetworkConfig c;
  c.profile = "toy";
  c.input_height = c.input_width = 32;
  c.stem_stride = 1;
  c.blocks = {{6, 32, 1, 2}, {6, 64, 1, 2}, {6, 96, 1, 2}};
  c.width_multiplier = 0.25;
  c.head_channels = 64;
  c.bridge_size = 32;
  c.hidden_size = 16;
  return c;
}

NetworkConfig NetworkConfig::from_profile(std::string_view name) {
  if (name == "full") return full();
  if (name == "toy") return toy();
  throw ValueError("unknown profile '" + std::string(name) + "' (expected full or toy)");
}

std::size_t NetworkConfig::scaled(std::size_t channels) const {
  // Round to a multiple of 8, never dropping more than 10%.
  const double v = static_cast<double>(channels) * width_multiplier;
  std::size_t out = std::max<std::size_t>(8, static_cast<std::size_t>(v + 4.0) / 8 * 8);
  if (static_cast<double>(out) < 0.9 * v) out += 8;
  return out;
}

void NetworkConfig::validate() const {
  if (input_height == 0 || input_width == 0 || input_channels == 0) throw ValueError("input extents must be positive");
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) throw ValueError("width multiplier must be in (0, 1]");
  if (class_count != kOcclusionClassCount) {
    throw ValueError("class count must be " + std::to_string(kOcclusionClassCount));
  }
  if (stem_stride != 1 && stem_stride != 2) throw ValueError("stem stride must be 1 or 2");
  if (blocks.empty()) throw ValueError("block table is empty");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.stride != 1 && b.stride != 2) {
      throw ValueError("block " + std::to_string(i) + " stride must be 1 or 2");
    }
    if (b.expansion < 1 || b.channels == 0 || b.repeats == 0) {
      throw ValueError("block " + std::to_string(i) + " needs expansion, channels and repeats >= 1");
    }
  }
  if (stem_channels == 0 || head_channels == 0 || bridge_size == 0 || hidden_size == 0) {
    throw ValueError("layer sizes must be positive");
  }
}

namespace {

std::size_t downsample(std::size_t extent, const NetworkConfig& c) {
  auto step = [](std::size_t e, std::size_t s) { return kernels::conv_geometry(e, 3, s, Padding::same).out; };
  extent = step(extent, c.stem_stride);
  for (const auto& b : c.blocks) extent = step(extent, b.stride);
  return extent;
}

std::string order_name(SequenceOrder o) { return o == SequenceOrder::row_major ? "row_major" : "column_major"; }

}  // namespace

std::size_t NetworkConfig::feature_height() const { return downsample(input_height, *this); }
std::size_t NetworkConfig::feature_width() const { return downsample(input_width, *this); }

std::string NetworkConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "profile = " << profile << "\n";
  out << "input = " << input_height << "x" << input_width << "x" << input_channels << "\n";
  out << "stem = " << stem_channels << ":" << stem_stride << "\n";
  out << "blocks = ";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    out << (i ? "," : "") << b.expansion << ":" << b.channels << ":" << b.repeats << ":" << b.stride;
  }
  out << "\n";
  out << "width_multiplier = " << width_multiplier << "\n";
  out << "head_channels = " << head_channels << "\n";
  out << "bridge_size = " << bridge_size << "\n";
  out << "hidden_size = " << hidden_size << "\n";
  out << "class_count = " << class_count << "\n";
  out << "sequence = " << order_name(sequence) << "\n";
  out << "batch_norm = " << (batch_norm ? 1 : 0) << "\n";
  return out.str();
}

NetworkConfig NetworkConfig::from_text(std::string_view text) {
  NetworkConfig c;
  c.blocks.clear();
  std::istringstream in{std::string(text)};
  std::string line;
  auto bad = [](const std::string& l) { return ValueError("malformed network config line: '" + l + "'"); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw bad(line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    std::istringstream v(value);
    char sep = 0;
    if (key == "profile") {
      c.profile = value;
    } else if (key == "input") {
      if (!(v >> c.input_height >> sep >> c.input_width >> sep >> c.input_channels)) throw bad(line);
    } else if (key == "stem") {
      if (!(v >> c.stem_channels >> sep >> c.stem_stride)) throw bad(line);
    } else if (key == "blocks") {
      std::string item;
      while (std::getline(v, item, ',')) {
        std::istringstream iv(item);
        BlockSpec b;
        char s1, s2, s3;
        if (!(iv >> b.expansion >> s1 >> b.channels >> s2 >> b.repeats >> s3 >> b.stride)) throw bad(line);
        c.blocks.push_back(b);
      }
    } else if (key == "width_multiplier") {
      if (!(v >> c.width_multiplier)) throw bad(line);
    } else if (key == "head_channels") {
      if (!(v >> c.head_channels)) throw bad(line);
    } else if (key == "bridge_size") {
      if (!(v >> c.bridge_size)) throw bad(line);
    } else if (key == "hidden_size") {
      if (!(v >> c.hidden_size)) throw bad(line);
    } else if (key == "class_count") {
      if (!(v >> c.class_count)) throw bad(line);
    } else if (key == "sequence") {
      if (value == "row_major") c.sequence = SequenceOrder::row_major;
      else if (value == "column_major") c.sequence = SequenceOrder::column_major;
      else throw bad(line);
    } else if (key == "batch_norm") {
      int flag = 0;
      if (!(v >> flag)) throw bad(line);
      c.batch_norm = flag != 0;
    } else {
      throw ValueError("unknown network config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

void Model::for_each(const std::function<void(const std::string&, Tensor&, ParamRole)>& fn) {
  auto bn = [&](const std::string& prefix, BatchNormParams& p) {
    fn(prefix + ".scale", p.scale, ParamRole::affine);
    fn(prefix + ".shift", p.shift, ParamRole::affine);
    fn(prefix + ".running_mean", p.running_mean, ParamRole::running_stat);
    fn(prefix + ".running_var", p.running_var, ParamRole::running_stat);
  };
  fn("stem.weights", stem_weights, ParamRole::weight);
  bn("stem.bn", stem_bn);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i);
    auto& b = blocks[i];
    fn(p + ".expand.weights", b.expand_weights, ParamRole::weight);
    bn(p + ".expand.bn", b.expand_bn);
    fn(p + ".depthwise.weights", b.depthwise_weights, ParamRole::weight);
    bn(p + ".depthwise.bn", b.depthwise_bn);
    fn(p + ".project.weights", b.project_weights, ParamRole::weight);
    bn(p + ".project.bn", b.project_bn);
  }
  fn("head.weights", head_weights, ParamRole::weight);
  bn("head.bn", head_bn);
  fn("bridge.weights", bridge_weights, ParamRole::weight);
  fn("bridge.bias", bridge_bias, ParamRole::affine);
  gru.for_each([&](std::string_view name, Tensor& t) {
    const bool is_bias = name.front() == 'b';
    fn("gru." + std::string(name), t, is_bias ? ParamRole::affine : ParamRole::weight);
  });
}

void Model::for_each(const std::function<void(const std::string&, const Tensor&, ParamRole)>& fn) const {
  const_cast<Model*>(this)->for_each(
      [&](const std::string& name, Tensor& t, ParamRole role) { fn(name, t, role); });
}

std::size_t Model::trainable_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t, ParamRole role) {
    if (role != ParamRole::running_stat) n += t.size();
  });
  return n;
}

namespace {

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

Model build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.config = cfg;
  const std::size_t stem = cfg.scaled(cfg.stem_channels);
  m.stem_weights = he_uniform({3, 3, cfg.input_channels, stem}, 9 * cfg.input_channels, rng);
  m.stem_bn = BatchNormParams::identity(stem);
  std::size_t channels = stem;
  for (const auto& spec : cfg.blocks) {
    const std::size_t out = cfg.scaled(spec.channels);
    for (std::size_t r = 0; r < spec.repeats; ++r) {
      ConvBlockParams b;
      const std::size_t hidden = channels * spec.expansion;
      b.expansion = spec.expansion;
      b.stride = r == 0 ? spec.stride : 1;
      b.use_batch_norm = cfg.batch_norm;
      b.expand_weights = he_uniform({channels, hidden}, channels, rng);
      b.expand_bn = BatchNormParams::identity(hidden);
      b.depthwise_weights = he_uniform({3, 3, hidden}, 9, rng);
      b.depthwise_bn = BatchNormParams::identity(hidden);
      b.project_weights = he_uniform({hidden, out}, hidden, rng);
      b.project_bn = BatchNormParams::identity(out);
      m.blocks.push_back(std::move(b));
      channels = out;
    }
  }
  m.head_weights = he_uniform({channels, cfg.head_channels}, channels, rng);
  m.head_bn = BatchNormParams::identity(cfg.head_channels);
  m.bridge_weights = he_uniform({cfg.bridge_size, cfg.head_channels}, cfg.head_channels, rng);
  m.bridge_bias = Tensor({cfg.bridge_size});
  m.gru = gru::GruCellParams::initialize(cfg.bridge_size, cfg.hidden_size, cfg.class_count, rng);
  m.rng_state = rng.state();
  return m;
}

Model zeros_like(const Model& model) {
  Model z = model;
  z.for_each([](const std::string&, Tensor& t, ParamRole) { t.fill(0.0); });
  return z;
}

void snap_to_single_precision(Model& model) {
  model.for_each([](const std::string&, Tensor& t, ParamRole) {
    for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
  });
}

Tensor fit_to_input(const NetworkConfig& cfg, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != cfg.input_channels) {
    throw ShapeError("image " + shape_to_string(image.shape()) + " is not [H,W," +
                     std::to_string(cfg.input_channels) + "]");
  }
  if (image.dim(0) == cfg.input_height && image.dim(1) == cfg.input_width) return image;
  return data::resize_bilinear(image, cfg.input_height, cfg.input_width);
}

Tensor stack_images(const NetworkConfig& cfg, const std::vector<Tensor>& images) {
  const Shape expected{cfg.input_height, cfg.input_width, cfg.input_channels};
  const std::size_t per = shape_volume(expected);
  Tensor batch({images.size(), cfg.input_height, cfg.input_width, cfg.input_channels});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != expected) {
      throw ShapeError("image " + std::to_string(i) + " has extents " + shape_to_string(images[i].shape()) +
                       ", model expects " + shape_to_string(expected));
    }
    std::copy(images[i].values().begin(), images[i].values().end(), batch.data() + i * per);
  }
  return batch;
}

namespace {

template <typename M>
Tensor normalize(const Tensor& x, M& params, Mode mode, bool enabled, kernels::BatchNormCache* cache) {
  if (!enabled) return x;
  if constexpr (std::is_const_v<M>) {
    return kernels::batch_norm(x, params, cache);
  } else {
    return kernels::batch_norm(x, params, mode, cache);
  }
}

void check_batch(const NetworkConfig& cfg, const Tensor& batch) {
  const Shape expected{cfg.input_height, cfg.input_width, cfg.input_channels};
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != expected) {
    throw ShapeError("input batch " + shape_to_string(batch.shape()) + " does not match model input " +
                     shape_to_string(expected));
  }
  if (batch.dim(0) == 0) throw ShapeError("input batch is empty");
}

// Position index p (timestep) -> flat spatial offset in the feature map.
std::size_t position_offset(const NetworkConfig& cfg, std::size_t p) {
  if (cfg.sequence == SequenceOrder::row_major) return p;
  const std::size_t h = cfg.feature_height();
  return (p % h) * cfg.feature_width() + p / h;
}

template <typename M>
Tensor forward_impl(M& model, const Tensor& batch, Mode mode, ForwardCache& c) {
  const auto& cfg = model.config;
  check_batch(cfg, batch);
  if constexpr (std::is_const_v<M>) mode = Mode::infer;
  const bool bn = cfg.batch_norm;

  c.input = batch;
  c.stem_conv = kernels::conv2d(batch, model.stem_weights, cfg.stem_stride, Padding::same);
  c.stem_pre_act = normalize(c.stem_conv, model.stem_bn, mode, bn, &c.stem_bn);
  c.stem_act = activate(Activation::relu6, c.stem_pre_act);

  c.blocks.assign(model.blocks.size(), {});
  Tensor x = c.stem_act;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    if constexpr (std::is_const_v<M>) {
      ConvBlockParams& block = const_cast<ConvBlockParams&>(model.blocks[i]);
      x = kernels::inverted_residual(x, block, Mode::infer, &c.blocks[i]);
    } else {
      x = kernels::inverted_residual(x, model.blocks[i], mode, &c.blocks[i]);
    }
  }
  c.trunk_out = std::move(x);
  c.head_conv = kernels::pointwise_conv(c.trunk_out, model.head_weights);
  c.head_pre_act = normalize(c.head_conv, model.head_bn, mode, bn, &c.head_bn);
  c.features = activate(Activation::relu6, c.head_pre_act);

  const std::size_t n = batch.dim(0), steps = cfg.sequence_length(), head = cfg.head_channels,
                    bridge = cfg.bridge_size;
  c.bridge_pre_act = Tensor({n, steps, bridge});
  c.bridge_act = Tensor({n, steps, bridge});
  c.sequences.clear();
  c.sequences.reserve(n);
  Tensor probs({n, cfg.class_count});
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<Tensor> xs;
    xs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      const double* feat = c.features.data() + (s * steps + position_offset(cfg, t)) * head;
      Tensor z({bridge});
      for (std::size_t j = 0; j < bridge; ++j) {
        const double* w = model.bridge_weights.data() + j * head;
        double acc = model.bridge_bias[j];
        for (std::size_t k = 0; k < head; ++k) acc += w[k] * feat[k];
        z[j] = acc;
      }
      Tensor a({bridge});
      for (std::size_t j = 0; j < bridge; ++j) {
        a[j] = std::max(z[j], 0.0);
        c.bridge_pre_act[(s * steps + t) * bridge + j] = z[j];
        c.bridge_act[(s * steps + t) * bridge + j] = a[j];
      }
      xs.push_back(std::move(a));
    }
    auto out = gru::gru_forward(model.gru, Tensor({cfg.hidden_size}), xs);
    std::copy(out.y_hat.values().begin(), out.y_hat.values().end(), probs.data() + s * cfg.class_count);
    c.sequences.push_back(std::move(out));
  }
  return probs;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double sample_loss(const Tensor& probs, std::size_t row, int label) {
  const double p = probs[row * probs.dim(1) + static_cast<std::size_t>(label)];
  return -std::log(std::max(p, gru::kProbabilityFloor));
}

void check_labels(const Model& model, const Tensor& batch, const std::vector<int>& labels) {
  if (labels.size() != batch.dim(0)) throw ShapeError("label count does not match batch size");
  for (int l : labels) {
    if (l < 0 || l >= static_cast<int>(model.config.class_count)) {
      throw ValueError("label " + std::to_string(l) + " outside the class range");
    }
  }
}

}  // namespace

Tensor forward(const Model& model, const Tensor& batch) {
  ForwardCache cache;
  return forward_impl(model, batch, Mode::infer, cache);
}

Tensor forward(const Model& model, const std::vector<Tensor>& images) {
  return forward(model, stack_images(model.config, images));
}

Tensor forward_train(Model& model, const Tensor& batch, ForwardCache* cache) {
  ForwardCache local;
  return forward_impl(model, batch, Mode::train, cache ? *cache : local);
}

Prediction classify(const Model& model, const Tensor& image) {
  const Tensor fitted = fit_to_input(model.config, image);
  ForwardCache cache;
  const Tensor probs = forward_impl(model, stack_images(model.config, {fitted}), Mode::infer, cache);
  Prediction p;
  p.probabilities = probs.reshaped({probs.size()});
  p.occlusion = class_from_code(static_cast<int>(argmax(p.probabilities.values())));
  const Tensor& h = cache.sequences.front().trace.hs.back();
  const double norm = l2_norm(h.values());
  if (!(norm > 0.0)) throw ValueError("embedding has zero norm");
  p.embedding = h;
  scale_into(p.embedding, 1.0 / norm);
  return p;
}

Tensor embed(const Model& model, const Tensor& image) { return classify(model, image).embedding; }

double batch_loss(const Model& model, const Tensor& batch, const std::vector<int>& labels) {
  check_labels(model, batch, labels);
  const Tensor probs = forward(model, batch);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) loss += sample_loss(probs, i, labels[i]);
  return loss / static_cast<double>(labels.size());
}

LossAndGradients loss_and_gradients(Model& model, const Tensor& batch, const std::vector<int>& labels, Mode mode) {
  check_labels(model, batch, labels);
  const auto& cfg = model.config;
  ForwardCache c;
  const Tensor probs = mode == Mode::train ? forward_impl(model, batch, Mode::train, c)
                                           : forward_impl(static_cast<const Model&>(model), batch, Mode::infer, c);
  const std::size_t n = batch.dim(0), steps = cfg.sequence_length(), head = cfg.head_channels,
                    bridge = cfg.bridge_size;
  const double inv_n = 1.0 / static_cast<double>(n);

  LossAndGradients out;
  out.gradients = zeros_like(model);
  Model& g = out.gradients;

  // GRU and bridge, one sequence at a time in batch order.
  Tensor d_features(c.features.shape());
  for (std::size_t s = 0; s < n; ++s) {
    out.loss += sample_loss(probs, s, labels[s]) * inv_n;
    if (argmax(std::span<const double>(probs.data() + s * cfg.class_count, cfg.class_count)) ==
        static_cast<std::size_t>(labels[s])) {
      ++out.correct;
    }
    Tensor target({cfg.class_count});
    target[static_cast<std::size_t>(labels[s])] = 1.0;
    auto gg = gru::gru_backward(model.gru, c.sequences[s].trace, {target});
    std::vector<Tensor*> acc;
    g.gru.for_each([&](std::string_view, Tensor& t) { acc.push_back(&t); });
    std::size_t k = 0;
    gg.params.for_each([&](std::string_view, Tensor& t) {
      scale_into(t, inv_n);
      add_into(*acc[k++], t);
    });
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t row = (s * steps + t) * bridge;
      const double* feat = c.features.data() + (s * steps + position_offset(cfg, t)) * head;
      double* dfeat = d_features.data() + (s * steps + position_offset(cfg, t)) * head;
      for (std::size_t j = 0; j < bridge; ++j) {
        if (!(c.bridge_pre_act[row + j] > 0.0)) continue;
        const double da = gg.inputs[t][j] * inv_n;
        g.bridge_bias[j] += da;
        double* gw = g.bridge_weights.data() + j * head;
        const double* w = model.bridge_weights.data() + j * head;
        for (std::size_t k = 0; k < head; ++k) {
          gw[k] += da * feat[k];
          dfeat[k] += da * w[k];
        }
      }
    }
  }

  // Head.
  Tensor grad = kernels::relu6_backward(c.head_pre_act, d_features);
  if (cfg.batch_norm) {
    auto bn = kernels::batch_norm_backward(grad, model.head_bn, c.head_bn);
    g.head_bn.scale = std::move(bn.scale);
    g.head_bn.shift = std::move(bn.shift);
    grad = std::move(bn.input);
  }
  auto head_grads = kernels::pointwise_conv_backward(c.trunk_out, model.head_weights, grad);
  g.head_weights = std::move(head_grads.weights);
  grad = std::move(head_grads.input);

  // Inverted residual stack.
  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    auto bg = kernels::inverted_residual_backward(grad, model.blocks[i], c.blocks[i]);
    auto& dst = g.blocks[i];
    dst.expand_weights = std::move(bg.params.expand_weights);
    dst.depthwise_weights = std::move(bg.params.depthwise_weights);
    dst.project_weights = std::move(bg.params.project_weights);
    if (cfg.batch_norm) {
      dst.expand_bn.scale = std::move(bg.params.expand_bn.scale);
      dst.expand_bn.shift = std::move(bg.params.expand_bn.shift);
      dst.depthwise_bn.scale = std::move(bg.params.depthwise_bn.scale);
      dst.depthwise_bn.shift = std::move(bg.params.depthwise_bn.shift);
      dst.project_bn.scale = std::move(bg.params.project_bn.scale);
      dst.project_bn.shift = std::move(bg.params.project_bn.shift);
    }
    grad = std::move(bg.input);
  }

  // Stem.
  grad = kernels::relu6_backward(c.stem_pre_act, grad);
  if (cfg.batch_norm) {
    auto bn = kernels::batch_norm_backward(grad, model.stem_bn, c.stem_bn);
    g.stem_bn.scale = std::move(bn.scale);
    g.stem_bn.shift = std::move(bn.shift);
    grad = std::move(bn.input);
  }
  g.stem_weights = kernels::conv2d_backward(c.input, model.stem_weights, grad, cfg.stem_stride, Padding::same).weights;
  return out;
}

}  // namespace occnet

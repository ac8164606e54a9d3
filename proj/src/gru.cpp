#include "occnet/gru.hpp"

#include <cmath>
#include <string>

#include "occnet/error.hpp"

namespace occnet::gru {
namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

void expect_shape(const Tensor& t, const Shape& shape, const char* name) {
  if (t.shape() != shape) {
    throw ShapeError(std::string("GRU parameter ") + name + " has shape " + shape_to_string(t.shape()) +
                     ", expected " + shape_to_string(shape));
  }
}

Tensor affine3(const Tensor& w, const Tensor& h, const Tensor& u, const Tensor& x, const Tensor& bias) {
  Tensor a = matvec(w, h);
  const Tensor ux = matvec(u, x);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += ux[i] + bias[i];
  return a;
}

Tensor readout(const GruCellParams& p, const Tensor& h) {
  Tensor logits = matvec(p.V, h);
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += p.b[i];
  return activate(Activation::softmax, logits);
}

}  // namespace

GruCellParams GruCellParams::zeros(std::size_t n_x, std::size_t n_h, std::size_t n_y) {
  GruCellParams p;
  p.W_g = p.W_f = p.W_r = Tensor({n_h, n_h});
  p.U_g = p.U_f = p.U_r = Tensor({n_h, n_x});
  p.b_g = p.b_f = p.b_r = Tensor({n_h});
  p.V = Tensor({n_y, n_h});
  p.b = Tensor({n_y});
  return p;
}

GruCellParams GruCellParams::initialize(std::size_t n_x, std::size_t n_h, std::size_t n_y, Rng& rng) {
  GruCellParams p = zeros(n_x, n_h, n_y);
  p.W_g = glorot(n_h, n_h, rng);
  p.W_f = glorot(n_h, n_h, rng);
  p.W_r = glorot(n_h, n_h, rng);
  p.U_g = glorot(n_h, n_x, rng);
  p.U_f = glorot(n_h, n_x, rng);
  p.U_r = glorot(n_h, n_x, rng);
  p.V = glorot(n_y, n_h, rng);
  p.b_f.fill(1.0);
  return p;
}

void GruCellParams::validate() const {
  if (W_g.rank() != 2 || U_g.rank() != 2 || V.rank() != 2) throw ShapeError("GRU matrices must be rank 2");
  const std::size_t n_h = W_g.dim(0), n_x = U_g.dim(1), n_y = V.dim(0);
  expect_shape(W_g, {n_h, n_h}, "W_g");
  expect_shape(W_f, {n_h, n_h}, "W_f");
  expect_shape(W_r, {n_h, n_h}, "W_r");
  expect_shape(U_g, {n_h, n_x}, "U_g");
  expect_shape(U_f, {n_h, n_x}, "U_f");
  expect_shape(U_r, {n_h, n_x}, "U_r");
  expect_shape(b_g, {n_h}, "b_g");
  expect_shape(b_f, {n_h}, "b_f");
  expect_shape(b_r, {n_h}, "b_r");
  expect_shape(V, {n_y, n_h}, "V");
  expect_shape(b, {n_y}, "b");
}

void GruCellParams::for_each(const std::function<void(std::string_view, Tensor&)>& fn) {
  fn("W_g", W_g), fn("W_f", W_f), fn("W_r", W_r);
  fn("U_g", U_g), fn("U_f", U_f), fn("U_r", U_r);
  fn("b_g", b_g), fn("b_f", b_f), fn("b_r", b_r);
  fn("V", V), fn("b", b);
}

void GruCellParams::for_each(const std::function<void(std::string_view, const Tensor&)>& fn) const {
  const_cast<GruCellParams*>(this)->for_each([&](std::string_view name, Tensor& t) { fn(name, t); });
}

GruStep gru_cell_step(const GruCellParams& p, const Tensor& h_prev, const Tensor& x_t) {
  p.validate();
  if (h_prev.shape() != Shape{p.hidden_size()} || x_t.shape() != Shape{p.input_size()}) {
    throw ShapeError("GRU step expects h " + shape_to_string({p.hidden_size()}) + " and x " +
                     shape_to_string({p.input_size()}) + ", got " + shape_to_string(h_prev.shape()) + " and " +
                     shape_to_string(x_t.shape()));
  }
  GruStep s;
  s.f = activate(Activation::sigmoid, affine3(p.W_f, h_prev, p.U_f, x_t, p.b_f));
  s.r = activate(Activation::sigmoid, affine3(p.W_r, h_prev, p.U_r, x_t, p.b_r));
  const Tensor reset_state = elementwise(BinaryOp::mul, s.r, h_prev);
  s.g = activate(Activation::tanh, affine3(p.W_g, reset_state, p.U_g, x_t, p.b_g));
  s.h = Tensor(h_prev.shape());
  for (std::size_t i = 0; i < s.h.size(); ++i) s.h[i] = s.f[i] * h_prev[i] + (1.0 - s.f[i]) * s.g[i];
  return s;
}

GruOutput gru_forward(const GruCellParams& params, const Tensor& h_0, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ValueError("GRU forward needs a sequence of length >= 1");
  GruOutput out;
  auto& tr = out.trace;
  tr.xs = xs;
  tr.hs.reserve(xs.size() + 1);
  tr.hs.push_back(h_0);
  for (const auto& x : xs) {
    auto step = gru_cell_step(params, tr.hs.back(), x);
    tr.ys.push_back(readout(params, step.h));
    tr.hs.push_back(std::move(step.h));
    tr.fs.push_back(std::move(step.f));
    tr.rs.push_back(std::move(step.r));
    tr.gs.push_back(std::move(step.g));
  }
  out.y_hat = tr.ys.back();
  return out;
}

double cross_entropy(const Tensor& y_hat, const Tensor& y) {
  if (y_hat.shape() != y.shape() || y.rank() != 1) {
    throw ShapeError("cross entropy shape mismatch: " + shape_to_string(y_hat.shape()) + " vs " +
                     shape_to_string(y.shape()));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y_hat[i] > 0.0)) throw ValueError("cross entropy needs strictly positive probabilities");
    if (y[i] != 0.0) loss -= y[i] * std::log(y_hat[i]);
  }
  return loss;
}

namespace {

// Maps a target index to the step (1-based) it scores.
std::vector<std::size_t> target_steps(const GruTrace& trace, const std::vector<Tensor>& targets) {
  const std::size_t T = trace.length();
  if (targets.size() == 1) return {T};
  if (targets.size() == T) {
    std::vector<std::size_t> steps(T);
    for (std::size_t t = 0; t < T; ++t) steps[t] = t + 1;
    return steps;
  }
  throw ShapeError("expected 1 or " + std::to_string(T) + " targets, got " + std::to_string(targets.size()));
}

// Backpropagates dL/dh_t through step t, accumulating parameter and input
// gradients; returns dL/dh_{t-1}.
Tensor step_backward(const GruCellParams& p, const GruTrace& tr, std::size_t t, const Tensor& dh,
                     GruGradients& g) {
  const Tensor& h_prev = tr.hs[t - 1];
  const Tensor& x = tr.xs[t - 1];
  const Tensor& f = tr.fs[t - 1];
  const Tensor& r = tr.rs[t - 1];
  const Tensor& cand = tr.gs[t - 1];
  const std::size_t n = dh.size();

  Tensor da_g({n}), da_f({n});
  for (std::size_t i = 0; i < n; ++i) {
    da_g[i] = dh[i] * (1.0 - f[i]) * (1.0 - cand[i] * cand[i]);
    da_f[i] = dh[i] * (h_prev[i] - cand[i]) * f[i] * (1.0 - f[i]);
  }
  const Tensor reset_state = elementwise(BinaryOp::mul, r, h_prev);
  const Tensor d_reset_state = matvec_transposed(p.W_g, da_g);
  Tensor da_r({n});
  for (std::size_t i = 0; i < n; ++i) da_r[i] = d_reset_state[i] * h_prev[i] * r[i] * (1.0 - r[i]);

  add_outer_into(g.params.W_g, da_g, reset_state);
  add_outer_into(g.params.U_g, da_g, x);
  add_into(g.params.b_g, da_g);
  add_outer_into(g.params.W_f, da_f, h_prev);
  add_outer_into(g.params.U_f, da_f, x);
  add_into(g.params.b_f, da_f);
  add_outer_into(g.params.W_r, da_r, h_prev);
  add_outer_into(g.params.U_r, da_r, x);
  add_into(g.params.b_r, da_r);

  Tensor& dx = g.inputs[t - 1];
  add_into(dx, matvec_transposed(p.U_g, da_g));
  add_into(dx, matvec_transposed(p.U_f, da_f));
  add_into(dx, matvec_transposed(p.U_r, da_r));

  Tensor dh_prev({n});
  const Tensor via_f = matvec_transposed(p.W_f, da_f);
  const Tensor via_r = matvec_transposed(p.W_r, da_r);
  for (std::size_t i = 0; i < n; ++i) {
    dh_prev[i] = dh[i] * f[i] + d_reset_state[i] * r[i] + via_f[i] + via_r[i];
  }
  return dh_prev;
}

// Softmax + cross-entropy fused: dL/dlogits = y_hat - y.
Tensor readout_backward(const GruCellParams& p, const GruTrace& tr, std::size_t t, const Tensor& y,
                        GruGradients& g) {
  const Tensor residual = elementwise(BinaryOp::sub, tr.ys[t - 1], y);
  add_outer_into(g.params.V, residual, tr.hs[t]);
  add_into(g.params.b, residual);
  return matvec_transposed(p.V, residual);
}

}  // namespace

double sequence_loss(const GruTrace& trace, const std::vector<Tensor>& targets) {
  const auto steps = target_steps(trace, targets);
  double loss = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) loss += cross_entropy(trace.ys[steps[i] - 1], targets[i]);
  return loss;
}

GruGradients gru_backward(const GruCellParams& params, const GruTrace& trace, const std::vector<Tensor>& targets,
                          std::size_t window) {
  params.validate();
  const std::size_t T = trace.length();
  if (T == 0 || trace.hs.size() != T + 1 || trace.fs.size() != T || trace.ys.size() != T) {
    throw ShapeError("GRU trace is incomplete");
  }
  if (trace.hs.front().size() != params.hidden_size() || trace.xs.front().size() != params.input_size() ||
      trace.ys.front().size() != params.output_size()) {
    throw ShapeError("GRU trace does not match the parameter shapes");
  }
  const auto steps = target_steps(trace, targets);
  for (const auto& y : targets) {
    if (y.shape() != Shape{params.output_size()}) throw ShapeError("GRU target has the wrong length");
  }

  GruGradients g;
  g.params = GruCellParams::zeros(params.input_size(), params.hidden_size(), params.output_size());
  g.inputs.assign(T, Tensor({params.input_size()}));
  g.initial_state = Tensor({params.hidden_size()});

  if (window == 0 || window >= T) {
    // Single reverse sweep: each step's incoming gradient sums every later loss term.
    std::vector<Tensor> injected(T + 1, Tensor({params.hidden_size()}));
    for (std::size_t i = 0; i < steps.size(); ++i) {
      injected[steps[i]] = readout_backward(params, trace, steps[i], targets[i], g);
    }
    Tensor dh = injected[T];
    for (std::size_t t = T; t >= 1; --t) {
      dh = step_backward(params, trace, t, dh, g);
      if (t > 1) add_into(dh, injected[t - 1]);
    }
    g.initial_state = std::move(dh);
    return g;
  }

  // Truncated: each loss term at step t reaches back only to step t - window + 1.
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t t_loss = steps[i];
    Tensor dh = readout_backward(params, trace, t_loss, targets[i], g);
    const std::size_t stop = t_loss > window ? t_loss - window + 1 : 1;
    for (std::size_t t = t_loss; t >= stop; --t) {
      dh = step_backward(params, trace, t, dh, g);
    }
    if (stop == 1) add_into(g.initial_state, dh);
  }
  return g;
}

}  // namespace occnet::gru

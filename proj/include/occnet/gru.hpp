#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "occnet/rng.hpp"
#include "occnet/tensor.hpp"

namespace occnet::gru {

// Weights of one GRU cell plus its softmax readout.
//   f  = sigmoid(W_f h + U_f x + b_f)
//   r  = sigmoid(W_r h + U_r x + b_r)
//   g' = tanh(W_g (r * h) + U_g x + b_g)
//   h' = f * h + (1 - f) * g'
//   y  = softmax(V h' + b)
// f gates the previous state: f near 1 carries h through unchanged.
struct GruCellParams {
  Tensor W_g, W_f, W_r;  // [n_h, n_h]
  Tensor U_g, U_f, U_r;  // [n_h, n_x]
  Tensor b_g, b_f, b_r;  // [n_h]
  Tensor V;              // [n_y, n_h]
  Tensor b;              // [n_y]

  static GruCellParams zeros(std::size_t n_x, std::size_t n_h, std::size_t n_y);
  // Glorot-uniform matrices, zero biases except b_f = +1.
  static GruCellParams initialize(std::size_t n_x, std::size_t n_h, std::size_t n_y, Rng& rng);

  std::size_t input_size() const { return U_g.dim(1); }
  std::size_t hidden_size() const { return W_g.dim(0); }
  std::size_t output_size() const { return V.dim(0); }
  void validate() const;

  void for_each(const std::function<void(std::string_view, Tensor&)>& fn);
  void for_each(const std::function<void(std::string_view, const Tensor&)>& fn) const;
};

using GruGradientParams = GruCellParams;

struct GruStep {
  Tensor h, f, r, g;
};

GruStep gru_cell_step(const GruCellParams& params, const Tensor& h_prev, const Tensor& x_t);

// Everything the backward pass needs. hs holds h_0 .. h_T; the other vectors hold steps 1 .. T.
struct GruTrace {
  std::vector<Tensor> xs;
  std::vector<Tensor> hs;
  std::vector<Tensor> fs, rs, gs;
  std::vector<Tensor> ys;

  std::size_t length() const { return xs.size(); }
};

struct GruOutput {
  GruTrace trace;
  Tensor y_hat;  // readout of the final hidden state
};

GruOutput gru_forward(const GruCellParams& params, const Tensor& h_0, const std::vector<Tensor>& xs);

inline constexpr double kProbabilityFloor = 1e-12;

// -sum y log y_hat for a one-hot y.
double cross_entropy(const Tensor& y_hat, const Tensor& y);

// Targets either for the final step only (one tensor) or one per step (T tensors);
// the loss is summed over every targeted step.
double sequence_loss(const GruTrace& trace, const std::vector<Tensor>& targets);

struct GruGradients {
  GruGradientParams params;
  std::vector<Tensor> inputs;  // dL/dx_t
  Tensor initial_state;        // dL/dh_0
};

// Reverse-mode BPTT. `window` bounds how many steps each loss term propagates
// back through; 0 (or >= T) means the full unroll.
GruGradients gru_backward(const GruCellParams& params, const GruTrace& trace, const std::vector<Tensor>& targets,
                          std::size_t window = 0);

}  // namespace occnet::gru

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "occnet/data.hpp"
#include "occnet/rng.hpp"
#include "occnet/tensor.hpp"

namespace occnet::oracle {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Relative error with an absolute floor for entries near zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct Window {
  std::size_t out;
  long pad;
};

inline Window window(std::size_t in, std::size_t k, std::size_t stride, bool same) {
  if (!same) return {(in - k) / stride + 1, 0};
  const std::size_t out = (in + stride - 1) / stride;
  const long needed = static_cast<long>((out - 1) * stride + k) - static_cast<long>(in);
  return {out, std::max(0L, needed) / 2};
}

// Inputs here are always [N, H, W, C].
inline Tensor naive_depthwise(const Tensor& x, const Tensor& w, std::size_t stride, bool same) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3), k = w.dim(0);
  const auto gy = window(h, k, stride, same), gx = window(wd, k, stride, same);
  Tensor out({n, gy.out, gx.out, c});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < gy.out; ++oy)
      for (std::size_t ox = 0; ox < gx.out; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - gy.pad;
              const long ix = static_cast<long>(ox * stride + kx) - gx.pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              acc += x[((b * h + iy) * wd + ix) * c + ch] * w[(ky * k + kx) * c + ch];
            }
          out[((b * gy.out + oy) * gx.out + ox) * c + ch] = acc;
        }
  return out;
}

inline Tensor naive_pointwise(const Tensor& x, const Tensor& w) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(1);
  Tensor out({n, h, wd, co});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < wd; ++xx)
        for (std::size_t o = 0; o < co; ++o) {
          double acc = 0.0;
          for (std::size_t i = 0; i < ci; ++i) acc += x[((b * h + y) * wd + xx) * ci + i] * w[i * co + o];
          out[((b * h + y) * wd + xx) * co + o] = acc;
        }
  return out;
}

inline Tensor naive_conv2d(const Tensor& x, const Tensor& w, std::size_t stride, bool same) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), k = w.dim(0), co = w.dim(3);
  const auto gy = window(h, k, stride, same), gx = window(wd, k, stride, same);
  Tensor out({n, gy.out, gx.out, co});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < gy.out; ++oy)
      for (std::size_t ox = 0; ox < gx.out; ++ox)
        for (std::size_t o = 0; o < co; ++o) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - gy.pad;
              const long ix = static_cast<long>(ox * stride + kx) - gx.pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              for (std::size_t i = 0; i < ci; ++i)
                acc += x[((b * h + iy) * wd + ix) * ci + i] * w[((ky * k + kx) * ci + i) * co + o];
            }
          out[((b * gy.out + oy) * gx.out + ox) * co + o] = acc;
        }
  return out;
}

// Per-sample recount of one-vs-rest outcomes and the textbook metric formulas.
struct BruteMetrics {
  double tp = 0, tn = 0, fp = 0, fn = 0;
  std::optional<double> sensitivity, specificity, accuracy, jsi, mcc;
};

inline BruteMetrics brute_metrics(const std::vector<OcclusionClass>& preds, const std::vector<OcclusionClass>& truths,
                                  OcclusionClass cls) {
  BruteMetrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == cls, t = truths[i] == cls;
    if (p && t) m.tp += 1;
    if (p && !t) m.fp += 1;
    if (!p && t) m.fn += 1;
    if (!p && !t) m.tn += 1;
  }
  if (m.tp + m.fn > 0) m.sensitivity = m.tp / (m.tp + m.fn);
  if (m.tn + m.fp > 0) m.specificity = m.tn / (m.tn + m.fp);
  m.accuracy = (m.tp + m.tn) / static_cast<double>(preds.size());
  if (m.tp + m.fp + m.fn > 0) m.jsi = m.tp / (m.tp + m.fp + m.fn);
  const double den = (m.tp + m.fp) * (m.tp + m.fn) * (m.tn + m.fp) * (m.tn + m.fn);
  if (den > 0) m.mcc = (m.tp * m.tn - m.fp * m.fn) / std::sqrt(den);
  return m;
}

}  // namespace occnet::oracle

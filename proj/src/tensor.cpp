#include "occnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "occnet/error.hpp"

namespace occnet {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_volume(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_volume(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case BinaryOp::add: out[i] = a[i] + b[i]; break;
      case BinaryOp::sub: out[i] = a[i] - b[i]; break;
      case BinaryOp::mul: out[i] = a[i] * b[i]; break;
    }
  }
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) {
    throw ShapeError("matvec dimension mismatch: " + shape_to_string(w.shape()) + " * " +
                     shape_to_string(x.shape()));
  }
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w.data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Tensor matvec_transposed(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(0) != x.dim(0)) {
    throw ShapeError("transposed matvec dimension mismatch: " + shape_to_string(w.shape()) + "^T * " +
                     shape_to_string(x.shape()));
  }
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor out({n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w.data() + i * n;
    const double xi = x[i];
    for (std::size_t j = 0; j < n; ++j) out[j] += row[j] * xi;
  }
  return out;
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double relu6(double v) { return std::min(std::max(v, 0.0), 6.0); }

Tensor activate(Activation kind, const Tensor& x) {
  Tensor out(x.shape());
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    case Activation::relu6:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = relu6(x[i]);
      break;
    case Activation::softmax: {
      if (x.rank() != 1 || x.size() == 0) {
        throw ShapeError("softmax needs a non-empty rank-1 tensor, got " + shape_to_string(x.shape()));
      }
      const double peak = *std::max_element(x.values().begin(), x.values().end());
      double total = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - peak);
        total += out[i];
      }
      for (std::size_t i = 0; i < x.size(); ++i) out[i] /= total;
      break;
    }
  }
  return out;
}

Tensor outer(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.empty() || b.empty()) {
    throw ShapeError("outer needs non-empty vectors, got " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  Tensor out({a.size(), b.size()});
  add_outer_into(out, a, b);
  return out;
}

void add_into(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) {
    throw ShapeError("accumulate shape mismatch: " + shape_to_string(dst.shape()) + " vs " +
                     shape_to_string(src.shape()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void add_outer_into(Tensor& dst, const Tensor& a, const Tensor& b) {
  if (dst.rank() != 2 || dst.dim(0) != a.size() || dst.dim(1) != b.size()) {
    throw ShapeError("outer accumulate mismatch: " + shape_to_string(dst.shape()) + " vs " +
                     shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    double* row = dst.data() + i * n;
    const double ai = a[i];
    for (std::size_t j = 0; j < n; ++j) row[j] += ai * b[j];
  }
}

void scale_into(Tensor& dst, double factor) {
  for (auto& v : dst.values()) v *= factor;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

constexpr char kTensorMagic[] = "FTNS1\n";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  }
  return v;
}

std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(std::string("truncated tensor file: missing ") + what);
  return line;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out << kTensorMagic << t.rank() << "\n";
  for (std::size_t i = 0; i < t.rank(); ++i) out << (i ? " " : "") << t.dim(i);
  out << "\n";
  std::vector<char> payload(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
    std::memcpy(payload.data() + 4 * i, &bits, 4);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed to write tensor payload");
}

Tensor read_tensor(std::istream& in) {
  char magic[sizeof(kTensorMagic) - 1];
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic))) throw IoError("truncated tensor file: missing magic");
  if (std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) throw IoError("bad tensor magic");

  std::size_t rank = 0;
  {
    std::istringstream rank_line(read_line(in, "rank"));
    if (!(rank_line >> rank)) throw IoError("malformed tensor rank line");
  }
  Shape shape;
  {
    std::istringstream extents(read_line(in, "extents"));
    std::size_t e = 0;
    while (extents >> e) shape.push_back(e);
    if (shape.size() != rank) throw IoError("tensor extents do not match rank " + std::to_string(rank));
  }
  const std::size_t count = shape_volume(shape);
  std::vector<char> payload(count * 4);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size())) throw IoError("truncated tensor payload");
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, payload.data() + 4 * i, 4);
    data[i] = std::bit_cast<float>(to_little_endian(bits));
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace occnet

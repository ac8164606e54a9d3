#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace occnet {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Dense row-major array of doubles. Images use [H, W, C]; batches [N, H, W, C].
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Same data, new shape of equal volume.
  Tensor reshaped(Shape shape) const;
  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class BinaryOp { add, sub, mul };
enum class Activation { sigmoid, tanh, relu6, softmax };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& w, const Tensor& x);
// w^T x for w of shape [m, n] and x of shape [m].
Tensor matvec_transposed(const Tensor& w, const Tensor& x);
Tensor activate(Activation kind, const Tensor& x);
Tensor outer(const Tensor& a, const Tensor& b);

// In-place accumulation helpers used by the backward passes.
void add_into(Tensor& dst, const Tensor& src);
void add_outer_into(Tensor& dst, const Tensor& a, const Tensor& b);
void scale_into(Tensor& dst, double factor);

double sigmoid(double v);
double relu6(double v);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

// Raw tensor file: "FTNS1\n", "<rank>\n", "<e0> <e1> ...\n", then little-endian float32 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace occnet

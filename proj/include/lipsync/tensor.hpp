#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lipsync/common.hpp"

namespace lipsync::core {

// All activations, parameters and images are carried as dense 4-D arrays in
// NCHW order. Vectors live as (N,C,1,1), full spectrograms as (1,1,bins,steps).
struct Shape {
  int64_t n = 1, c = 1, h = 1, w = 1;

  Shape() = default;
  Shape(int64_t n_, int64_t c_, int64_t h_, int64_t w_) : n(n_), c(c_), h(h_), w(w_) {}

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  int64_t dim(int i) const { return i == 0 ? n : i == 1 ? c : i == 2 ? h : w; }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(static_cast<size_t>(s.numel()), 0.0) {}
  Tensor(Shape s, double fill) : shape_(s), data_(static_cast<size_t>(s.numel()), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double v) { return Tensor(s, v); }
  static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  int64_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(int64_t n, int64_t c, int64_t h, int64_t w) { return data_[index(n, c, h, w)]; }
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const { return data_[index(n, c, h, w)]; }

  // Reinterpret the same buffer with a different shape of equal size.
  Tensor reshaped(Shape s) const {
    check_arg(s.numel() == shape_.numel(),
              "reshape: size mismatch " + shape_.str() + " -> " + s.str());
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double item() const {
    check_arg(numel() == 1, "item: tensor has " + std::to_string(numel()) + " elements");
    return data_[0];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_data(const Tensor& o, double tol = 0.0) const {
    if (shape_ != o.shape_) return false;
    for (size_t i = 0; i < data_.size(); ++i)
      if (std::abs(data_[i] - o.data_[i]) > tol) return false;
    return true;
  }

 private:
  Shape shape_{};
  std::vector<double> data_;
};

}  // namespace lipsync::core

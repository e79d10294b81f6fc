/* Copyright 2026 The MonoPix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace monopix {

/// Raised on incompatible tensor shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on invalid model / loss / training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value falls outside its admissible range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] Eigen::Index numel() const {
    return static_cast<Eigen::Index>(n) * c * h * w;
  }
  [[nodiscard]] Eigen::Index plane() const {
    return static_cast<Eigen::Index>(h) * w;
  }
  [[nodiscard]] std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense 4-axis (batch, channels, height, width) array, row-major NCHW.
///
/// Storage is a single Eigen column vector so whole-tensor arithmetic can
/// be written with Eigen array expressions; per-sample planes are exposed
/// as row-major matrix maps for the GEMM-based kernels.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.numel())) {}
  Tensor(int n, int c, int h, int w) : Tensor(Shape{n, c, h, w}) {}
  Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.numel(), fill)) {}
  Tensor(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] Eigen::Index size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  [[nodiscard]] const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  [[nodiscard]] const Scalar* data() const { return data_.data(); }

  Scalar& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  Scalar operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  [[nodiscard]] Eigen::Index index(int n, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Scalar* sample(int n) { return data_.data() + static_cast<Eigen::Index>(n) * shape_.c * shape_.plane(); }
  [[nodiscard]] const Scalar* sample(int n) const {
    return data_.data() + static_cast<Eigen::Index>(n) * shape_.c * shape_.plane();
  }
  Scalar* plane(int n, int c) { return sample(n) + static_cast<Eigen::Index>(c) * shape_.plane(); }
  [[nodiscard]] const Scalar* plane(int n, int c) const {
    return sample(n) + static_cast<Eigen::Index>(c) * shape_.plane();
  }

  /// Sample `n` viewed as a (channels x height*width) matrix.
  MatrixMap sample_matrix(int n) { return MatrixMap(sample(n), shape_.c, shape_.plane()); }
  [[nodiscard]] ConstMatrixMap sample_matrix(int n) const {
    return ConstMatrixMap(sample(n), shape_.c, shape_.plane());
  }

  void set_zero() { data_.setZero(); }

  [[nodiscard]] bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  [[nodiscard]] Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  [[nodiscard]] Tensor slice_batch(int begin, int count) const {
    if (begin < 0 || count < 0 || begin + count > shape_.n) {
      throw ShapeError("batch slice out of range for " + shape_.str());
    }
    Shape s = shape_;
    s.n = count;
    const Eigen::Index per = static_cast<Eigen::Index>(shape_.c) * shape_.plane();
    return Tensor(s, data_.segment(begin * per, count * per).eval());
  }

 private:
  Shape shape_{};
  Array data_;
};

/// Images in [-1, 1]; (batch, 3, H, W) for RGB tasks.
template <typename Scalar>
using ImageBatch = Tensor<Scalar>;

/// Spatial output of a discriminator's final 1-channel convolution.
template <typename Scalar>
using ConfidenceMap = Tensor<Scalar>;

/// Per-pixel translation intensity, (batch, 1, H, W).
template <typename Scalar>
struct ControlMap {
  Tensor<Scalar> values;
  bool out_of_bound_allowed = false;

  [[nodiscard]] const Shape& shape() const { return values.shape(); }
};

template <typename Scalar>
Tensor<Scalar> concat_batch(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.c() != b.c() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_batch: " + a.shape().str() + " vs " + b.shape().str());
  }
  Shape s = a.shape();
  s.n += b.n();
  typename Tensor<Scalar>::Array data(s.numel());
  data << a.array(), b.array();
  return Tensor<Scalar>(s, std::move(data));
}

/// Concatenate along the channel axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<Scalar> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const Eigen::Index pa = a.c() * a.shape().plane();
  const Eigen::Index pb = b.c() * b.shape().plane();
  for (int i = 0; i < a.n(); ++i) {
    std::copy_n(a.sample(i), pa, out.sample(i));
    std::copy_n(b.sample(i), pb, out.sample(i) + pa);
  }
  return out;
}

/// Inverse of concat_channels: split off the first `first_channels` channels.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& t, int first_channels) {
  if (first_channels < 0 || first_channels > t.c()) {
    throw ShapeError("split_channels: bad split for " + t.shape().str());
  }
  Tensor<Scalar> a(t.n(), first_channels, t.h(), t.w());
  Tensor<Scalar> b(t.n(), t.c() - first_channels, t.h(), t.w());
  const Eigen::Index pa = a.c() * t.shape().plane();
  const Eigen::Index pb = b.c() * t.shape().plane();
  for (int i = 0; i < t.n(); ++i) {
    std::copy_n(t.sample(i), pa, a.sample(i));
    std::copy_n(t.sample(i) + pa, pb, b.sample(i));
  }
  return {std::move(a), std::move(b)};
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.empty()) return Scalar(0);
  return (a.array() - b.array()).abs().maxCoeff();
}

}  // namespace monopix

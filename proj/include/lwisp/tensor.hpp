// lwisp/tensor.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LWISP_TENSOR_HPP_
#define LWISP_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lwisp {

using Real = double;

/// Extents of a dense tensor. Activations use batch x channels x height x width.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims);
  explicit Shape(std::vector<int64_t> dims);

  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t operator[](int i) const { return dims_.at(static_cast<size_t>(i)); }
  int64_t numel() const;
  const std::vector<int64_t>& dims() const { return dims_; }

  bool operator==(const Shape& o) const = default;
  std::string str() const;

 private:
  std::vector<int64_t> dims_;
};

/// Dense row-major array of Real. Copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_[i]; }
  int rank() const { return shape_.rank(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() & { return data_; }
  std::span<const Real> data() const& { return data_; }
  // A span into a temporary would dangle.
  std::span<const Real> data() const&& = delete;
  Real* ptr() { return data_.data(); }
  const Real* ptr() const { return data_.data(); }

  Real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  Real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // NCHW accessors; only valid on rank-4 tensors.
  Real& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  Real at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  Tensor reshaped(Shape shape) const;
  void fill(Real v);
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// Rank-4 helpers used throughout the network code.
inline int64_t batch(const Tensor& t) { return t.dim(0); }
inline int64_t channels(const Tensor& t) { return t.dim(1); }
inline int64_t height(const Tensor& t) { return t.dim(2); }
inline int64_t width(const Tensor& t) { return t.dim(3); }

/// Raised on any shape or argument contract violation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_rank(const Tensor& t, int rank, const char* what);

}  // namespace lwisp

#endif  // LWISP_TENSOR_HPP_

// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fusedrive {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::string ShapeToString(const Shape& shape);

/// Dense row-major tensor of rank 1 to 3 holding 64-bit reals.
///
/// A Tensor is a shared handle: copies alias the same storage. Operations
/// never write into their inputs; only the optimizer (through
/// mutable_data()) and the backward pass (through gradient buffers) mutate
/// storage in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Rows/cols of a rank-2 tensor; a rank-1 tensor is treated as one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<double> grad_buffer() const;
  void zero_grad();
  void drop_grad();

  // Deep copy of values; the copy has no gradient and no graph history.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations executed in one forward pass.
///
/// Entries are appended in execution order, which is a topological order of
/// the graph, so running them in reverse accumulates correct gradients.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
  // accumulate additively into every reachable tensor with requires_grad.
  // The tape is cleared afterwards.
  void backward(Tensor& loss);

 private:
  std::vector<BackwardFn> entries_;
};

// True when an op on these inputs must be recorded.
bool ShouldRecord(const Tape* tape, std::initializer_list<const Tensor*> inputs);

}  // namespace fusedrive

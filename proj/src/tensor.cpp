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

#include "fusedrive/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "fusedrive/error.hpp"

namespace fusedrive {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape:
      return "shape error";
    case ErrorKind::kConfig:
      return "config error";
    case ErrorKind::kData:
      return "data error";
    case ErrorKind::kFormat:
      return "format error";
    case ErrorKind::kUsage:
      return "usage error";
    case ErrorKind::kTransport:
      return "transport error";
    case ErrorKind::kParse:
      return "parse error";
  }
  return "error";
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::size_t Product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void CheckShape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    Fail(ErrorKind::kShape,
         "tensor rank must be 1..3, got " + std::to_string(shape.size()));
  }
}

}  // namespace

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  CheckShape(shape);
  auto impl = std::make_shared<Impl>();
  impl->data.assign(Product(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data,
                        bool requires_grad) {
  CheckShape(shape);
  if (Product(shape) != data.size()) {
    Fail(ErrorKind::kShape, "data length " + std::to_string(data.size()) +
                                " does not match shape " +
                                ShapeToString(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  return s.size() == 1 ? 1 : s[s.size() - 2];
}

std::size_t Tensor::cols() const { return shape().back(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::at(std::size_t row, std::size_t col) const {
  return impl_->data[row * cols() + col];
}

double Tensor::item() const {
  if (size() != 1) {
    Fail(ErrorKind::kUsage, "item() on tensor of shape " +
                                ShapeToString(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::drop_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  return FromData(impl_->shape, impl_->data, false);
}

void Tape::backward(Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    Fail(ErrorKind::kUsage, "backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    entries_.clear();
    return;
  }
  loss.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

bool ShouldRecord(const Tape* tape,
                  std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

}  // namespace fusedrive

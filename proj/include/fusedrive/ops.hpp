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

#include "fusedrive/tensor.hpp"

namespace fusedrive {

// Differentiable tensor operations. Each takes an optional tape; when the
// tape is non-null and any input requires a gradient, the op is recorded and
// its output requires a gradient too.

// [m x p] * [p x q] -> [m x q]
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

Tensor transpose(const Tensor& x, Tape* tape = nullptr);

// Same data, new shape of equal element count.
Tensor reshape(const Tensor& x, Shape shape, Tape* tape = nullptr);

// Same-shape elementwise sum, or [m x q] + [q] broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

Tensor scale(const Tensor& x, double c, Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);

// Rank 2: axis 0 averages rows into a [q] vector, axis 1 averages columns
// into an [m] vector. Rank 1: axis 0 gives a scalar.
Tensor mean_over_axis(const Tensor& x, std::size_t axis, Tape* tape = nullptr);

Tensor sum(const Tensor& x, Tape* tape = nullptr);

// Softmax over each row of a rank-2 tensor, computed with max subtraction.
Tensor rowwise_softmax(const Tensor& x, Tape* tape = nullptr);

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each row of [m x D] to zero mean and unit variance, then
// applies gain[D] and bias[D].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps, Tape* tape = nullptr);

// Inverted dropout: in training, zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate). Identity when not training.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng,
               Tape* tape = nullptr);

// x * W + b for x [m x in], W [in x out], b [out].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Tape* tape = nullptr);

}  // namespace fusedrive

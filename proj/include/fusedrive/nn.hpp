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
#include <cstdint>
#include <string>
#include <vector>

#include "fusedrive/tensor.hpp"

namespace fusedrive {

// Per-row validity flags; 1 marks a valid instance.
using Mask = std::vector<std::uint8_t>;

std::size_t CountValid(const Mask& mask);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor XavierUniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  static Linear Init(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  Tensor forward(const Tensor& x, Tape* tape) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace fusedrive

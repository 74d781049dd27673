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

#include "fusedrive/nn.hpp"

#include <algorithm>
#include <cmath>

#include "fusedrive/ops.hpp"

namespace fusedrive {

std::size_t CountValid(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
}

Tensor XavierUniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = dist(rng);
  return Tensor::FromData({fan_in, fan_out}, std::move(values), true);
}

Linear Linear::Init(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{XavierUniform(in, out, rng), Tensor::Zeros({out}, true)};
}

Tensor Linear::forward(const Tensor& x, Tape* tape) const {
  return affine(x, weight, bias, tape);
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace fusedrive

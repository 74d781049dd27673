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

#include <cstdint>
#include <string>
#include <vector>

#include "fusedrive/nn.hpp"

namespace fusedrive {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates per parameter, in parameter-list order.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState For(const ParameterList& params, AdamConfig config);
};

// One bias-corrected Adam update:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
// grads[i] must match params[i] in size (kUsage otherwise).
void adam_step(const ParameterList& params,
               const std::vector<std::vector<double>>& grads, AdamState& state);

// Same, reading each parameter's gradient buffer (absent buffer = zero).
void adam_step(const ParameterList& params, AdamState& state);

void ZeroGrads(const ParameterList& params);

}  // namespace fusedrive

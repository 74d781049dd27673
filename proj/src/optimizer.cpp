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

#include "fusedrive/optimizer.hpp"

#include <cmath>

#include "fusedrive/error.hpp"

namespace fusedrive {

AdamState AdamState::For(const ParameterList& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const NamedTensor& p : params) {
    s.names.push_back(p.name);
    s.m.emplace_back(p.tensor.size(), 0.0);
    s.v.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

void adam_step(const ParameterList& params,
               const std::vector<std::vector<double>>& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    Fail(ErrorKind::kUsage, "adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].tensor.size();
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n) {
      Fail(ErrorKind::kUsage, "adam_step: size mismatch for '" + params[i].name + "'");
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor theta = params[i].tensor;
    auto values = theta.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      values[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

void adam_step(const ParameterList& params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const NamedTensor& p : params) {
    if (p.tensor.has_grad()) {
      grads.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      grads.emplace_back(p.tensor.size(), 0.0);
    }
  }
  adam_step(params, grads, state);
}

void ZeroGrads(const ParameterList& params) {
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace fusedrive

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

#include "fusedrive/model.hpp"

namespace fusedrive {

struct GradcheckOptions {
  ModelDims dims;  // defaults are the full-size shapes
  DecisionConfig decision;
  std::size_t samples = 20;
  double step = 1e-5;
  std::uint64_t seed = 0;
};

struct GradcheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

// Relative error used by the report: |a - n| / max(|a|, |n|, 1e-6).
double GradRelError(double analytic, double numeric);

// Compares reverse-mode gradients of the MIL loss of a freshly initialized
// full model on a random bundle against central differences. Parameters
// are sampled one entry per tensor, cycling through tensors in random
// order.
GradcheckReport gradcheck(const GradcheckOptions& options);

std::string FormatGradcheck(const GradcheckReport& report);

}  // namespace fusedrive

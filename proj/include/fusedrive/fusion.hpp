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
#include <optional>

#include "fusedrive/attention.hpp"
#include "fusedrive/bundle.hpp"
#include "fusedrive/nn.hpp"

namespace fusedrive {

struct ModelDims {
  BundleDims input;
  std::size_t model_dim = 256;
  std::size_t hidden = 512;  // projector hidden width
  std::size_t heads = 8;
  std::size_t surrogate_hidden = 512;

  void Validate() const;
  bool operator==(const ModelDims&) const = default;
};

// Two affine+relu layers: in -> hidden -> out.
struct Projector {
  Linear first;
  Linear second;

  static Projector Init(std::size_t in, std::size_t hidden, std::size_t out,
                        Rng& rng);
  Tensor forward(const Tensor& x, Tape* tape) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Parameters of the dual-branch fusion stage.
struct FusionParams {
  Projector global_proj;
  Projector text_proj;
  // Absent when the local features already have the model width.
  std::optional<Projector> local_proj;
  MultiHeadParams self_attn;
  MultiHeadParams vision_cross;
  MultiHeadParams text_cross;

  static FusionParams Init(const ModelDims& dims, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct BranchOutputs {
  Tensor global_proj;  // X_g' [t x D]
  Tensor z_v;          // [n x D], undefined when the vision branch is off
  Tensor z_l;          // [s x D], undefined when the text branch is off
  Tensor global_pooled;  // [1 x D], only in global-only baseline mode
};

// Z_v = cross(self(X_v'), X_g'), Z_l = cross(X_l', X_g').
BranchOutputs fusion_forward(const FeatureBundle& bundle,
                             const FusionParams& params, const ModelDims& dims,
                             Tape* tape = nullptr);

// Runs only the enabled branches. With both disabled, produces the
// global-only baseline: X_g' mean-pooled over frames.
BranchOutputs ablation_forward(const FeatureBundle& bundle,
                               const FusionParams& params,
                               const ModelDims& dims, bool use_vision,
                               bool use_text, Tape* tape = nullptr);

}  // namespace fusedrive

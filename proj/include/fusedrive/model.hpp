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
#include <optional>
#include <string>
#include <string_view>

#include "fusedrive/fusion.hpp"
#include "fusedrive/mil_head.hpp"
#include "fusedrive/refinement.hpp"

namespace fusedrive {

// Ablation configurations: both branches, one branch, or the global-only
// baseline.
enum class BranchMode { kFull, kVisionOnly, kTextOnly, kGlobalOnly };

std::string_view BranchModeName(BranchMode mode);
BranchMode ParseBranchMode(std::string_view name);
inline bool UsesVision(BranchMode m) {
  return m == BranchMode::kFull || m == BranchMode::kVisionOnly;
}
inline bool UsesText(BranchMode m) {
  return m == BranchMode::kFull || m == BranchMode::kTextOnly;
}

struct Model {
  ModelDims dims;
  BranchMode mode = BranchMode::kFull;
  FusionParams fusion;
  Classifier vision_head;
  Classifier text_head;
  std::optional<Surrogate> surrogate;

  static Model Init(const ModelDims& dims, BranchMode mode, std::uint64_t seed);

  // Everything trained in the main phase.
  ParameterList main_parameters() const;
  ParameterList surrogate_parameters() const;
  ParameterList parameters() const;

  Surrogate& EnsureSurrogate(std::uint64_t seed);
};

struct ForwardResult {
  BranchOutputs branches;
  Cam cam_v;
  Cam cam_l;          // text CAM used for pooling (refined when requested)
  Cam cam_l_raw;      // text CAM from the main model
  Tensor pooled_v;    // [C]
  Tensor pooled_l;    // [C]
  Tensor logits;      // O_pred [C]
  bool refined = false;
};

struct ForwardOptions {
  bool training = false;
  // Average the text CAM with the surrogate CAM when a surrogate exists.
  bool refine = false;
  // Frozen text head for the surrogate path; built on demand when null.
  const FrozenClassifier* frozen_text_head = nullptr;
  Tape* tape = nullptr;
};

ForwardResult model_forward(const FeatureBundle& bundle, const Model& model,
                            const DecisionConfig& config, Rng& rng,
                            const ForwardOptions& options = {});

// Inference-mode decision with explanations.
DecisionOutput predict(const FeatureBundle& bundle, const Model& model,
                       const DecisionConfig& config,
                       const FrozenClassifier* frozen_text_head = nullptr);

// Inference with the refined text CAM. Falls back to the unrefined path and
// sets refinement_unavailable when the model has no surrogate.
DecisionOutput predict_refined(const FeatureBundle& bundle, const Model& model,
                               const DecisionConfig& config,
                               const FrozenClassifier* frozen_text_head = nullptr);

}  // namespace fusedrive

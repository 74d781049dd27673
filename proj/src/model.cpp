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

#include "fusedrive/model.hpp"

#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"

namespace fusedrive {

std::string_view BranchModeName(BranchMode mode) {
  switch (mode) {
    case BranchMode::kFull:
      return "full";
    case BranchMode::kVisionOnly:
      return "vision-only";
    case BranchMode::kTextOnly:
      return "text-only";
    case BranchMode::kGlobalOnly:
      return "global-only";
  }
  return "full";
}

BranchMode ParseBranchMode(std::string_view name) {
  for (BranchMode m : {BranchMode::kFull, BranchMode::kVisionOnly,
                       BranchMode::kTextOnly, BranchMode::kGlobalOnly}) {
    if (BranchModeName(m) == name) return m;
  }
  Fail(ErrorKind::kConfig, "unknown branch mode '" + std::string(name) + "'");
}

Model Model::Init(const ModelDims& dims, BranchMode mode, std::uint64_t seed) {
  dims.Validate();
  Rng rng(seed);
  Model model{dims, mode, FusionParams::Init(dims, rng),
              Classifier::Init(dims.model_dim, dims.input.num_classes, rng),
              Classifier::Init(dims.model_dim, dims.input.num_classes, rng),
              std::nullopt};
  return model;
}

ParameterList Model::main_parameters() const {
  ParameterList out;
  fusion.collect("fusion", out);
  vision_head.collect("vision_head", out);
  text_head.collect("text_head", out);
  return out;
}

ParameterList Model::surrogate_parameters() const {
  ParameterList out;
  if (surrogate) surrogate->collect("surrogate", out);
  return out;
}

ParameterList Model::parameters() const {
  ParameterList out = main_parameters();
  for (auto& p : surrogate_parameters()) out.push_back(std::move(p));
  return out;
}

Surrogate& Model::EnsureSurrogate(std::uint64_t seed) {
  if (!surrogate) {
    Rng rng(seed);
    surrogate = Surrogate::Init(dims.input.d_text, dims.surrogate_hidden,
                                dims.model_dim, rng);
  }
  return *surrogate;
}

ForwardResult model_forward(const FeatureBundle& bundle, const Model& model,
                            const DecisionConfig& config, Rng& rng,
                            const ForwardOptions& options) {
  Tape* tape = options.tape;
  const bool vision = UsesVision(model.mode);
  const bool text = UsesText(model.mode);
  ForwardResult r;
  r.branches = ablation_forward(bundle, model.fusion, model.dims, vision, text, tape);

  if (model.mode == BranchMode::kGlobalOnly) {
    Tensor scores = model.vision_head.forward(r.branches.global_pooled,
                                              options.training, rng, tape);
    r.logits = reshape(scores, {model.dims.input.num_classes}, tape);
    return r;
  }
  if (vision) {
    r.cam_v = compute_cam(r.branches.z_v, bundle.local_mask, model.vision_head,
                          options.training, rng, tape);
    r.pooled_v = topk_avg_pool(r.cam_v, config.k, tape);
  }
  if (text) {
    r.cam_l_raw = compute_cam(r.branches.z_l, bundle.text_mask, model.text_head,
                              options.training, rng, tape);
    r.cam_l = r.cam_l_raw;
    if (options.refine && model.surrogate) {
      std::optional<FrozenClassifier> local_frozen;
      const FrozenClassifier* frozen = options.frozen_text_head;
      if (frozen == nullptr) frozen = &local_frozen.emplace(model.text_head);
      Cam prime = surrogate_forward(bundle.text, bundle.text_mask,
                                    *model.surrogate, *frozen, tape);
      r.cam_l = refine_cam(r.cam_l_raw, prime);
      r.refined = true;
    }
    r.pooled_l = topk_avg_pool(r.cam_l, config.k_hat, tape);
  }
  if (vision && text) {
    r.logits = fuse(r.pooled_v, r.pooled_l, config.lambda, tape);
  } else {
    r.logits = vision ? r.pooled_v : r.pooled_l;
  }
  return r;
}

namespace {

DecisionOutput Predict(const FeatureBundle& bundle, const Model& model,
                       const DecisionConfig& config, bool refine,
                       const FrozenClassifier* frozen) {
  Rng unused(0);
  ForwardOptions options;
  options.refine = refine;
  options.frozen_text_head = frozen;
  ForwardResult r = model_forward(bundle, model, config, unused, options);
  DecisionOutput out;
  decide(r.logits, config, out);
  out.explanations = explain(r.cam_v, r.cam_l, out.decisions, config);
  out.refinement_unavailable = refine && UsesText(model.mode) && !r.refined;
  return out;
}

}  // namespace

DecisionOutput predict(const FeatureBundle& bundle, const Model& model,
                       const DecisionConfig& config,
                       const FrozenClassifier* frozen_text_head) {
  return Predict(bundle, model, config, false, frozen_text_head);
}

DecisionOutput predict_refined(const FeatureBundle& bundle, const Model& model,
                               const DecisionConfig& config,
                               const FrozenClassifier* frozen_text_head) {
  return Predict(bundle, model, config, true, frozen_text_head);
}

}  // namespace fusedrive

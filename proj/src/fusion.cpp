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

#include "fusedrive/fusion.hpp"

#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"

namespace fusedrive {

void ModelDims::Validate() const {
  auto positive = [](const char* field, std::size_t v) {
    if (v == 0) Fail(ErrorKind::kConfig, std::string(field) + " must be >= 1");
  };
  positive("t", input.t);
  positive("n", input.n);
  positive("s", input.s);
  positive("d_global", input.d_global);
  positive("d_local", input.d_local);
  positive("d_text", input.d_text);
  positive("num_classes", input.num_classes);
  positive("model_dim", model_dim);
  positive("hidden", hidden);
  positive("heads", heads);
  positive("surrogate_hidden", surrogate_hidden);
  if (model_dim % heads != 0) {
    Fail(ErrorKind::kConfig, "model_dim " + std::to_string(model_dim) +
                                 " is not divisible by heads " +
                                 std::to_string(heads));
  }
}

Projector Projector::Init(std::size_t in, std::size_t hidden, std::size_t out,
                          Rng& rng) {
  Projector p{Linear::Init(in, hidden, rng), Linear::Init(hidden, out, rng)};
  return p;
}

Tensor Projector::forward(const Tensor& x, Tape* tape) const {
  return relu(second.forward(relu(first.forward(x, tape), tape), tape), tape);
}

void Projector::collect(const std::string& prefix, ParameterList& out) const {
  first.collect(prefix + ".0", out);
  second.collect(prefix + ".1", out);
}

FusionParams FusionParams::Init(const ModelDims& dims, Rng& rng) {
  dims.Validate();
  const std::size_t d = dims.model_dim;
  FusionParams p{
      Projector::Init(dims.input.d_global, dims.hidden, d, rng),
      Projector::Init(dims.input.d_text, dims.hidden, d, rng),
      std::nullopt,
      MultiHeadParams::Init(d, dims.heads, rng),
      MultiHeadParams::Init(d, dims.heads, rng),
      MultiHeadParams::Init(d, dims.heads, rng),
  };
  if (dims.input.d_local != d) {
    p.local_proj = Projector::Init(dims.input.d_local, dims.hidden, d, rng);
  }
  return p;
}

void FusionParams::collect(const std::string& prefix, ParameterList& out) const {
  global_proj.collect(prefix + ".global_proj", out);
  text_proj.collect(prefix + ".text_proj", out);
  if (local_proj) local_proj->collect(prefix + ".local_proj", out);
  self_attn.collect(prefix + ".self_attn", out);
  vision_cross.collect(prefix + ".vision_cross", out);
  text_cross.collect(prefix + ".text_cross", out);
}

BranchOutputs fusion_forward(const FeatureBundle& bundle,
                             const FusionParams& params, const ModelDims& dims,
                             Tape* tape) {
  return ablation_forward(bundle, params, dims, true, true, tape);
}

BranchOutputs ablation_forward(const FeatureBundle& bundle,
                               const FusionParams& params,
                               const ModelDims& dims, bool use_vision,
                               bool use_text, Tape* tape) {
  const BundleDims actual = bundle.dims();
  if (!(actual == dims.input)) {
    Fail(ErrorKind::kShape, "bundle '" + bundle.sample_id +
                                "' dims do not match the model");
  }
  BranchOutputs out;
  out.global_proj = params.global_proj.forward(bundle.global, tape);
  if (!use_vision && !use_text) {
    Tensor pooled = mean_over_axis(out.global_proj, 0, tape);
    out.global_pooled = reshape(pooled, {1, dims.model_dim}, tape);
    return out;
  }
  if (use_vision) {
    Tensor local = params.local_proj ? params.local_proj->forward(bundle.local, tape)
                                     : bundle.local;
    Tensor attended = self_attention(local, bundle.local_mask, params.self_attn, tape);
    out.z_v = cross_attention(attended, out.global_proj, {}, params.vision_cross, tape);
  }
  if (use_text) {
    Tensor text = params.text_proj.forward(bundle.text, tape);
    out.z_l = cross_attention(text, out.global_proj, {}, params.text_cross, tape);
  }
  return out;
}

}  // namespace fusedrive

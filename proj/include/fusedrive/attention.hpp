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

#include "fusedrive/nn.hpp"
#include "fusedrive/tensor.hpp"

namespace fusedrive {

/// Parameters of one attention block: multi-head projections followed by a
/// residual connection and post layer norm.
struct MultiHeadParams {
  std::size_t heads = 8;
  Tensor w_q;  // [D x D]
  Tensor w_k;
  Tensor w_v;
  Tensor w_o;
  Tensor ln_gain;  // [D]
  Tensor ln_bias;  // [D]

  static MultiHeadParams Init(std::size_t dim, std::size_t heads, Rng& rng);

  std::size_t dim() const { return w_q.rows(); }
  std::size_t head_dim() const { return dim() / heads; }
  // Throws kShape/kConfig on inconsistent dims or non-finite weights.
  void Validate() const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Optional capture of the attention weights of a forward pass,
// shaped [heads x queries x keys].
struct AttentionProbe {
  Tensor weights;
};

/// Scaled dot-product attention over all heads at once.
///
/// q is [m x D], k and v are [t x D]; column block h of width D/heads belongs
/// to head h. Keys with key_mask == 0 receive exactly zero weight (an empty
/// mask means all keys are valid). Reductions over keys are performed in a
/// canonical order derived from the key values, not their row positions, so
/// permuting keys leaves the output bit-identical.
Tensor multi_head_attend(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::size_t heads, const Mask& key_mask,
                         Tape* tape = nullptr, AttentionProbe* probe = nullptr);

// layer_norm(x + attend(x, x) * W_o). Invalid rows of `mask` are excluded as
// keys but still produce (ignored) output rows.
Tensor self_attention(const Tensor& x, const Mask& mask,
                      const MultiHeadParams& params, Tape* tape = nullptr,
                      AttentionProbe* probe = nullptr);

// layer_norm(queries + attend(queries, context) * W_o). Output has the
// shape of `queries`.
Tensor cross_attention(const Tensor& queries, const Tensor& context,
                       const Mask& context_mask, const MultiHeadParams& params,
                       Tape* tape = nullptr, AttentionProbe* probe = nullptr);

}  // namespace fusedrive

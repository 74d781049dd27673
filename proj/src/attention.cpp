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

#include "fusedrive/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"

namespace fusedrive {

MultiHeadParams MultiHeadParams::Init(std::size_t dim, std::size_t heads,
                                      Rng& rng) {
  MultiHeadParams p;
  p.heads = heads;
  p.w_q = XavierUniform(dim, dim, rng);
  p.w_k = XavierUniform(dim, dim, rng);
  p.w_v = XavierUniform(dim, dim, rng);
  p.w_o = XavierUniform(dim, dim, rng);
  p.ln_gain = Tensor::Full({dim}, 1.0, true);
  p.ln_bias = Tensor::Zeros({dim}, true);
  p.Validate();
  return p;
}

void MultiHeadParams::Validate() const {
  if (heads == 0) Fail(ErrorKind::kConfig, "attention: heads must be >= 1");
  const std::size_t d = dim();
  if (d % heads != 0) {
    Fail(ErrorKind::kConfig, "attention: dim " + std::to_string(d) +
                                 " not divisible by heads " +
                                 std::to_string(heads));
  }
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o}) {
    if (w->rank() != 2 || w->rows() != d || w->cols() != d) {
      Fail(ErrorKind::kShape, "attention: projection weight has shape " +
                                  ShapeToString(w->shape()));
    }
  }
  if (ln_gain.size() != d || ln_bias.size() != d) {
    Fail(ErrorKind::kShape, "attention: layer norm width mismatch");
  }
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o, &ln_gain, &ln_bias}) {
    for (double x : w->data()) {
      if (!std::isfinite(x)) Fail(ErrorKind::kConfig, "attention: non-finite weight");
    }
  }
}

void MultiHeadParams::collect(const std::string& prefix,
                              ParameterList& out) const {
  out.push_back({prefix + ".w_q", w_q});
  out.push_back({prefix + ".w_k", w_k});
  out.push_back({prefix + ".w_v", w_v});
  out.push_back({prefix + ".w_o", w_o});
  out.push_back({prefix + ".ln_gain", ln_gain});
  out.push_back({prefix + ".ln_bias", ln_bias});
}

Tensor multi_head_attend(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::size_t heads, const Mask& key_mask, Tape* tape,
                         AttentionProbe* probe) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    Fail(ErrorKind::kShape, "attend: expected rank-2 inputs");
  }
  const std::size_t m = q.rows(), t = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != t) {
    Fail(ErrorKind::kShape, "attend: q " + ShapeToString(q.shape()) + ", k " +
                                ShapeToString(k.shape()) + ", v " +
                                ShapeToString(v.shape()) + " are incompatible");
  }
  if (heads == 0 || d % heads != 0) {
    Fail(ErrorKind::kConfig, "attend: width not divisible by heads");
  }
  if (!key_mask.empty() && key_mask.size() != t) {
    Fail(ErrorKind::kShape, "attend: key mask length " +
                                std::to_string(key_mask.size()) +
                                " != key count " + std::to_string(t));
  }
  std::vector<std::size_t> valid;
  for (std::size_t j = 0; j < t; ++j)
    if (key_mask.empty() || key_mask[j]) valid.push_back(j);
  if (valid.empty()) Fail(ErrorKind::kData, "attend: all keys are masked");

  const std::size_t dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool record = ShouldRecord(tape, {&q, &k, &v});
  Tensor out = Tensor::Zeros({m, d}, record);
  auto od = out.mutable_data();
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();

  // probs[(h * m + i) * t + j]
  std::vector<double> probs(heads * m * t, 0.0);
  std::vector<double> scores(t);
  std::vector<std::size_t> order(valid.size());

  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    auto value_less = [&](std::size_t a, std::size_t b) {
      const double* va = vd.data() + a * d + off;
      const double* vb = vd.data() + b * d + off;
      return std::lexicographical_compare(va, va + dh, vb, vb + dh);
    };
    for (std::size_t i = 0; i < m; ++i) {
      const double* qi = qd.data() + i * d + off;
      for (std::size_t j : valid) {
        const double* kj = kd.data() + j * d + off;
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
        scores[j] = acc * scale_factor;
      }
      // Canonical key order: by score, then by value content.
      std::copy(valid.begin(), valid.end(), order.begin());
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return value_less(a, b);
      });
      const double mx = scores[order.front()];
      double* prow = probs.data() + (h * m + i) * t;
      double denom = 0.0;
      for (std::size_t j : order) {
        prow[j] = std::exp(scores[j] - mx);
        denom += prow[j];
      }
      double* orow = od.data() + i * d + off;
      for (std::size_t j : order) {
        prow[j] /= denom;
        const double pj = prow[j];
        const double* vj = vd.data() + j * d + off;
        for (std::size_t c = 0; c < dh; ++c) orow[c] += pj * vj[c];
      }
    }
  }

  if (probe != nullptr) probe->weights = Tensor::FromData({heads, m, t}, probs);

  if (record) {
    tape->record([q = q, k = k, v = v, out, heads, m, t, d, dh, scale_factor,
                  probs = std::move(probs)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto qd = q.data();
      auto kd = k.data();
      auto vd = v.data();
      std::span<double> gq, gk, gv;
      if (q.requires_grad()) gq = q.grad_buffer();
      if (k.requires_grad()) gk = k.grad_buffer();
      if (v.requires_grad()) gv = v.grad_buffer();
      std::vector<double> dscore(t);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < m; ++i) {
          const double* prow = probs.data() + (h * m + i) * t;
          const double* gi = g.data() + i * d + off;
          double weighted = 0.0;
          for (std::size_t j = 0; j < t; ++j) {
            if (prow[j] == 0.0) {
              dscore[j] = 0.0;
              continue;
            }
            const double* vj = vd.data() + j * d + off;
            double dp = 0.0;
            for (std::size_t c = 0; c < dh; ++c) dp += gi[c] * vj[c];
            dscore[j] = dp;
            weighted += prow[j] * dp;
            if (!gv.empty()) {
              double* gvj = gv.data() + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) gvj[c] += prow[j] * gi[c];
            }
          }
          for (std::size_t j = 0; j < t; ++j) {
            if (prow[j] == 0.0) continue;
            const double ds = prow[j] * (dscore[j] - weighted) * scale_factor;
            if (!gq.empty()) {
              const double* kj = kd.data() + j * d + off;
              double* gqi = gq.data() + i * d + off;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            }
            if (!gk.empty()) {
              const double* qi = qd.data() + i * d + off;
              double* gkj = gk.data() + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    });
  }
  return out;
}

namespace {

Tensor AttentionBlock(const Tensor& queries, const Tensor& context,
                      const Mask& context_mask, const MultiHeadParams& params,
                      Tape* tape, AttentionProbe* probe) {
  const std::size_t d = params.dim();
  if (queries.rank() != 2 || queries.cols() != d) {
    Fail(ErrorKind::kShape, "attention: queries " +
                                ShapeToString(queries.shape()) +
                                " do not match block width " + std::to_string(d));
  }
  if (context.rank() != 2 || context.cols() != d) {
    Fail(ErrorKind::kShape, "attention: context " +
                                ShapeToString(context.shape()) +
                                " does not match block width " + std::to_string(d));
  }
  Tensor q = matmul(queries, params.w_q, tape);
  Tensor k = matmul(context, params.w_k, tape);
  Tensor v = matmul(context, params.w_v, tape);
  Tensor attended = multi_head_attend(q, k, v, params.heads, context_mask, tape, probe);
  Tensor projected = matmul(attended, params.w_o, tape);
  return layer_norm(add(queries, projected, tape), params.ln_gain,
                    params.ln_bias, kLayerNormEps, tape);
}

}  // namespace

Tensor self_attention(const Tensor& x, const Mask& mask,
                      const MultiHeadParams& params, Tape* tape,
                      AttentionProbe* probe) {
  return AttentionBlock(x, x, mask, params, tape, probe);
}

Tensor cross_attention(const Tensor& queries, const Tensor& context,
                       const Mask& context_mask, const MultiHeadParams& params,
                       Tape* tape, AttentionProbe* probe) {
  return AttentionBlock(queries, context, context_mask, params, tape, probe);
}

}  // namespace fusedrive

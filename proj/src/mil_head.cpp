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

#include "fusedrive/mil_head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"

namespace fusedrive {

Classifier Classifier::Init(std::size_t dim, std::size_t num_classes, Rng& rng) {
  Classifier c{Linear::Init(dim, dim, rng), Linear::Init(dim, dim, rng),
               Linear::Init(dim, num_classes, rng)};
  return c;
}

Tensor Classifier::forward(const Tensor& z, bool training, Rng& rng,
                           Tape* tape) const {
  Tensor h = relu(first.forward(z, tape), tape);
  h = dropout(h, dropout_rate, training, rng, tape);
  h = relu(second.forward(h, tape), tape);
  h = dropout(h, dropout_rate, training, rng, tape);
  return third.forward(h, tape);
}

void Classifier::collect(const std::string& prefix, ParameterList& out) const {
  first.collect(prefix + ".0", out);
  second.collect(prefix + ".1", out);
  third.collect(prefix + ".2", out);
}

void DecisionConfig::Validate(std::size_t n, std::size_t s) const {
  if (num_classes == 0) Fail(ErrorKind::kConfig, "num_classes must be >= 1");
  if (k < 1 || k > n) {
    Fail(ErrorKind::kConfig, "k must be in [1, " + std::to_string(n) + "], got " +
                                 std::to_string(k));
  }
  if (k_hat < 1 || k_hat > s) {
    Fail(ErrorKind::kConfig, "k_hat must be in [1, " + std::to_string(s) +
                                 "], got " + std::to_string(k_hat));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    Fail(ErrorKind::kConfig, "lambda must be in [0, 1]");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    Fail(ErrorKind::kConfig, "threshold must be in (0, 1)");
  }
}

Cam compute_cam(const Tensor& z, const Mask& mask, const Classifier& classifier,
                bool training, Rng& rng, Tape* tape) {
  if (z.rank() != 2 || z.cols() != classifier.first.in_features()) {
    Fail(ErrorKind::kShape, "compute_cam: features " + ShapeToString(z.shape()) +
                                " do not match classifier width " +
                                std::to_string(classifier.first.in_features()));
  }
  if (mask.size() != z.rows()) {
    Fail(ErrorKind::kShape, "compute_cam: mask length does not match instances");
  }
  return Cam{classifier.forward(z, training, rng, tape), mask};
}

Selection select_topk(const Cam& cam, std::size_t k) {
  const std::size_t m = cam.instances(), c = cam.classes();
  if (cam.mask.size() != m) Fail(ErrorKind::kShape, "cam mask length mismatch");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < m; ++i)
    if (cam.mask[i]) valid.push_back(i);
  if (valid.empty()) Fail(ErrorKind::kData, "top-k pooling over zero valid instances");
  if (k == 0) Fail(ErrorKind::kConfig, "top-k pooling needs k >= 1");
  const std::size_t kk = std::min(k, valid.size());
  auto scores = cam.scores.data();
  Selection selection(c);
  std::vector<std::size_t> order(valid.size());
  for (std::size_t cls = 0; cls < c; ++cls) {
    order = valid;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        const double sa = scores[a * c + cls];
                        const double sb = scores[b * c + cls];
                        if (sa != sb) return sa > sb;
                        return a < b;
                      });
    selection[cls].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk));
  }
  return selection;
}

Tensor topk_avg_pool(const Cam& cam, std::size_t k, Tape* tape,
                     Selection* selection_out) {
  Selection selection = select_topk(cam, k);
  const std::size_t c = cam.classes();
  const Tensor& scores = cam.scores;
  const bool record = ShouldRecord(tape, {&scores});
  Tensor out = Tensor::Zeros({c}, record);
  auto od = out.mutable_data();
  auto sd = scores.data();
  for (std::size_t cls = 0; cls < c; ++cls) {
    double acc = 0.0;
    for (std::size_t i : selection[cls]) acc += sd[i * c + cls];
    od[cls] = acc / static_cast<double>(selection[cls].size());
  }
  if (record) {
    tape->record([scores = scores, out, selection, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gs = scores.grad_buffer();
      for (std::size_t cls = 0; cls < c; ++cls) {
        const double share = g[cls] / static_cast<double>(selection[cls].size());
        for (std::size_t i : selection[cls]) gs[i * c + cls] += share;
      }
    });
  }
  if (selection_out != nullptr) *selection_out = std::move(selection);
  return out;
}

Tensor fuse(const Tensor& p_v, const Tensor& p_l, double lambda, Tape* tape) {
  if (p_v.shape() != p_l.shape()) {
    Fail(ErrorKind::kShape, "fuse: branch outputs differ in shape");
  }
  return add(scale(p_v, lambda, tape), scale(p_l, 1.0 - lambda, tape), tape);
}

Tensor mil_loss(const Tensor& logits, const Label& y, bool multi_label,
                Tape* tape) {
  const std::size_t c = logits.size();
  if (y.size() != c) {
    Fail(ErrorKind::kData, "mil_loss: label length " + std::to_string(y.size()) +
                               " != " + std::to_string(c));
  }
  std::size_t ones = 0;
  for (std::uint8_t v : y) {
    if (v > 1) Fail(ErrorKind::kData, "mil_loss: label entries must be 0 or 1");
    ones += v;
  }
  if (!multi_label && ones != 1) {
    Fail(ErrorKind::kData, "mil_loss: single-label target must be one-hot");
  }
  auto x = logits.data();
  std::vector<double> dlogits(c);
  double loss = 0.0;
  if (multi_label) {
    for (std::size_t i = 0; i < c; ++i) {
      const double yi = y[i];
      loss += std::max(x[i], 0.0) - x[i] * yi + std::log1p(std::exp(-std::abs(x[i])));
      const double sig = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                     : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      dlogits[i] = (sig - yi) / static_cast<double>(c);
    }
    loss /= static_cast<double>(c);
  } else {
    const double mx = *std::max_element(x.begin(), x.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < c; ++i) denom += std::exp(x[i] - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t i = 0; i < c; ++i) {
      if (y[i]) loss = lse - x[i];
      dlogits[i] = std::exp(x[i] - lse) - y[i];
    }
  }
  const bool record = ShouldRecord(tape, {&logits});
  Tensor out = Tensor::Scalar(loss, record);
  if (record) {
    tape->record([logits = logits, out, dlogits = std::move(dlogits)]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto gl = logits.grad_buffer();
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g * dlogits[i];
    });
  }
  return out;
}

void decide(const Tensor& logits, const DecisionConfig& config,
            DecisionOutput& out) {
  auto x = logits.data();
  const std::size_t c = x.size();
  out.logits.assign(x.begin(), x.end());
  out.probabilities.assign(c, 0.0);
  out.decisions.assign(c, 0);
  if (config.multi_label) {
    for (std::size_t i = 0; i < c; ++i) {
      out.probabilities[i] = 1.0 / (1.0 + std::exp(-x[i]));
      out.decisions[i] = out.probabilities[i] >= config.threshold ? 1 : 0;
    }
  } else {
    const double mx = *std::max_element(x.begin(), x.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < c; ++i) denom += std::exp(x[i] - mx);
    for (std::size_t i = 0; i < c; ++i) out.probabilities[i] = std::exp(x[i] - mx) / denom;
    const auto best = std::max_element(x.begin(), x.end()) - x.begin();
    out.decisions[static_cast<std::size_t>(best)] = 1;
  }
}

std::vector<ClassExplanation> explain(const Cam& cam_v, const Cam& cam_l,
                                      const Label& decisions,
                                      const DecisionConfig& config) {
  Selection vision, text;
  if (cam_v.scores.defined()) vision = select_topk(cam_v, config.k);
  if (cam_l.scores.defined()) text = select_topk(cam_l, config.k_hat);
  std::vector<ClassExplanation> out;
  for (std::size_t cls = 0; cls < decisions.size(); ++cls) {
    if (!decisions[cls]) continue;
    ClassExplanation e;
    e.class_index = cls;
    if (!vision.empty()) e.vision = vision[cls];
    if (!text.empty()) e.text = text[cls];
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace fusedrive

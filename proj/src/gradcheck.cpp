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

#include "fusedrive/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "fusedrive/ops.hpp"

namespace fusedrive {

double GradRelError(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

namespace {

FeatureBundle RandomBundle(const BundleDims& d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = normal(rng);
    return Tensor::FromData({rows, cols}, std::move(v));
  };
  FeatureBundle b;
  b.sample_id = "gradcheck";
  b.global = fill(d.t, d.d_global);
  b.local = fill(d.n, d.d_local);
  b.text = fill(d.s, d.d_text);
  b.local_mask.assign(d.n, 1);
  b.text_mask.assign(d.s, 1);
  b.label.assign(d.num_classes, 0);
  b.label[0] = 1;
  if (d.num_classes > 2) b.label[2] = 1;
  b.descriptions.assign(d.s, "description");
  return b;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(options.seed);
  Model model = Model::Init(options.dims, BranchMode::kFull, rng());
  const FeatureBundle bundle = RandomBundle(options.dims.input, rng);
  DecisionConfig decision = options.decision;
  decision.num_classes = options.dims.input.num_classes;

  auto loss_of = [&](Tape* tape) {
    ForwardOptions fo;
    fo.tape = tape;
    Rng unused(0);
    ForwardResult r = model_forward(bundle, model, decision, unused, fo);
    return mil_loss(r.logits, bundle.label, decision.multi_label, tape);
  };

  const ParameterList params = model.main_parameters();
  Tape tape;
  Tensor loss = loss_of(&tape);
  tape.backward(loss);

  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  GradcheckReport report;
  for (std::size_t i = 0; i < options.samples; ++i) {
    const NamedTensor& p = params[order[i % order.size()]];
    Tensor t = p.tensor;
    std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
    const std::size_t idx = pick(rng);
    const double analytic = t.has_grad() ? t.grad()[idx] : 0.0;
    const double saved = t.data()[idx];
    t.mutable_data()[idx] = saved + options.step;
    const double up = loss_of(nullptr).item();
    t.mutable_data()[idx] = saved - options.step;
    const double down = loss_of(nullptr).item();
    t.mutable_data()[idx] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    GradcheckEntry e{p.name, idx, analytic, numeric, GradRelError(analytic, numeric)};
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(std::move(e));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string FormatGradcheck(const GradcheckReport& report) {
  std::string out;
  char buf[256];
  for (const GradcheckEntry& e : report.entries) {
    std::snprintf(buf, sizeof buf, "param=%s index=%zu analytic=%.9e numeric=%.9e rel_error=%.3e\n",
                  e.param.c_str(), e.index, e.analytic, e.numeric, e.rel_error);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "max_rel_error=%.3e samples=%zu seconds=%.2f\n",
                report.max_rel_error, report.entries.size(), report.seconds);
  out += buf;
  return out;
}

}  // namespace fusedrive

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
#include <vector>

#include "fusedrive/bundle.hpp"
#include "fusedrive/nn.hpp"
#include "fusedrive/tensor.hpp"

namespace fusedrive {

inline constexpr double kClassifierDropout = 0.7;

/// Per-instance classifier: D -> D -> D -> C with relu and dropout between
/// layers.
struct Classifier {
  Linear first;
  Linear second;
  Linear third;
  double dropout_rate = kClassifierDropout;

  static Classifier Init(std::size_t dim, std::size_t num_classes, Rng& rng);
  std::size_t num_classes() const { return third.out_features(); }
  Tensor forward(const Tensor& z, bool training, Rng& rng, Tape* tape) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Class activation matrix: per-instance class logits plus validity mask.
struct Cam {
  Tensor scores;  // [m x C]
  Mask mask;

  std::size_t instances() const { return scores.rows(); }
  std::size_t classes() const { return scores.cols(); }
};

struct DecisionConfig {
  std::size_t num_classes = 4;
  std::size_t k = 16;
  std::size_t k_hat = 1;
  double lambda = 0.8;
  bool multi_label = true;
  double threshold = 0.5;

  // Checks 1 <= k <= n, 1 <= k_hat <= s, 0 <= lambda <= 1.
  void Validate(std::size_t n, std::size_t s) const;
};

// Selected instance indices per class, each list in descending score order.
using Selection = std::vector<std::vector<std::size_t>>;

Cam compute_cam(const Tensor& z, const Mask& mask, const Classifier& classifier,
                bool training, Rng& rng, Tape* tape = nullptr);

// Per class: indices of the k highest-scoring valid instances, ordered by
// descending score with ties broken by lower index. k is clamped to the
// number of valid instances; zero valid instances is a kData error.
Selection select_topk(const Cam& cam, std::size_t k);

// Per class mean of the top-k valid scores -> [C]. Gradient flows only to the
// selected entries.
Tensor topk_avg_pool(const Cam& cam, std::size_t k, Tape* tape = nullptr,
                     Selection* selection = nullptr);

// lambda * p_v + (1 - lambda) * p_l
Tensor fuse(const Tensor& p_v, const Tensor& p_l, double lambda,
            Tape* tape = nullptr);

// Multi-label: mean over classes of binary cross-entropy with logits.
// Single-label: softmax cross-entropy against the one-hot label.
Tensor mil_loss(const Tensor& logits, const Label& y, bool multi_label,
                Tape* tape = nullptr);

struct ClassExplanation {
  std::size_t class_index = 0;
  std::vector<std::size_t> vision;  // local instance indices
  std::vector<std::size_t> text;    // description indices
};

struct DecisionOutput {
  std::vector<double> logits;
  std::vector<double> probabilities;
  Label decisions;
  std::vector<ClassExplanation> explanations;
  // Set when refined prediction was requested but no surrogate was available.
  bool refinement_unavailable = false;
};

// Probabilities and thresholded (or argmax, single-label) decisions.
void decide(const Tensor& logits, const DecisionConfig& config,
            DecisionOutput& out);

// For every class with decision 1: the top-k vision and top-k_hat text
// indices, descending by score. Either CAM may be absent (undefined scores)
// when its branch is disabled.
std::vector<ClassExplanation> explain(const Cam& cam_v, const Cam& cam_l,
                                      const Label& decisions,
                                      const DecisionConfig& config);

}  // namespace fusedrive

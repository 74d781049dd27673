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
#include <filesystem>
#include <string>
#include <vector>

#include "fusedrive/mil_head.hpp"
#include "fusedrive/nn.hpp"

namespace fusedrive {

/// Maps raw text features into the classifier input space:
/// d_text -> hidden -> D -> D, relu after the first two layers.
struct Surrogate {
  Linear first;
  Linear second;
  Linear third;

  static Surrogate Init(std::size_t d_text, std::size_t hidden, std::size_t dim,
                        Rng& rng);
  Tensor forward(const Tensor& x_text, Tape* tape) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// Deep copy of a trained classifier whose parameters never require
/// gradients. Evaluated without dropout.
class FrozenClassifier {
 public:
  explicit FrozenClassifier(const Classifier& trained);
  const Classifier& classifier() const { return frozen_; }

 private:
  Classifier frozen_;
};

/// Binary description-by-class relevance matrix.
struct PseudoCam {
  std::string sample_id;
  std::size_t rows = 0;
  std::size_t classes = 0;
  std::vector<std::uint8_t> values;  // row-major rows x classes
  Mask mask;

  std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * classes + c]; }
  void set(std::size_t r, std::size_t c, std::uint8_t v) { values[r * classes + c] = v; }
  static PseudoCam Zeros(std::string sample_id, std::size_t rows,
                         std::size_t classes, Mask mask);
  void Validate() const;
};

// JSON file: {"sample_id", "rows", "classes", "mask": [...], "matrix": [[...]]}
void write_pseudo_cam(const std::filesystem::path& path, const PseudoCam& cam);
PseudoCam read_pseudo_cam(const std::filesystem::path& path);

// O'_cam = F_t(surrogate(X_l)).
Cam surrogate_forward(const Tensor& x_text, const Mask& mask,
                      const Surrogate& surrogate, const FrozenClassifier& head,
                      Tape* tape = nullptr);

// Mean elementwise binary cross-entropy with logits over valid rows.
Tensor refinement_loss(const Cam& cam_prime, const PseudoCam& pseudo,
                       Tape* tape = nullptr);

// Elementwise mean of two CAMs with identical shape and mask.
Cam refine_cam(const Cam& cam, const Cam& cam_prime);

}  // namespace fusedrive

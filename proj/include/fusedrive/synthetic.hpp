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

#include "fusedrive/bundle.hpp"
#include "fusedrive/manifest.hpp"
#include "fusedrive/refinement.hpp"

namespace fusedrive {

/// Parameters of the planted-salience generator.
///
/// Every positive class plants `planted_per_class` local rows and one text
/// row along a class-specific direction; all other valid rows are isotropic
/// noise. Global frames carry a weak sum of positive-class directions.
struct SyntheticSpec {
  std::size_t n_train = 2000;
  std::size_t n_eval = 500;
  BundleDims dims{4, 64, 16, 64, 8, 64, 4};
  std::vector<std::string> class_names{"forward", "stop", "left", "right"};
  // Multi-label: independent per-class positive rates, conditioned on at
  // least one positive. Single-label: unnormalized class weights.
  std::vector<double> class_prior{0.5, 0.35, 0.3, 0.3};
  bool multi_label = true;
  std::size_t planted_per_class = 2;
  double noise = 1.0;
  // Probability that a positive class's description row carries no signal.
  double hallucination_rate = 0.2;
  // Probability that a positive class plants no local rows at all.
  double vision_miss_rate = 0.05;
  // Amplitude of class directions in the global frames.
  double global_signal = 0.1;

  // Throws kUsage naming the offending field.
  void Validate() const;
};

// Ground-truth planted row indices per class (empty lists for negatives).
struct PlantedTruth {
  std::string sample_id;
  std::vector<std::vector<std::size_t>> vision;
  std::vector<std::vector<std::size_t>> text;
};

void write_planted_truth(const std::filesystem::path& path, const PlantedTruth& truth);
PlantedTruth read_planted_truth(const std::filesystem::path& path);

struct SyntheticSample {
  FeatureBundle bundle;
  PlantedTruth planted;
  PseudoCam oracle_pseudo;  // planted, non-hallucinated text rows marked 1
  std::string split;
};

class SyntheticGenerator {
 public:
  SyntheticGenerator(SyntheticSpec spec, std::uint64_t seed);

  SyntheticSample next(const std::string& sample_id, const std::string& split);
  const SyntheticSpec& spec() const { return spec_; }

  // Unit-RMS class directions (norm sqrt(width)).
  const std::vector<std::vector<double>>& local_directions() const { return local_dirs_; }
  const std::vector<std::vector<double>>& text_directions() const { return text_dirs_; }

 private:
  Label SampleLabel();
  std::vector<double> Noise(std::size_t count);

  SyntheticSpec spec_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<std::vector<double>> global_dirs_;
  std::vector<std::vector<double>> local_dirs_;
  std::vector<std::vector<double>> text_dirs_;
};

// Train samples first, then eval, ids "syn00000", "syn00001", ...
std::vector<SyntheticSample> generate_samples(const SyntheticSpec& spec,
                                              std::uint64_t seed);

// Writes manifest.json plus bundles/<id>.fdb, <id>.planted.json and
// <id>.pseudo.json into out_dir.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                   const std::filesystem::path& out_dir);

}  // namespace fusedrive

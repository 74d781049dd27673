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
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fusedrive/checkpoint.hpp"
#include "fusedrive/metrics.hpp"
#include "fusedrive/model.hpp"
#include "fusedrive/optimizer.hpp"
#include "fusedrive/refinement.hpp"

namespace fusedrive {

struct EpochLog {
  std::string phase;
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per-sample loss over the epoch
  std::optional<double> train_mf1;  // from training-mode predictions
  std::optional<double> val_mf1;
  double elapsed_s = 0.0;
};

// One line with stable keys, e.g.
// "phase=main epoch=3 loss=0.412345 train_mf1=0.8123 val_mf1=0.8000 elapsed_s=12.3"
std::string FormatEpochLog(const EpochLog& log);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // When set, final/best checkpoints and the epoch log are written here.
  std::optional<std::filesystem::path> out_dir;
  std::ostream* log = nullptr;
  std::function<void(const EpochLog&)> on_epoch;

  void Validate() const;
  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps}; }
};

struct TrainResult {
  Model model;  // final parameters
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
  std::vector<EpochLog> history;
};

struct MainPhaseInputs {
  const std::vector<FeatureBundle>* train = nullptr;
  // Optional model-selection split; best checkpoint = final when empty.
  const std::vector<FeatureBundle>* val = nullptr;
  ModelDims dims;
  BranchMode mode = BranchMode::kFull;
  DecisionConfig decision;
  std::vector<std::string> class_names;
  bool multi_label = true;
};

// Minimizes the MIL loss over shuffled mini-batches (last partial batch
// kept). Initialization, shuffling and dropout all draw from `rng`.
TrainResult train_main(const MainPhaseInputs& inputs, const TrainConfig& config,
                       Rng& rng);

using PseudoCamTable = std::map<std::string, PseudoCam>;

// Trains only the surrogate against pseudo CAMs with the text head frozen;
// every other parameter of `checkpoint` is carried over bit-identically.
// Throws kUsage when a training sample has no pseudo CAM.
TrainResult train_refinement(const Checkpoint& checkpoint,
                             const std::vector<FeatureBundle>& train,
                             const PseudoCamTable& pseudo_cams,
                             const TrainConfig& config, Rng& rng);

struct EvalResult {
  ConfusionCounts counts;
  F1Report report;
  std::vector<DecisionOutput> outputs;  // manifest order
};

EvalResult evaluate(const Model& model, const std::vector<FeatureBundle>& samples,
                    const DecisionConfig& config, bool refined);

}  // namespace fusedrive

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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fusedrive/mil_head.hpp"
#include "fusedrive/model.hpp"
#include "fusedrive/optimizer.hpp"

namespace fusedrive {

struct TrainConfig;

inline constexpr char kCheckpointMagic[4] = {'F', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a model.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelDims dims;
  BranchMode mode = BranchMode::kFull;
  DecisionConfig decision;
  std::vector<std::string> class_names;
  std::string phase = "main";  // "main" or "refinement"
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  double lr = 1e-4;
  std::uint64_t batch_size = 128;
  std::uint64_t epochs = 100;
  ParameterList params;  // deep copies, model order
  AdamState adam;

  bool has_surrogate() const;
};

Checkpoint MakeCheckpoint(const Model& model, const AdamState& adam,
                          const DecisionConfig& decision,
                          const TrainConfig& train,
                          const std::vector<std::string>& class_names,
                          const std::string& phase, std::uint64_t epoch);

// Rebuilds the model; parameter names and shapes must match the layout
// implied by dims and mode (kFormat otherwise).
Model ModelFromCheckpoint(const Checkpoint& checkpoint);

// Binary layout, little-endian:
//   "FDCK" | u32 version | u32 len + JSON metadata
//   | u32 param count | per param: u32 len + name, u32 rank, u64 dims..., f64 data
//   | u64 adam step | f64 lr, beta1, beta2, eps | u32 moment count
//   | per moment: u32 len + name, u64 size, f64 m..., f64 v...
std::string EncodeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DecodeCheckpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values by name into the model's existing tensors.
void AssignParameters(const ParameterList& target, const ParameterList& values);

// Deep copy; the clone shares no storage with the source.
Model CloneModel(const Model& model);

// FNV-1a over names, shapes and value bits, as 16 hex digits.
std::string ParameterHash(const ParameterList& params);

}  // namespace fusedrive

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

#include <filesystem>
#include <string>
#include <vector>

#include "fusedrive/bundle.hpp"

namespace fusedrive {

struct SampleEntry {
  std::string id;
  std::string bundle;  // path relative to the manifest directory
  Label label;
  std::string split = "train";
  std::vector<std::string> descriptions;
  std::string image;  // optional opaque image reference for enrichment
};

/// Dataset description stored as JSON next to the bundles it references.
struct DatasetManifest {
  std::string name;
  std::vector<std::string> class_names;
  bool multi_label = true;
  BundleDims dims;
  std::vector<SampleEntry> samples;
  std::filesystem::path root;  // directory holding the manifest file

  std::size_t num_classes() const { return dims.num_classes; }
  std::filesystem::path bundle_path(const SampleEntry& entry) const;
  // Sibling file of the bundle with the extension replaced by `suffix`,
  // e.g. ".planted.json".
  std::filesystem::path sidecar_path(const SampleEntry& entry,
                                     const std::string& suffix) const;
  std::vector<const SampleEntry*> split(const std::string& name) const;

  // Field-level checks; with check_bundles, every referenced bundle must
  // exist and its header must match `dims`.
  void Validate(bool check_bundles) const;
};

inline constexpr const char* kManifestFormat = "fusedrive-manifest";
inline constexpr int kManifestVersion = 1;

DatasetManifest load_manifest(const std::filesystem::path& path,
                              bool check_bundles = true);
void save_manifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest);

// Reads and validates every bundle of a split, in manifest order.
std::vector<FeatureBundle> load_split(const DatasetManifest& manifest,
                                      const std::string& split);

}  // namespace fusedrive

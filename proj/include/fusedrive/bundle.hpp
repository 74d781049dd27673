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

#include "fusedrive/nn.hpp"
#include "fusedrive/tensor.hpp"

namespace fusedrive {

using Label = std::vector<std::uint8_t>;

struct BundleDims {
  std::size_t t = 15;          // global frames
  std::size_t d_global = 1024;
  std::size_t n = 80;          // local instances
  std::size_t d_local = 256;
  std::size_t s = 20;          // descriptions
  std::size_t d_text = 1024;
  std::size_t num_classes = 4;

  bool operator==(const BundleDims&) const = default;
};

/// One sample's precomputed features.
struct FeatureBundle {
  std::string sample_id;
  Tensor global;  // [t x d_global]
  Tensor local;   // [n x d_local]
  Mask local_mask;
  Tensor text;    // [s x d_text]
  Mask text_mask;
  Label label;
  std::vector<std::string> descriptions;  // s entries, padded entries empty

  BundleDims dims() const;
};

// Checks every invariant of a bundle against the expected dims; throws
// kShape on dimension mismatch naming the field, kData on bad masks, padding
// or labels.
void ValidateBundle(const FeatureBundle& bundle, const BundleDims& dims,
                    bool multi_label);

// Label validity per mode: multi-label needs entries in {0,1} with at least
// one 1, single-label exactly one 1.
void ValidateLabel(const Label& label, std::size_t num_classes,
                   bool multi_label);

inline constexpr char kBundleMagic[4] = {'F', 'D', 'B', '1'};
inline constexpr std::uint32_t kBundleVersion = 1;

// Binary layout (all integers and reals little-endian):
//   "FDB1" | u32 version | u32 t, d_global, n, d_local, s, d_text, C
//   | u32 len + sample_id bytes | n mask bytes | s mask bytes | C label bytes
//   | global, local, text reals (row-major f64)
//   | s x (u32 len + UTF-8 description bytes)
std::string EncodeBundle(const FeatureBundle& bundle);
FeatureBundle DecodeBundle(const std::string& bytes);

void write_bundle(const std::filesystem::path& path, const FeatureBundle& bundle);
FeatureBundle read_bundle(const std::filesystem::path& path);
// Reads and checks the header dims against `expected` (kFormat naming the
// offending field on mismatch).
FeatureBundle read_bundle(const std::filesystem::path& path,
                          const BundleDims& expected);

// Header-only read, for manifest validation.
BundleDims read_bundle_dims(const std::filesystem::path& path);

}  // namespace fusedrive

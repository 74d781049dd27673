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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fusedrive/bundle.hpp"

namespace fusedrive {

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ClassCounts&) const = default;
};

struct ConfusionCounts {
  std::vector<ClassCounts> per_class;

  explicit ConfusionCounts(std::size_t num_classes = 0) : per_class(num_classes) {}
  std::size_t num_classes() const { return per_class.size(); }
  // Counts are additive, so shards can be merged in any order.
  ConfusionCounts& merge(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

void accumulate(const Label& decisions, const Label& label,
                ConfusionCounts& counts);

/// F1 per class = 2TP / (2TP + FP + FN), 0 when the denominator is 0.
/// f1_all is the micro F1 over all (sample, class) pairs; mf1 the unweighted
/// mean of the per-class values.
struct F1Report {
  std::vector<double> per_class;
  double f1_all = 0.0;
  double mf1 = 0.0;
};

F1Report f1_report(const ConfusionCounts& counts);

// Aligned text table, one row per class plus F1_all / mF1 lines.
std::string FormatReport(const F1Report& report,
                         const std::vector<std::string>& class_names);
nlohmann::json ReportToJson(const F1Report& report, const ConfusionCounts& counts,
                            const std::vector<std::string>& class_names);

}  // namespace fusedrive

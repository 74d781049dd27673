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

#include "fusedrive/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "fusedrive/error.hpp"

namespace fusedrive {
namespace {

double F1(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const std::uint64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

}  // namespace

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.num_classes() != num_classes()) {
    Fail(ErrorKind::kUsage, "cannot merge confusion counts of different class counts");
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per_class[c].tp += other.per_class[c].tp;
    per_class[c].fp += other.per_class[c].fp;
    per_class[c].fn += other.per_class[c].fn;
    per_class[c].tn += other.per_class[c].tn;
  }
  return *this;
}

void accumulate(const Label& decisions, const Label& label,
                ConfusionCounts& counts) {
  if (decisions.size() != counts.num_classes() || label.size() != counts.num_classes()) {
    Fail(ErrorKind::kUsage, "accumulate: expected " +
                                std::to_string(counts.num_classes()) +
                                " classes, got decisions=" +
                                std::to_string(decisions.size()) +
                                " label=" + std::to_string(label.size()));
  }
  for (std::size_t c = 0; c < label.size(); ++c) {
    ClassCounts& k = counts.per_class[c];
    const bool pred = decisions[c] != 0;
    const bool truth = label[c] != 0;
    if (pred && truth) ++k.tp;
    else if (pred) ++k.fp;
    else if (truth) ++k.fn;
    else ++k.tn;
  }
}

F1Report f1_report(const ConfusionCounts& counts) {
  F1Report r;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double total = 0.0;
  for (const ClassCounts& k : counts.per_class) {
    r.per_class.push_back(F1(k.tp, k.fp, k.fn));
    total += r.per_class.back();
    tp += k.tp;
    fp += k.fp;
    fn += k.fn;
  }
  r.f1_all = F1(tp, fp, fn);
  r.mf1 = counts.per_class.empty() ? 0.0
                                   : total / static_cast<double>(counts.per_class.size());
  return r;
}

std::string FormatReport(const F1Report& report,
                         const std::vector<std::string>& class_names) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-16s %8s\n", "class", "F1");
  os << line;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const std::string name =
        c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    std::snprintf(line, sizeof(line), "%-16s %8.4f\n", name.c_str(), report.per_class[c]);
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-16s %8.4f\n%-16s %8.4f\n", "F1_all",
                report.f1_all, "mF1", report.mf1);
  os << line;
  return os.str();
}

nlohmann::json ReportToJson(const F1Report& report, const ConfusionCounts& counts,
                            const std::vector<std::string>& class_names) {
  nlohmann::json j;
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassCounts& k = counts.per_class[c];
    classes.push_back({{"name", c < class_names.size() ? class_names[c]
                                                       : "class" + std::to_string(c)},
                       {"f1", report.per_class[c]},
                       {"tp", k.tp},
                       {"fp", k.fp},
                       {"fn", k.fn},
                       {"tn", k.tn}});
  }
  j["classes"] = std::move(classes);
  j["f1_all"] = report.f1_all;
  j["mf1"] = report.mf1;
  return j;
}

}  // namespace fusedrive

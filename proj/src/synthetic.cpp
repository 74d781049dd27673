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

#include "fusedrive/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"

namespace fusedrive {
namespace {

void Require(bool ok, const char* field, const std::string& what) {
  if (!ok) Fail(ErrorKind::kUsage, std::string("synthetic spec field '") + field + "': " + what);
}

std::string CuePhrase(const std::string& class_name) {
  if (class_name == "forward") return "the road ahead is clear and traffic is moving";
  if (class_name == "stop") return "the traffic light ahead is red and a car is braking";
  if (class_name == "left") return "the left lane is free of vehicles";
  if (class_name == "right") return "the right lane is free of vehicles";
  return "a scene cue supporting " + class_name;
}

constexpr const char* kDistractors[] = {
    "a building on the roadside",  "a tree near the sidewalk",
    "a parked car at the curb",    "clouds in the sky",
    "a pole beside the road",      "lane markings are faded",
    "a billboard above the street", "a pedestrian far away on the sidewalk",
};

}  // namespace

void SyntheticSpec::Validate() const {
  const std::size_t c = dims.num_classes;
  Require(n_train > 0, "n_train", "must be >= 1");
  Require(c >= 1, "num_classes", "must be >= 1");
  Require(dims.t >= 1 && dims.n >= 1 && dims.s >= 1, "dims", "t, n, s must be >= 1");
  Require(dims.d_global >= 1 && dims.d_local >= 1 && dims.d_text >= 1, "dims",
          "feature widths must be >= 1");
  Require(class_names.size() == c, "class_names", "must have num_classes entries");
  Require(class_prior.size() == c, "class_prior", "must have num_classes entries");
  for (double p : class_prior) Require(p >= 0.0 && p <= 1.0, "class_prior", "entries must be in [0,1]");
  Require(std::any_of(class_prior.begin(), class_prior.end(), [](double p) { return p > 0.0; }),
          "class_prior", "at least one entry must be positive");
  Require(planted_per_class >= 1, "planted_per_class", "must be >= 1");
  Require(planted_per_class * c <= dims.n, "planted_per_class",
          "planted rows for all classes exceed n");
  Require(c <= dims.s, "num_classes", "one description per class must fit in s");
  Require(noise >= 0.0 && std::isfinite(noise), "noise", "must be >= 0");
  Require(hallucination_rate >= 0.0 && hallucination_rate <= 1.0, "hallucination_rate",
          "must be in [0,1]");
  Require(vision_miss_rate >= 0.0 && vision_miss_rate <= 1.0, "vision_miss_rate",
          "must be in [0,1]");
  Require(global_signal >= 0.0 && std::isfinite(global_signal), "global_signal", "must be >= 0");
}

void write_planted_truth(const std::filesystem::path& path, const PlantedTruth& truth) {
  nlohmann::ordered_json j;
  j["sample_id"] = truth.sample_id;
  j["vision"] = truth.vision;
  j["text"] = truth.text;
  WriteFileBytes(path, j.dump() + "\n");
}

PlantedTruth read_planted_truth(const std::filesystem::path& path) {
  try {
    const nlohmann::json j = nlohmann::json::parse(ReadFileBytes(path));
    PlantedTruth t;
    t.sample_id = j.at("sample_id").get<std::string>();
    t.vision = j.at("vision").get<std::vector<std::vector<std::size_t>>>();
    t.text = j.at("text").get<std::vector<std::vector<std::size_t>>>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

SyntheticGenerator::SyntheticGenerator(SyntheticSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {
  spec_.Validate();
  auto direction = [&](std::size_t width) {
    std::vector<double> v(width);
    double norm = 0.0;
    for (double& x : v) {
      x = normal_(rng_);
      norm += x * x;
    }
    const double scale = std::sqrt(static_cast<double>(width) / norm);
    for (double& x : v) x *= scale;
    return v;
  };
  for (std::size_t c = 0; c < spec_.dims.num_classes; ++c) {
    global_dirs_.push_back(direction(spec_.dims.d_global));
    local_dirs_.push_back(direction(spec_.dims.d_local));
    text_dirs_.push_back(direction(spec_.dims.d_text));
  }
}

std::vector<double> SyntheticGenerator::Noise(std::size_t count) {
  std::vector<double> v(count);
  for (double& x : v) x = spec_.noise * normal_(rng_);
  return v;
}

Label SyntheticGenerator::SampleLabel() {
  const std::size_t c = spec_.dims.num_classes;
  Label y(c, 0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  if (spec_.multi_label) {
    do {
      for (std::size_t k = 0; k < c; ++k) y[k] = uniform(rng_) < spec_.class_prior[k] ? 1 : 0;
    } while (std::all_of(y.begin(), y.end(), [](std::uint8_t v) { return v == 0; }));
  } else {
    std::discrete_distribution<std::size_t> pick(spec_.class_prior.begin(),
                                                 spec_.class_prior.end());
    y[pick(rng_)] = 1;
  }
  return y;
}

SyntheticSample SyntheticGenerator::next(const std::string& sample_id,
                                         const std::string& split) {
  const BundleDims& d = spec_.dims;
  const std::size_t c = d.num_classes;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  SyntheticSample out;
  out.split = split;
  FeatureBundle& b = out.bundle;
  b.sample_id = sample_id;
  b.label = SampleLabel();
  out.planted.sample_id = sample_id;
  out.planted.vision.assign(c, {});
  out.planted.text.assign(c, {});

  std::vector<std::size_t> positives;
  for (std::size_t k = 0; k < c; ++k)
    if (b.label[k]) positives.push_back(k);

  // Global frames.
  std::vector<double> global(d.t * d.d_global);
  for (std::size_t f = 0; f < d.t; ++f) {
    std::vector<double> row = Noise(d.d_global);
    for (std::size_t k : positives)
      for (std::size_t j = 0; j < d.d_global; ++j)
        row[j] += spec_.global_signal * global_dirs_[k][j];
    std::copy(row.begin(), row.end(), global.begin() + static_cast<std::ptrdiff_t>(f * d.d_global));
  }
  b.global = Tensor::FromData({d.t, d.d_global}, std::move(global));

  // Local instances: valid rows first, zero padding after.
  const std::size_t planted_rows = spec_.planted_per_class * positives.size();
  std::uniform_int_distribution<std::size_t> local_count(std::max<std::size_t>(planted_rows, 1), d.n);
  const std::size_t n_valid = local_count(rng_);
  std::vector<std::size_t> slots(n_valid);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng_);
  std::vector<int> local_class(d.n, -1);
  std::size_t next_slot = 0;
  for (std::size_t k : positives) {
    const bool missed = uniform(rng_) < spec_.vision_miss_rate;
    for (std::size_t r = 0; r < spec_.planted_per_class; ++r) {
      const std::size_t slot = slots[next_slot++];
      if (missed) continue;
      local_class[slot] = static_cast<int>(k);
      out.planted.vision[k].push_back(slot);
    }
    std::sort(out.planted.vision[k].begin(), out.planted.vision[k].end());
  }
  std::vector<double> local(d.n * d.d_local, 0.0);
  b.local_mask.assign(d.n, 0);
  for (std::size_t i = 0; i < n_valid; ++i) {
    b.local_mask[i] = 1;
    std::vector<double> row = Noise(d.d_local);
    if (local_class[i] >= 0)
      for (std::size_t j = 0; j < d.d_local; ++j) row[j] += local_dirs_[local_class[i]][j];
    std::copy(row.begin(), row.end(), local.begin() + static_cast<std::ptrdiff_t>(i * d.d_local));
  }
  b.local = Tensor::FromData({d.n, d.d_local}, std::move(local));

  // Descriptions: one per positive class, possibly hallucinated.
  std::uniform_int_distribution<std::size_t> text_count(std::max<std::size_t>(positives.size(), 1), d.s);
  const std::size_t s_valid = text_count(rng_);
  std::vector<std::size_t> text_slots(s_valid);
  std::iota(text_slots.begin(), text_slots.end(), 0);
  std::shuffle(text_slots.begin(), text_slots.end(), rng_);
  std::vector<int> text_class(d.s, -1);
  std::size_t next_text = 0;
  for (std::size_t k : positives) {
    const std::size_t slot = text_slots[next_text++];
    if (uniform(rng_) < spec_.hallucination_rate) continue;
    text_class[slot] = static_cast<int>(k);
    out.planted.text[k].push_back(slot);
  }
  std::vector<double> text(d.s * d.d_text, 0.0);
  b.text_mask.assign(d.s, 0);
  b.descriptions.assign(d.s, "");
  std::uniform_int_distribution<std::size_t> distractor(0, std::size(kDistractors) - 1);
  for (std::size_t i = 0; i < s_valid; ++i) {
    b.text_mask[i] = 1;
    std::vector<double> row = Noise(d.d_text);
    if (text_class[i] >= 0) {
      for (std::size_t j = 0; j < d.d_text; ++j) row[j] += text_dirs_[text_class[i]][j];
      b.descriptions[i] = CuePhrase(spec_.class_names[text_class[i]]);
    } else {
      b.descriptions[i] = kDistractors[distractor(rng_)];
    }
    std::copy(row.begin(), row.end(), text.begin() + static_cast<std::ptrdiff_t>(i * d.d_text));
  }
  b.text = Tensor::FromData({d.s, d.d_text}, std::move(text));

  out.oracle_pseudo = PseudoCam::Zeros(sample_id, d.s, c, b.text_mask);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t row : out.planted.text[k]) out.oracle_pseudo.set(row, k, 1);
  return out;
}

std::vector<SyntheticSample> generate_samples(const SyntheticSpec& spec,
                                              std::uint64_t seed) {
  SyntheticGenerator gen(spec, seed);
  std::vector<SyntheticSample> out;
  const std::size_t total = spec.n_train + spec.n_eval;
  out.reserve(total);
  char id[32];
  for (std::size_t i = 0; i < total; ++i) {
    std::snprintf(id, sizeof(id), "syn%05zu", i);
    out.push_back(gen.next(id, i < spec.n_train ? "train" : "eval"));
  }
  return out;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed,
                                   const std::filesystem::path& out_dir) {
  const std::vector<SyntheticSample> samples = generate_samples(spec, seed);
  DatasetManifest m;
  m.name = "synthetic";
  m.class_names = spec.class_names;
  m.multi_label = spec.multi_label;
  m.dims = spec.dims;
  m.root = out_dir;
  std::filesystem::create_directories(out_dir / "bundles");
  for (const SyntheticSample& s : samples) {
    SampleEntry e;
    e.id = s.bundle.sample_id;
    e.bundle = "bundles/" + e.id + ".fdb";
    e.label = s.bundle.label;
    e.split = s.split;
    for (const std::string& desc : s.bundle.descriptions)
      if (!desc.empty()) e.descriptions.push_back(desc);
    e.image = "synthetic://" + e.id;
    write_bundle(m.bundle_path(e), s.bundle);
    write_planted_truth(m.sidecar_path(e, ".planted.json"), s.planted);
    write_pseudo_cam(m.sidecar_path(e, ".pseudo.json"), s.oracle_pseudo);
    m.samples.push_back(std::move(e));
  }
  save_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace fusedrive

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

#include "fusedrive/manifest.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"

namespace fusedrive {

std::filesystem::path DatasetManifest::bundle_path(const SampleEntry& entry) const {
  return root / entry.bundle;
}

std::filesystem::path DatasetManifest::sidecar_path(const SampleEntry& entry,
                                                    const std::string& suffix) const {
  std::filesystem::path p = bundle_path(entry);
  p.replace_extension(suffix);
  return p;
}

std::vector<const SampleEntry*> DatasetManifest::split(const std::string& name) const {
  std::vector<const SampleEntry*> out;
  for (const SampleEntry& e : samples)
    if (e.split == name) out.push_back(&e);
  return out;
}

void DatasetManifest::Validate(bool check_bundles) const {
  auto fail = [](const std::string& field, const std::string& what) {
    Fail(ErrorKind::kData, "manifest field '" + field + "': " + what);
  };
  if (dims.num_classes == 0) fail("num_classes", "must be >= 1");
  if (class_names.size() != dims.num_classes) {
    fail("class_names", "has " + std::to_string(class_names.size()) +
                            " entries but num_classes is " +
                            std::to_string(dims.num_classes));
  }
  const std::pair<const char*, std::size_t> dim_fields[] = {
      {"dims.t", dims.t},     {"dims.d_global", dims.d_global},
      {"dims.n", dims.n},     {"dims.d_local", dims.d_local},
      {"dims.s", dims.s},     {"dims.d_text", dims.d_text}};
  for (const auto& [field, v] : dim_fields)
    if (v == 0) fail(field, "must be >= 1");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleEntry& e = samples[i];
    const std::string prefix = "samples[" + std::to_string(i) + "]";
    if (e.id.empty()) fail(prefix + ".id", "is empty");
    if (!ids.insert(e.id).second) fail(prefix + ".id", "duplicate id '" + e.id + "'");
    if (e.bundle.empty()) fail(prefix + ".bundle", "is empty");
    if (e.split.empty()) fail(prefix + ".split", "is empty");
    try {
      ValidateLabel(e.label, dims.num_classes, multi_label);
    } catch (const Error& err) {
      fail(prefix + ".label", err.what());
    }
    if (e.descriptions.size() > dims.s) {
      fail(prefix + ".descriptions", "has more than s=" + std::to_string(dims.s) +
                                         " entries");
    }
    if (!check_bundles) continue;
    const auto path = bundle_path(e);
    if (!std::filesystem::exists(path)) {
      fail(prefix + ".bundle", "file not found: " + path.string());
    }
    const BundleDims actual = read_bundle_dims(path);
    const std::pair<const char*, std::pair<std::size_t, std::size_t>> checks[] = {
        {"t", {actual.t, dims.t}},
        {"d_global", {actual.d_global, dims.d_global}},
        {"n", {actual.n, dims.n}},
        {"d_local", {actual.d_local, dims.d_local}},
        {"s", {actual.s, dims.s}},
        {"d_text", {actual.d_text, dims.d_text}},
        {"num_classes", {actual.num_classes, dims.num_classes}}};
    for (const auto& [field, values] : checks) {
      if (values.first != values.second) {
        Fail(ErrorKind::kFormat, "manifest field 'dims." + std::string(field) +
                                    "' is " + std::to_string(values.second) +
                                    " but bundle " + path.string() + " has " +
                                    std::to_string(values.first));
      }
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path,
                              bool check_bundles) {
  DatasetManifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(ReadFileBytes(path));
    if (j.value("format", std::string()) != kManifestFormat) {
      Fail(ErrorKind::kFormat, path.string() + ": field 'format' must be '" +
                                   kManifestFormat + "'");
    }
    if (j.value("version", 0) != kManifestVersion) {
      Fail(ErrorKind::kFormat, path.string() + ": unsupported field 'version'");
    }
    m.name = j.value("name", std::string());
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.multi_label = j.at("multi_label").get<bool>();
    const auto& d = j.at("dims");
    m.dims.t = d.at("t").get<std::size_t>();
    m.dims.d_global = d.at("d_global").get<std::size_t>();
    m.dims.n = d.at("n").get<std::size_t>();
    m.dims.d_local = d.at("d_local").get<std::size_t>();
    m.dims.s = d.at("s").get<std::size_t>();
    m.dims.d_text = d.at("d_text").get<std::size_t>();
    m.dims.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& s : j.at("samples")) {
      SampleEntry e;
      e.id = s.at("id").get<std::string>();
      e.bundle = s.at("bundle").get<std::string>();
      e.label = s.at("label").get<Label>();
      e.split = s.value("split", std::string("train"));
      e.descriptions = s.value("descriptions", std::vector<std::string>{});
      e.image = s.value("image", std::string());
      m.samples.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  m.Validate(check_bundles);
  return m;
}

void save_manifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["name"] = manifest.name;
  j["num_classes"] = manifest.dims.num_classes;
  j["class_names"] = manifest.class_names;
  j["multi_label"] = manifest.multi_label;
  j["dims"] = {{"t", manifest.dims.t},         {"d_global", manifest.dims.d_global},
               {"n", manifest.dims.n},         {"d_local", manifest.dims.d_local},
               {"s", manifest.dims.s},         {"d_text", manifest.dims.d_text}};
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const SampleEntry& e : manifest.samples) {
    nlohmann::ordered_json s;
    s["id"] = e.id;
    s["bundle"] = e.bundle;
    s["label"] = e.label;
    s["split"] = e.split;
    s["descriptions"] = e.descriptions;
    if (!e.image.empty()) s["image"] = e.image;
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  WriteFileBytes(path, j.dump(1) + "\n");
}

std::vector<FeatureBundle> load_split(const DatasetManifest& manifest,
                                      const std::string& split) {
  std::vector<FeatureBundle> out;
  for (const SampleEntry* e : manifest.split(split)) {
    FeatureBundle b = read_bundle(manifest.bundle_path(*e), manifest.dims);
    if (b.sample_id != e->id) {
      Fail(ErrorKind::kData, "bundle " + manifest.bundle_path(*e).string() +
                                 " holds sample '" + b.sample_id + "', manifest says '" +
                                 e->id + "'");
    }
    if (b.label != e->label) {
      Fail(ErrorKind::kData, "bundle '" + e->id + "' label disagrees with manifest");
    }
    ValidateBundle(b, manifest.dims, manifest.multi_label);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace fusedrive

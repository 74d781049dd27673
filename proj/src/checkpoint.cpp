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

#include "fusedrive/checkpoint.hpp"

#include <cstring>
#include <map>
#include <nlohmann/json.hpp>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"
#include "fusedrive/trainer.hpp"

namespace fusedrive {

using nlohmann::json;

bool Checkpoint::has_surrogate() const {
  for (const NamedTensor& p : params) {
    if (p.name.rfind("surrogate.", 0) == 0) return true;
  }
  return false;
}

Checkpoint MakeCheckpoint(const Model& model, const AdamState& adam,
                          const DecisionConfig& decision, const TrainConfig& train,
                          const std::vector<std::string>& class_names,
                          const std::string& phase, std::uint64_t epoch) {
  Checkpoint c;
  c.dims = model.dims;
  c.mode = model.mode;
  c.decision = decision;
  c.class_names = class_names;
  c.phase = phase;
  c.epoch = epoch;
  c.seed = train.seed;
  c.lr = train.lr;
  c.batch_size = train.batch_size;
  c.epochs = train.epochs;
  for (const NamedTensor& p : model.parameters()) {
    c.params.push_back({p.name, p.tensor.clone()});
  }
  c.adam = adam;
  return c;
}

void AssignParameters(const ParameterList& target, const ParameterList& values) {
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& v : values) by_name[v.name] = &v.tensor;
  if (by_name.size() != target.size()) {
    Fail(ErrorKind::kFormat, "parameter set mismatch: expected " +
                                 std::to_string(target.size()) + " tensors, got " +
                                 std::to_string(by_name.size()));
  }
  for (const NamedTensor& t : target) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) {
      Fail(ErrorKind::kFormat, "missing parameter '" + t.name + "'");
    }
    const Tensor& src = *it->second;
    if (src.shape() != t.tensor.shape()) {
      Fail(ErrorKind::kFormat, "parameter '" + t.name + "' has the wrong shape");
    }
    Tensor dst = t.tensor;
    auto out = dst.mutable_data();
    auto in = src.data();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

Model ModelFromCheckpoint(const Checkpoint& checkpoint) {
  Model model = Model::Init(checkpoint.dims, checkpoint.mode, 0);
  if (checkpoint.has_surrogate()) model.EnsureSurrogate(0);
  AssignParameters(model.parameters(), checkpoint.params);
  return model;
}

Model CloneModel(const Model& model) {
  Model clone = Model::Init(model.dims, model.mode, 0);
  if (model.surrogate) clone.EnsureSurrogate(0);
  AssignParameters(clone.parameters(), model.parameters());
  return clone;
}

std::string ParameterHash(const ParameterList& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const NamedTensor& p : params) {
    mix(p.name.data(), p.name.size());
    for (std::size_t d : p.tensor.shape()) {
      const std::uint64_t v = d;
      mix(&v, sizeof v);
    }
    for (double x : p.tensor.data()) mix(&x, sizeof x);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json MetadataJson(const Checkpoint& c) {
  const BundleDims& in = c.dims.input;
  return json{
      {"dims",
       {{"t", in.t},
        {"d_global", in.d_global},
        {"n", in.n},
        {"d_local", in.d_local},
        {"s", in.s},
        {"d_text", in.d_text},
        {"num_classes", in.num_classes},
        {"model_dim", c.dims.model_dim},
        {"hidden", c.dims.hidden},
        {"heads", c.dims.heads},
        {"surrogate_hidden", c.dims.surrogate_hidden}}},
      {"mode", std::string(BranchModeName(c.mode))},
      {"decision",
       {{"num_classes", c.decision.num_classes},
        {"k", c.decision.k},
        {"k_hat", c.decision.k_hat},
        {"lambda", c.decision.lambda},
        {"multi_label", c.decision.multi_label},
        {"threshold", c.decision.threshold}}},
      {"class_names", c.class_names},
      {"phase", c.phase},
      {"epoch", c.epoch},
      {"seed", c.seed},
      {"lr", c.lr},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
  };
}

template <typename T>
T Field(const json& j, const char* key, const char* path) {
  if (!j.contains(key)) {
    Fail(ErrorKind::kFormat, std::string("checkpoint metadata: missing field '") + path +
                                 key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    Fail(ErrorKind::kFormat, std::string("checkpoint metadata: field '") + path + key +
                                 "' has the wrong type");
  }
}

void ApplyMetadata(const json& j, Checkpoint& c) {
  const json& d = j.contains("dims") ? j["dims"] : json::object();
  BundleDims& in = c.dims.input;
  in.t = Field<std::size_t>(d, "t", "dims.");
  in.d_global = Field<std::size_t>(d, "d_global", "dims.");
  in.n = Field<std::size_t>(d, "n", "dims.");
  in.d_local = Field<std::size_t>(d, "d_local", "dims.");
  in.s = Field<std::size_t>(d, "s", "dims.");
  in.d_text = Field<std::size_t>(d, "d_text", "dims.");
  in.num_classes = Field<std::size_t>(d, "num_classes", "dims.");
  c.dims.model_dim = Field<std::size_t>(d, "model_dim", "dims.");
  c.dims.hidden = Field<std::size_t>(d, "hidden", "dims.");
  c.dims.heads = Field<std::size_t>(d, "heads", "dims.");
  c.dims.surrogate_hidden = Field<std::size_t>(d, "surrogate_hidden", "dims.");
  try {
    c.dims.Validate();
    c.mode = ParseBranchMode(Field<std::string>(j, "mode", ""));
  } catch (const Error& e) {
    Fail(ErrorKind::kFormat, std::string("checkpoint metadata: ") + e.what());
  }
  const json& dec = j.contains("decision") ? j["decision"] : json::object();
  c.decision.num_classes = Field<std::size_t>(dec, "num_classes", "decision.");
  c.decision.k = Field<std::size_t>(dec, "k", "decision.");
  c.decision.k_hat = Field<std::size_t>(dec, "k_hat", "decision.");
  c.decision.lambda = Field<double>(dec, "lambda", "decision.");
  c.decision.multi_label = Field<bool>(dec, "multi_label", "decision.");
  c.decision.threshold = Field<double>(dec, "threshold", "decision.");
  try {
    c.decision.Validate(in.n, in.s);
  } catch (const Error& e) {
    Fail(ErrorKind::kFormat, std::string("checkpoint metadata: ") + e.what());
  }
  c.class_names = Field<std::vector<std::string>>(j, "class_names", "");
  c.phase = Field<std::string>(j, "phase", "");
  c.epoch = Field<std::uint64_t>(j, "epoch", "");
  c.seed = Field<std::uint64_t>(j, "seed", "");
  c.lr = Field<double>(j, "lr", "");
  c.batch_size = Field<std::uint64_t>(j, "batch_size", "");
  c.epochs = Field<std::uint64_t>(j, "epochs", "");
}

}  // namespace

std::string EncodeCheckpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(c.version);
  w.str(MetadataJson(c).dump());
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const NamedTensor& p : c.params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) w.u64(d);
    for (double x : p.tensor.data()) w.f64(x);
  }
  w.u64(c.adam.step);
  w.f64(c.adam.config.lr);
  w.f64(c.adam.config.beta1);
  w.f64(c.adam.config.beta2);
  w.f64(c.adam.config.eps);
  w.u32(static_cast<std::uint32_t>(c.adam.m.size()));
  for (std::size_t i = 0; i < c.adam.m.size(); ++i) {
    w.str(i < c.adam.names.size() ? c.adam.names[i] : std::string());
    w.u64(c.adam.m[i].size());
    for (double x : c.adam.m[i]) w.f64(x);
    for (double x : c.adam.v[i]) w.f64(x);
  }
  return w.take();
}

Checkpoint DecodeCheckpoint(const std::string& bytes) {
  ByteReader r(bytes, "checkpoint");
  Checkpoint c;
  if (r.bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    r.fail("magic", "not a checkpoint file");
  }
  c.version = r.u32("version");
  if (c.version != kCheckpointVersion) {
    r.fail("version", "unsupported version " + std::to_string(c.version));
  }
  const std::string meta = r.str("metadata");
  json j;
  try {
    j = json::parse(meta);
  } catch (const json::exception& e) {
    r.fail("metadata", std::string("invalid JSON: ") + e.what());
  }
  ApplyMetadata(j, c);

  const std::uint32_t count = r.u32("param_count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("param_name", 4096);
    const std::uint32_t rank = r.u32("param_rank");
    if (rank == 0 || rank > 4) r.fail("param_rank", "invalid rank for '" + name + "'");
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64("param_dim");
      if (dim == 0 || dim > (1ull << 28)) r.fail("param_dim", "invalid dimension");
      shape.push_back(dim);
      total *= dim;
    }
    if (total > (bytes.size() - r.offset()) / 8) {
      r.fail("param_data", "truncated data for '" + name + "'");
    }
    std::vector<double> values(total);
    for (double& x : values) x = r.f64("param_data");
    c.params.push_back({std::move(name), Tensor::FromData(shape, std::move(values))});
  }

  c.adam.step = r.u64("adam_step");
  c.adam.config.lr = r.f64("adam_lr");
  c.adam.config.beta1 = r.f64("adam_beta1");
  c.adam.config.beta2 = r.f64("adam_beta2");
  c.adam.config.eps = r.f64("adam_eps");
  const std::uint32_t moments = r.u32("moment_count");
  for (std::uint32_t i = 0; i < moments; ++i) {
    c.adam.names.push_back(r.str("moment_name", 4096));
    const std::uint64_t n = r.u64("moment_size");
    if (n > (bytes.size() - r.offset()) / 16) r.fail("moment_data", "truncated moments");
    std::vector<double> m(n), v(n);
    for (double& x : m) x = r.f64("moment_m");
    for (double& x : v) x = r.f64("moment_v");
    c.adam.m.push_back(std::move(m));
    c.adam.v.push_back(std::move(v));
  }
  if (!r.at_end()) r.fail("trailer", "unexpected trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  WriteFileBytes(path, EncodeCheckpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  try {
    return DecodeCheckpoint(bytes);
  } catch (const Error& e) {
    Fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace fusedrive

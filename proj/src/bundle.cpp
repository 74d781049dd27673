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

#include "fusedrive/bundle.hpp"

#include <cmath>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"

namespace fusedrive {
namespace {

void CheckDim(const char* field, std::size_t actual, std::size_t expected) {
  if (actual != expected) {
    Fail(ErrorKind::kShape, std::string("bundle field '") + field + "' is " +
                                std::to_string(actual) + ", expected " +
                                std::to_string(expected));
  }
}

void CheckMatrix(const char* field, const Tensor& x, std::size_t rows,
                 std::size_t cols) {
  if (!x.defined() || x.rank() != 2) {
    Fail(ErrorKind::kShape, std::string("bundle field '") + field +
                                "' must be a rank-2 tensor");
  }
  CheckDim((std::string(field) + ".rows").c_str(), x.rows(), rows);
  CheckDim((std::string(field) + ".cols").c_str(), x.cols(), cols);
  for (double v : x.data()) {
    if (!std::isfinite(v)) {
      Fail(ErrorKind::kData, std::string("bundle field '") + field +
                                 "' contains a non-finite value");
    }
  }
}

void CheckPadding(const char* field, const Tensor& x, const Mask& mask) {
  const std::size_t cols = x.cols();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) {
      Fail(ErrorKind::kData, std::string("bundle field '") + field +
                                 "_mask' has a non-binary entry");
    }
    if (mask[i]) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      if (x.at(i, j) != 0.0) {
        Fail(ErrorKind::kData, std::string("bundle field '") + field + "' row " +
                                   std::to_string(i) +
                                   " is masked but not zero-padded");
      }
    }
  }
}

}  // namespace

BundleDims FeatureBundle::dims() const {
  return BundleDims{global.rows(), global.cols(), local.rows(), local.cols(),
                    text.rows(),   text.cols(),   label.size()};
}

void ValidateLabel(const Label& label, std::size_t num_classes,
                   bool multi_label) {
  if (label.size() != num_classes) {
    Fail(ErrorKind::kData, "label has " + std::to_string(label.size()) +
                               " entries, expected " + std::to_string(num_classes));
  }
  std::size_t ones = 0;
  for (std::uint8_t v : label) {
    if (v > 1) Fail(ErrorKind::kData, "label entries must be 0 or 1");
    ones += v;
  }
  if (multi_label && ones == 0) {
    Fail(ErrorKind::kData, "multi-label sample needs at least one positive class");
  }
  if (!multi_label && ones != 1) {
    Fail(ErrorKind::kData, "single-label sample needs exactly one positive class");
  }
}

void ValidateBundle(const FeatureBundle& bundle, const BundleDims& dims,
                    bool multi_label) {
  CheckMatrix("global", bundle.global, dims.t, dims.d_global);
  CheckMatrix("local", bundle.local, dims.n, dims.d_local);
  CheckMatrix("text", bundle.text, dims.s, dims.d_text);
  CheckDim("local_mask", bundle.local_mask.size(), dims.n);
  CheckDim("text_mask", bundle.text_mask.size(), dims.s);
  CheckDim("descriptions", bundle.descriptions.size(), dims.s);
  CheckDim("label", bundle.label.size(), dims.num_classes);
  CheckPadding("local", bundle.local, bundle.local_mask);
  CheckPadding("text", bundle.text, bundle.text_mask);
  if (CountValid(bundle.local_mask) == 0) {
    Fail(ErrorKind::kData, "bundle '" + bundle.sample_id + "' has no valid local instance");
  }
  if (CountValid(bundle.text_mask) == 0) {
    Fail(ErrorKind::kData, "bundle '" + bundle.sample_id + "' has no valid description");
  }
  for (std::size_t i = 0; i < dims.s; ++i) {
    if (!bundle.text_mask[i] && !bundle.descriptions[i].empty()) {
      Fail(ErrorKind::kData, "bundle '" + bundle.sample_id + "' description " +
                                 std::to_string(i) + " is masked but not empty");
    }
  }
  ValidateLabel(bundle.label, dims.num_classes, multi_label);
}

std::string EncodeBundle(const FeatureBundle& b) {
  const BundleDims d = b.dims();
  ByteWriter w;
  w.bytes(std::string_view(kBundleMagic, 4));
  w.u32(kBundleVersion);
  for (std::size_t v : {d.t, d.d_global, d.n, d.d_local, d.s, d.d_text, d.num_classes})
    w.u32(static_cast<std::uint32_t>(v));
  w.str(b.sample_id);
  for (std::uint8_t m : b.local_mask) w.u8(m);
  for (std::uint8_t m : b.text_mask) w.u8(m);
  for (std::uint8_t y : b.label) w.u8(y);
  for (const Tensor* x : {&b.global, &b.local, &b.text})
    for (double v : x->data()) w.f64(v);
  for (const std::string& s : b.descriptions) w.str(s);
  return w.take();
}

namespace {

BundleDims ReadHeader(ByteReader& r) {
  std::string_view magic = r.bytes(4, "magic");
  if (magic != std::string_view(kBundleMagic, 4)) r.fail("magic", "not an FDB1 bundle");
  const std::uint32_t version = r.u32("version");
  if (version != kBundleVersion) {
    r.fail("version", "unsupported version " + std::to_string(version));
  }
  BundleDims d;
  d.t = r.u32("t");
  d.d_global = r.u32("d_global");
  d.n = r.u32("n");
  d.d_local = r.u32("d_local");
  d.s = r.u32("s");
  d.d_text = r.u32("d_text");
  d.num_classes = r.u32("num_classes");
  return d;
}

Tensor ReadMatrix(ByteReader& r, const char* field, std::size_t rows,
                  std::size_t cols, std::size_t remaining) {
  if (rows == 0 || cols == 0) r.fail(field, "zero dimension");
  const std::size_t count = rows * cols;
  if (count / cols != rows || count > remaining / 8) {
    r.fail(field, "dimensions exceed file size");
  }
  std::vector<double> values(count);
  for (double& v : values) v = r.f64(field);
  return Tensor::FromData({rows, cols}, std::move(values));
}

}  // namespace

FeatureBundle DecodeBundle(const std::string& bytes) {
  ByteReader r(bytes, "bundle");
  const BundleDims d = ReadHeader(r);
  FeatureBundle b;
  b.sample_id = r.str("sample_id", 4096);
  auto read_mask = [&](std::size_t n, const char* field) {
    Mask m(n);
    for (auto& v : m) {
      v = r.u8(field);
      if (v > 1) r.fail(field, "mask byte must be 0 or 1");
    }
    return m;
  };
  if (d.n > bytes.size() || d.s > bytes.size() || d.num_classes > bytes.size()) {
    r.fail("dims", "dimensions exceed file size");
  }
  b.local_mask = read_mask(d.n, "local_mask");
  b.text_mask = read_mask(d.s, "text_mask");
  b.label = read_mask(d.num_classes, "label");
  b.global = ReadMatrix(r, "global", d.t, d.d_global, bytes.size() - r.offset());
  b.local = ReadMatrix(r, "local", d.n, d.d_local, bytes.size() - r.offset());
  b.text = ReadMatrix(r, "text", d.s, d.d_text, bytes.size() - r.offset());
  b.descriptions.resize(d.s);
  for (std::string& s : b.descriptions) s = r.str("descriptions");
  if (!r.at_end()) r.fail("trailer", "unexpected trailing bytes");
  return b;
}

void write_bundle(const std::filesystem::path& path, const FeatureBundle& bundle) {
  WriteFileBytes(path, EncodeBundle(bundle));
}

FeatureBundle read_bundle(const std::filesystem::path& path) {
  try {
    return DecodeBundle(ReadFileBytes(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat) {
      Fail(ErrorKind::kFormat, path.string() + ": " + e.what());
    }
    throw;
  }
}

FeatureBundle read_bundle(const std::filesystem::path& path,
                          const BundleDims& expected) {
  const BundleDims actual = read_bundle_dims(path);
  auto check = [&](const char* field, std::size_t a, std::size_t e) {
    if (a != e) {
      Fail(ErrorKind::kFormat, path.string() + ": field '" + field + "' is " +
                                  std::to_string(a) + " but manifest declares " +
                                  std::to_string(e));
    }
  };
  check("t", actual.t, expected.t);
  check("d_global", actual.d_global, expected.d_global);
  check("n", actual.n, expected.n);
  check("d_local", actual.d_local, expected.d_local);
  check("s", actual.s, expected.s);
  check("d_text", actual.d_text, expected.d_text);
  check("num_classes", actual.num_classes, expected.num_classes);
  return read_bundle(path);
}

BundleDims read_bundle_dims(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  ByteReader r(bytes, path.string());
  return ReadHeader(r);
}

}  // namespace fusedrive

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fusedrive/fusion.hpp"
#include "fusedrive/ops.hpp"
#include "support.hpp"

using namespace fusedrive;
using testing::Random;

namespace {

ModelDims SmallDims() {
  ModelDims d;
  d.input = BundleDims{3, 10, 7, 6, 5, 9, 4};
  d.model_dim = 16;
  d.hidden = 12;
  d.heads = 4;
  d.surrogate_hidden = 12;
  return d;
}

Tensor Row(const Tensor& x, std::size_t r) {
  auto d = x.data();
  const std::size_t c = x.cols();
  return Tensor::FromData({1, c}, std::vector<double>(d.begin() + r * c, d.begin() + (r + 1) * c));
}

bool RowsEqual(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  for (std::size_t c = 0; c < a.cols(); ++c)
    if (a.at(ra, c) != b.at(rb, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("default shapes produce n x 256 and s x 256 branch features") {
  ModelDims dims;  // t=15, 1024-d global, n=80, 256-d local, s=20, 1024-d text
  Rng rng(1);
  FusionParams params = FusionParams::Init(dims, rng);
  CHECK_FALSE(params.local_proj.has_value());
  FeatureBundle b = testing::RandomBundle(dims.input, rng, 37, 11);
  BranchOutputs out = fusion_forward(b, params, dims);
  CHECK(out.global_proj.shape() == Shape{15, 256});
  CHECK(out.z_v.shape() == Shape{80, 256});
  CHECK(out.z_l.shape() == Shape{20, 256});
}

TEST_CASE("local projector appears only when widths differ") {
  Rng rng(2);
  ModelDims dims = SmallDims();
  FusionParams params = FusionParams::Init(dims, rng);
  REQUIRE(params.local_proj.has_value());
  CHECK(params.local_proj->second.out_features() == 16);
  ParameterList list;
  params.collect("fusion", list);
  CHECK(std::any_of(list.begin(), list.end(),
                    [](const NamedTensor& t) { return t.name == "fusion.local_proj.0.weight"; }));
  for (const NamedTensor& t : list)
    for (double v : t.tensor.data()) CHECK(std::isfinite(v));
}

TEST_CASE("projector output is nonnegative with the configured width") {
  Rng rng(3);
  Projector p = Projector::Init(10, 12, 16, rng);
  Tensor y = p.forward(Random({3, 10}, rng, 3.0), nullptr);
  CHECK(y.shape() == Shape{3, 16});
  for (double v : y.data()) CHECK(v >= 0.0);
}

TEST_CASE("a lone valid instance reduces to attending over itself") {
  Rng rng(4);
  ModelDims dims = SmallDims();
  FusionParams params = FusionParams::Init(dims, rng);
  FeatureBundle b = testing::RandomBundle(dims.input, rng, 1, 2);
  BranchOutputs out = fusion_forward(b, params, dims);

  Tensor x = params.local_proj->forward(Row(b.local, 0), nullptr);
  Tensor single = self_attention(x, {}, params.self_attn);
  Tensor expected = cross_attention(single, out.global_proj, {}, params.vision_cross);
  for (std::size_t c = 0; c < 16; ++c) CHECK(out.z_v.at(0, c) == doctest::Approx(expected[c]).epsilon(1e-12));
}

TEST_CASE("permuting valid local rows permutes vision features exactly") {
  Rng rng(5);
  ModelDims dims = SmallDims();
  FusionParams params = FusionParams::Init(dims, rng);
  for (int trial = 0; trial < 5; ++trial) {
    FeatureBundle b = testing::RandomBundle(dims.input, rng, 5, 3);
    BranchOutputs base = fusion_forward(b, params, dims);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureBundle pb = b;
    std::vector<double> local(b.local.data().begin(), b.local.data().end());
    const std::size_t w = dims.input.d_local;
    for (std::size_t i = 0; i < 5; ++i)
      std::copy_n(b.local.data().begin() + perm[i] * w, w, local.begin() + i * w);
    pb.local = Tensor::FromData(b.local.shape(), local);
    BranchOutputs permuted = fusion_forward(pb, params, dims);
    for (std::size_t i = 0; i < 5; ++i) CHECK(RowsEqual(permuted.z_v, i, base.z_v, perm[i]));
    CHECK(testing::BitEqual(permuted.z_l, base.z_l));
  }
}

TEST_CASE("padded row content never changes valid outputs") {
  Rng rng(6);
  ModelDims dims = SmallDims();
  FusionParams params = FusionParams::Init(dims, rng);
  FeatureBundle b = testing::RandomBundle(dims.input, rng, 4, 2);
  BranchOutputs base = fusion_forward(b, params, dims);
  FeatureBundle noisy = b;
  std::vector<double> local(b.local.data().begin(), b.local.data().end());
  for (std::size_t i = 4 * dims.input.d_local; i < local.size(); ++i) local[i] = 50.0 * std::sin(i);
  noisy.local = Tensor::FromData(b.local.shape(), local);
  std::vector<double> text(b.text.data().begin(), b.text.data().end());
  for (std::size_t i = 2 * dims.input.d_text; i < text.size(); ++i) text[i] = -3.0 + i % 5;
  noisy.text = Tensor::FromData(b.text.shape(), text);
  BranchOutputs out = fusion_forward(noisy, params, dims);
  for (std::size_t r = 0; r < 4; ++r) CHECK(RowsEqual(out.z_v, r, base.z_v, r));
  for (std::size_t r = 0; r < 2; ++r) CHECK(RowsEqual(out.z_l, r, base.z_l, r));
}

TEST_CASE("ablation toggles disable branches") {
  Rng rng(7);
  ModelDims dims = SmallDims();
  FusionParams params = FusionParams::Init(dims, rng);
  FeatureBundle b = testing::RandomBundle(dims.input, rng, 6, 4);
  BranchOutputs full = fusion_forward(b, params, dims);

  BranchOutputs vision = ablation_forward(b, params, dims, true, false);
  CHECK(testing::BitEqual(vision.z_v, full.z_v));
  CHECK_FALSE(vision.z_l.defined());

  BranchOutputs text = ablation_forward(b, params, dims, false, true);
  CHECK(testing::BitEqual(text.z_l, full.z_l));
  CHECK_FALSE(text.z_v.defined());

  BranchOutputs global = ablation_forward(b, params, dims, false, false);
  CHECK_FALSE(global.z_v.defined());
  CHECK_FALSE(global.z_l.defined());
  REQUIRE(global.global_pooled.shape() == Shape{1, 16});
  for (std::size_t c = 0; c < 16; ++c) {
    double mean = 0.0;
    for (std::size_t f = 0; f < 3; ++f) mean += full.global_proj.at(f, c) / 3.0;
    CHECK(global.global_pooled[c] == doctest::Approx(mean).epsilon(1e-14));
  }
}

TEST_CASE("dimension errors") {
  Rng rng(8);
  ModelDims dims = SmallDims();
  FusionParams params = FusionParams::Init(dims, rng);
  BundleDims other = dims.input;
  other.d_text = 8;
  FeatureBundle b = testing::RandomBundle(other, rng, 2, 2);
  CHECK(testing::KindOf([&] { fusion_forward(b, params, dims); }) == ErrorKind::kShape);

  ModelDims bad = dims;
  bad.heads = 5;
  CHECK(testing::KindOf([&] { bad.Validate(); }) == ErrorKind::kConfig);
  bad = dims;
  bad.input.n = 0;
  CHECK(testing::KindOf([&] { bad.Validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("fusion gradients match central differences") {
  Rng rng(9);
  ModelDims dims = SmallDims();
  dims.input = BundleDims{2, 3, 3, 4, 2, 3, 2};
  dims.model_dim = 4;
  dims.hidden = 5;
  dims.heads = 2;
  FusionParams params = FusionParams::Init(dims, rng);
  FeatureBundle b = testing::RandomBundle(dims.input, rng, 2, 2);
  ParameterList list;
  params.collect("f", list);
  std::vector<Tensor> inputs;
  for (NamedTensor& t : list) inputs.push_back(t.tensor);
  Tensor wv = Random({12, 1}, rng);
  Tensor wl = Random({8, 1}, rng);
  const double err = testing::FiniteDifferenceError(
      [&](Tape* t) {
        BranchOutputs o = fusion_forward(b, params, dims, t);
        return add(testing::Project(o.z_v, wv, t), testing::Project(o.z_l, wl, t), t);
      },
      inputs);
  CHECK(err < 1e-4);
}

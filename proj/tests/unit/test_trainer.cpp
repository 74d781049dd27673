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

#include <cmath>
#include <sstream>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/checkpoint.hpp"
#include "fusedrive/synthetic.hpp"
#include "fusedrive/trainer.hpp"
#include "support.hpp"

using namespace fusedrive;
using testing::Random;

namespace {

struct TinySet {
  SyntheticSpec spec;
  std::vector<FeatureBundle> train;
  std::vector<FeatureBundle> eval;
  PseudoCamTable oracle;
  MainPhaseInputs inputs;
};

TinySet MakeTinySet(std::size_t n_train, std::uint64_t seed) {
  TinySet s;
  s.spec.n_train = n_train;
  s.spec.n_eval = 60;
  s.spec.dims = BundleDims{2, 8, 6, 8, 4, 8, 3};
  s.spec.class_names = {"go", "halt", "turn"};
  s.spec.class_prior = {0.5, 0.4, 0.3};
  s.spec.noise = 0.5;
  for (SyntheticSample& x : generate_samples(s.spec, seed)) {
    if (x.split == "train") {
      s.oracle.emplace(x.bundle.sample_id, x.oracle_pseudo);
      s.train.push_back(std::move(x.bundle));
    } else {
      s.eval.push_back(std::move(x.bundle));
    }
  }
  s.inputs.train = &s.train;
  s.inputs.dims.input = s.spec.dims;
  s.inputs.dims.model_dim = 8;
  s.inputs.dims.hidden = 16;
  s.inputs.dims.heads = 2;
  s.inputs.dims.surrogate_hidden = 16;
  s.inputs.decision.num_classes = 3;
  s.inputs.decision.k = 2;
  s.inputs.decision.k_hat = 1;
  s.inputs.class_names = s.spec.class_names;
  return s;
}

TrainConfig FastConfig(std::size_t epochs) {
  TrainConfig c;
  c.lr = 3e-3;
  c.batch_size = 16;
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

ParameterList Scalar(Tensor& theta) { return {{"theta", theta}}; }

}  // namespace

TEST_CASE("train config defaults and validation") {
  TrainConfig c;
  CHECK(c.lr == 1e-4);
  CHECK(c.batch_size == 128);
  CHECK(c.epochs == 100);
  CHECK_NOTHROW(c.Validate());
  c.batch_size = 0;
  CHECK(testing::KindOf([&] { c.Validate(); }) == ErrorKind::kConfig);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK(testing::KindOf([&] { c.Validate(); }) == ErrorKind::kConfig);
}

TEST_CASE("adam: zero gradient, first step and shape errors") {
  Tensor theta = Tensor::FromData({3}, {1.0, -2.0, 0.5}, true);
  ParameterList params = Scalar(theta);
  AdamState state = AdamState::For(params, AdamConfig{});
  adam_step(params, {{0.0, 0.0, 0.0}}, state);
  CHECK(theta[0] == 1.0);
  CHECK(theta[1] == -2.0);
  CHECK(theta[2] == 0.5);

  AdamState fresh = AdamState::For(params, AdamConfig{0.01});
  adam_step(params, {{3.0, -0.2, 1e-3}}, fresh);
  CHECK(theta[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(theta[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
  CHECK(std::abs((0.5 - theta[2]) - 0.01) < 1e-7);
  for (double v : fresh.v[0]) CHECK(v >= 0.0);
  CHECK(fresh.step == 1);

  CHECK(testing::KindOf([&] { adam_step(params, {{1.0}}, fresh); }) == ErrorKind::kUsage);
  CHECK(testing::KindOf([&] { adam_step(params, {}, fresh); }) == ErrorKind::kUsage);
}

TEST_CASE("adam matches a scalar reference and minimizes a parabola") {
  Tensor theta = Tensor::FromData({1}, {1.0}, true);
  ParameterList params = Scalar(theta);
  AdamState state = AdamState::For(params, AdamConfig{0.1});
  double ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * theta[0];
    adam_step(params, {{g}}, state);
    const double rg = 2.0 * ref;
    m = 0.9 * m + 0.1 * rg;
    v = 0.999 * v + 0.001 * rg * rg;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(std::abs(theta[0] - ref) < 1e-12);
  }
  CHECK(std::abs(theta[0]) < 0.05);
}

TEST_CASE("adam reads gradient buffers") {
  Tensor a = Tensor::FromData({2}, {1.0, 1.0}, true);
  Tensor b = Tensor::FromData({1}, {4.0}, true);
  ParameterList params = {{"a", a}, {"b", b}};
  AdamState state = AdamState::For(params, AdamConfig{0.5});
  a.grad_buffer()[0] = 1.0;
  adam_step(params, state);
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == 1.0);
  CHECK(b[0] == 4.0);
  ZeroGrads(params);
  for (double g : a.grad()) CHECK(g == 0.0);
}

TEST_CASE("main training reduces the loss and is deterministic") {
  TinySet set = MakeTinySet(160, 3);
  TrainConfig config = FastConfig(5);
  std::ostringstream log;
  config.log = &log;
  Rng r1(config.seed);
  TrainResult a = train_main(set.inputs, config, r1);
  REQUIRE(a.history.size() == 5);
  for (std::size_t e = 1; e < a.history.size(); ++e) CHECK(a.history[e].loss < a.history[e - 1].loss);
  CHECK(log.str().find("phase=main epoch=5 loss=") != std::string::npos);

  config.log = nullptr;
  Rng r2(config.seed);
  TrainResult b = train_main(set.inputs, config, r2);
  CHECK(EncodeCheckpoint(a.final_checkpoint) == EncodeCheckpoint(b.final_checkpoint));
  CHECK(ParameterHash(a.model.parameters()) == ParameterHash(b.model.parameters()));

  Rng r3(config.seed + 1);
  TrainResult c = train_main(set.inputs, config, r3);
  CHECK(ParameterHash(a.model.parameters()) != ParameterHash(c.model.parameters()));
}

TEST_CASE("best checkpoint follows validation mF1 and files are written") {
  TinySet set = MakeTinySet(96, 4);
  set.inputs.val = &set.eval;
  testing::TempDir dir;
  TrainConfig config = FastConfig(3);
  config.out_dir = dir.path();
  std::vector<EpochLog> seen;
  config.on_epoch = [&](const EpochLog& l) { seen.push_back(l); };
  Rng rng(config.seed);
  TrainResult r = train_main(set.inputs, config, rng);
  REQUIRE(seen.size() == 3);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const EpochLog& l : seen) {
    REQUIRE(l.val_mf1.has_value());
    if (*l.val_mf1 > best) {
      best = *l.val_mf1;
      best_epoch = l.epoch;
    }
  }
  CHECK(r.best_checkpoint.epoch == best_epoch);
  CHECK(r.final_checkpoint.epoch == 3);
  CHECK(std::filesystem::exists(dir / "final.fdck"));
  CHECK(std::filesystem::exists(dir / "best.fdck"));
  CHECK(std::filesystem::exists(dir / "train_log.txt"));

  std::vector<FeatureBundle> empty;
  set.inputs.train = &empty;
  CHECK(testing::KindOf([&] { train_main(set.inputs, config, rng); }) == ErrorKind::kData);
}

TEST_CASE("checkpoint round trip is bit exact and evaluation matches") {
  TinySet set = MakeTinySet(48, 5);
  TrainConfig config = FastConfig(1);
  Rng rng(config.seed);
  TrainResult r = train_main(set.inputs, config, rng);
  testing::TempDir dir;
  save_checkpoint(dir / "m.fdck", r.final_checkpoint);
  Checkpoint loaded = load_checkpoint(dir / "m.fdck");
  CHECK(EncodeCheckpoint(loaded) == EncodeCheckpoint(r.final_checkpoint));
  CHECK(loaded.decision.k == 2);
  CHECK(loaded.class_names == set.spec.class_names);
  CHECK(loaded.adam.step == r.final_checkpoint.adam.step);

  Model restored = ModelFromCheckpoint(loaded);
  CHECK(ParameterHash(restored.parameters()) == ParameterHash(r.model.parameters()));
  EvalResult e1 = evaluate(r.model, set.eval, set.inputs.decision, false);
  EvalResult e2 = evaluate(restored, set.eval, set.inputs.decision, false);
  REQUIRE(e1.outputs.size() == e2.outputs.size());
  for (std::size_t i = 0; i < e1.outputs.size(); ++i) CHECK(e1.outputs[i].logits == e2.outputs[i].logits);
  CHECK(e1.counts == e2.counts);
}

TEST_CASE("corrupted checkpoints are format errors") {
  TinySet set = MakeTinySet(16, 6);
  Model m = Model::Init(set.inputs.dims, BranchMode::kFull, 1);
  const Checkpoint ck = MakeCheckpoint(m, AdamState::For(m.main_parameters(), {}), set.inputs.decision,
                                       TrainConfig{}, set.spec.class_names, "main", 0);
  const std::string bytes = EncodeCheckpoint(ck);
  for (std::size_t cut : {0ul, 3ul, 8ul, 40ul, bytes.size() / 2, bytes.size() - 1})
    CHECK(testing::KindOf([&] { DecodeCheckpoint(bytes.substr(0, cut)); }) == ErrorKind::kFormat);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(testing::KindOf([&] { DecodeCheckpoint(bad_magic); }) == ErrorKind::kFormat);
  CHECK(testing::KindOf([&] { DecodeCheckpoint(bytes + "x"); }) == ErrorKind::kFormat);
  Rng rng(9);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::string flipped = bytes;
    flipped[pos(rng)] ^= static_cast<char>(1 + trial % 255);
    try {
      ModelFromCheckpoint(DecodeCheckpoint(flipped));
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFormat);
    }
  }
  testing::TempDir dir;
  CHECK(testing::KindOf([&] { load_checkpoint(dir / "missing.fdck"); }) != ErrorKind::kData);
}

TEST_CASE("refinement phase updates only the surrogate") {
  TinySet set = MakeTinySet(96, 7);
  TrainConfig config = FastConfig(2);
  Rng rng(config.seed);
  TrainResult main = train_main(set.inputs, config, rng);
  const std::string before = ParameterHash(main.model.main_parameters());

  TrainConfig rconfig = FastConfig(4);
  Rng rrng(11);
  TrainResult refined = train_refinement(main.final_checkpoint, set.train, set.oracle, rconfig, rrng);
  CHECK(ParameterHash(refined.model.main_parameters()) == before);
  REQUIRE(refined.model.surrogate.has_value());
  CHECK(refined.final_checkpoint.phase == "refinement");
  CHECK(refined.final_checkpoint.has_surrogate());
  REQUIRE(refined.history.size() == 4);
  CHECK(refined.history.back().loss < refined.history.front().loss);

  PseudoCamTable partial = set.oracle;
  partial.erase(partial.begin());
  CHECK(testing::KindOf([&] { train_refinement(main.final_checkpoint, set.train, partial, rconfig, rrng); }) ==
        ErrorKind::kUsage);
}

TEST_CASE("model clone and parameter hash") {
  TinySet set = MakeTinySet(8, 8);
  Model m = Model::Init(set.inputs.dims, BranchMode::kFull, 2);
  Model c = CloneModel(m);
  CHECK(ParameterHash(c.parameters()) == ParameterHash(m.parameters()));
  ParameterList p = c.parameters();
  p.front().tensor.mutable_data()[0] += 1e-12;
  CHECK(ParameterHash(c.parameters()) != ParameterHash(m.parameters()));
  CHECK(ParameterHash(m.parameters()).size() == 16);
}

TEST_CASE("epoch log format") {
  EpochLog l{"main", 3, 0.4123451, 0.81234, std::nullopt, 12.34};
  CHECK(FormatEpochLog(l) == "phase=main epoch=3 loss=0.412345 train_mf1=0.8123 elapsed_s=12.3");
}

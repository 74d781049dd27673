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

#include "fusedrive/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"

namespace fusedrive {

std::string FormatEpochLog(const EpochLog& log) {
  char buf[256];
  int n = std::snprintf(buf, sizeof(buf), "phase=%s epoch=%zu loss=%.6f",
                        log.phase.c_str(), log.epoch, log.loss);
  std::string out(buf, static_cast<std::size_t>(n));
  if (log.train_mf1) {
    n = std::snprintf(buf, sizeof(buf), " train_mf1=%.4f", *log.train_mf1);
    out.append(buf, static_cast<std::size_t>(n));
  }
  if (log.val_mf1) {
    n = std::snprintf(buf, sizeof(buf), " val_mf1=%.4f", *log.val_mf1);
    out.append(buf, static_cast<std::size_t>(n));
  }
  n = std::snprintf(buf, sizeof(buf), " elapsed_s=%.1f", log.elapsed_s);
  out.append(buf, static_cast<std::size_t>(n));
  return out;
}

void TrainConfig::Validate() const {
  if (!(lr > 0.0)) Fail(ErrorKind::kConfig, "lr must be > 0");
  if (batch_size < 1) Fail(ErrorKind::kConfig, "batch size must be >= 1");
  if (epochs < 1) Fail(ErrorKind::kConfig, "epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    Fail(ErrorKind::kConfig, "Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) Fail(ErrorKind::kConfig, "Adam eps must be > 0");
}

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

class EpochReporter {
 public:
  explicit EpochReporter(const TrainConfig& config) : config_(config) {
    if (config.out_dir) {
      std::filesystem::create_directories(*config.out_dir);
      file_.open(*config.out_dir / "train_log.txt", std::ios::app);
    }
  }

  void report(const EpochLog& log) {
    const std::string line = FormatEpochLog(log);
    if (config_.log) *config_.log << line << std::endl;
    if (file_) file_ << line << "\n" << std::flush;
    if (config_.on_epoch) config_.on_epoch(log);
  }

 private:
  const TrainConfig& config_;
  std::ofstream file_;
};

std::vector<std::size_t> Shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

EvalResult evaluate(const Model& model, const std::vector<FeatureBundle>& samples,
                    const DecisionConfig& config, bool refined) {
  EvalResult r{ConfusionCounts(config.num_classes), {}, {}};
  std::optional<FrozenClassifier> frozen;
  if (refined && model.surrogate) frozen.emplace(model.text_head);
  for (const FeatureBundle& b : samples) {
    DecisionOutput out = refined
                             ? predict_refined(b, model, config, frozen ? &*frozen : nullptr)
                             : predict(b, model, config);
    accumulate(out.decisions, b.label, r.counts);
    r.outputs.push_back(std::move(out));
  }
  r.report = f1_report(r.counts);
  return r;
}

TrainResult train_main(const MainPhaseInputs& inputs, const TrainConfig& config,
                       Rng& rng) {
  config.Validate();
  if (inputs.train == nullptr || inputs.train->empty()) {
    Fail(ErrorKind::kData, "train_main: training set is empty");
  }
  const auto& train = *inputs.train;
  inputs.dims.Validate();
  inputs.decision.Validate(inputs.dims.input.n, inputs.dims.input.s);
  for (const FeatureBundle& b : train) {
    ValidateBundle(b, inputs.dims.input, inputs.multi_label);
  }

  Model model = Model::Init(inputs.dims, inputs.mode, rng());
  const ParameterList params = model.main_parameters();
  AdamState adam = AdamState::For(params, config.adam());
  EpochReporter reporter(config);
  const bool has_val = inputs.val != nullptr && !inputs.val->empty();

  TrainResult result{model, {}, {}, {}};
  double best_val = -1.0;
  const auto start = Clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<std::size_t> order = Shuffled(train.size(), rng);
    double loss_sum = 0.0;
    ConfusionCounts train_counts(inputs.decision.num_classes);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const FeatureBundle& b = train[order[i]];
        Tape tape;
        ForwardOptions options;
        options.training = true;
        options.tape = &tape;
        ForwardResult fwd = model_forward(b, model, inputs.decision, rng, options);
        Tensor loss = mil_loss(fwd.logits, b.label, inputs.multi_label, &tape);
        loss_sum += loss.item();
        Tensor scaled = scale(loss, inv_batch, &tape);
        tape.backward(scaled);
        DecisionOutput out;
        decide(fwd.logits, inputs.decision, out);
        accumulate(out.decisions, b.label, train_counts);
      }
      adam_step(params, adam);
      ZeroGrads(params);
    }

    EpochLog log;
    log.phase = "main";
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(train.size());
    log.train_mf1 = f1_report(train_counts).mf1;
    if (has_val) {
      log.val_mf1 = evaluate(model, *inputs.val, inputs.decision, false).report.mf1;
    }
    log.elapsed_s = Seconds(start);
    result.history.push_back(log);
    reporter.report(log);

    if (has_val && *log.val_mf1 > best_val) {
      best_val = *log.val_mf1;
      result.best_checkpoint = MakeCheckpoint(model, adam, inputs.decision, config,
                                              inputs.class_names, "main", epoch);
    }
  }
  ParameterList grads_free = model.parameters();
  for (NamedTensor& p : grads_free) p.tensor.drop_grad();
  result.model = model;
  result.final_checkpoint = MakeCheckpoint(model, adam, inputs.decision, config,
                                           inputs.class_names, "main", config.epochs);
  if (!has_val) result.best_checkpoint = result.final_checkpoint;
  if (config.out_dir) {
    save_checkpoint(*config.out_dir / "final.fdck", result.final_checkpoint);
    save_checkpoint(*config.out_dir / "best.fdck", result.best_checkpoint);
  }
  return result;
}

TrainResult train_refinement(const Checkpoint& checkpoint,
                             const std::vector<FeatureBundle>& train,
                             const PseudoCamTable& pseudo_cams,
                             const TrainConfig& config, Rng& rng) {
  config.Validate();
  if (train.empty()) Fail(ErrorKind::kData, "train_refinement: training set is empty");
  std::vector<const PseudoCam*> targets;
  for (const FeatureBundle& b : train) {
    auto it = pseudo_cams.find(b.sample_id);
    if (it == pseudo_cams.end()) {
      Fail(ErrorKind::kUsage, "train_refinement: no pseudo CAM for training sample '" +
                                  b.sample_id + "'");
    }
    targets.push_back(&it->second);
  }

  Model model = ModelFromCheckpoint(checkpoint);
  model.surrogate.reset();
  model.EnsureSurrogate(rng());
  const FrozenClassifier frozen(model.text_head);
  const ParameterList params = model.surrogate_parameters();
  AdamState adam = AdamState::For(params, config.adam());
  EpochReporter reporter(config);

  TrainResult result{model, {}, {}, {}};
  const auto start = Clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::vector<std::size_t> order = Shuffled(train.size(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const FeatureBundle& b = train[order[i]];
        Tape tape;
        Cam prime = surrogate_forward(b.text, b.text_mask, *model.surrogate, frozen, &tape);
        Tensor loss = refinement_loss(prime, *targets[order[i]], &tape);
        loss_sum += loss.item();
        Tensor scaled = scale(loss, inv_batch, &tape);
        tape.backward(scaled);
      }
      adam_step(params, adam);
      ZeroGrads(params);
    }
    EpochLog log;
    log.phase = "refinement";
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(train.size());
    log.elapsed_s = Seconds(start);
    result.history.push_back(log);
    reporter.report(log);
  }
  for (NamedTensor& p : model.surrogate_parameters()) p.tensor.drop_grad();
  result.model = model;
  result.final_checkpoint = MakeCheckpoint(model, adam, checkpoint.decision, config,
                                           checkpoint.class_names, "refinement",
                                           config.epochs);
  result.best_checkpoint = result.final_checkpoint;
  if (config.out_dir) {
    save_checkpoint(*config.out_dir / "refined.fdck", result.final_checkpoint);
  }
  return result;
}

}  // namespace fusedrive

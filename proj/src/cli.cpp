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

#include "fusedrive/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <thread>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/checkpoint.hpp"
#include "fusedrive/gradcheck.hpp"
#include "fusedrive/manifest.hpp"
#include "fusedrive/metrics.hpp"
#include "fusedrive/object_bag.hpp"
#include "fusedrive/synthetic.hpp"
#include "fusedrive/trainer.hpp"
#include "fusedrive/vlm.hpp"

namespace fusedrive {

namespace fs = std::filesystem;
using nlohmann::json;

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
      return kExitUsage;
    case ErrorKind::kData:
    case ErrorKind::kShape:
      return kExitData;
    case ErrorKind::kFormat:
      return kExitFormat;
    case ErrorKind::kTransport:
      return kExitTransport;
    case ErrorKind::kParse:
      return kExitParse;
  }
  return kExitFailure;
}

namespace {

struct Io {
  std::ostream& out;
  std::ostream& err;
};

void RequireFile(const std::string& path, const std::string& what) {
  if (path.empty()) Fail(ErrorKind::kUsage, what + " is required");
  if (!fs::is_regular_file(path)) {
    Fail(ErrorKind::kUsage, what + " '" + path + "' does not exist");
  }
}

void RequireOut(const std::string& out) {
  if (out.empty()) Fail(ErrorKind::kUsage, "--out is required");
}

std::string Fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---- shared flag groups ----------------------------------------------------

struct DecisionFlags {
  std::size_t k = 16;
  std::size_t k_hat = 1;
  double lambda = 0.8;
  double threshold = 0.5;
  CLI::Option* k_opt = nullptr;
  CLI::Option* khat_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* threshold_opt = nullptr;

  void add(CLI::App* app) {
    k_opt = app->add_option("--k", k, "visual instances pooled per class");
    khat_opt = app->add_option("--khat", k_hat, "descriptions pooled per class");
    lambda_opt = app->add_option("--lambda", lambda, "vision weight of the fused score");
    threshold_opt = app->add_option("--threshold", threshold, "multi-label decision threshold");
  }

  // Fresh config from the flags, for training.
  DecisionConfig make(const DatasetManifest& m) const {
    DecisionConfig c;
    c.num_classes = m.num_classes();
    c.multi_label = m.multi_label;
    c.k = k;
    c.k_hat = k_hat;
    c.lambda = lambda;
    c.threshold = threshold;
    c.Validate(m.dims.n, m.dims.s);
    return c;
  }

  // Stored config with explicit flags layered on top.
  DecisionConfig override(DecisionConfig c, const BundleDims& dims) const {
    if (k_opt->count()) c.k = k;
    if (khat_opt->count()) c.k_hat = k_hat;
    if (lambda_opt->count()) c.lambda = lambda;
    if (threshold_opt->count()) c.threshold = threshold;
    c.Validate(dims.n, dims.s);
    return c;
  }
};

struct TrainFlags {
  double lr = 1e-4;
  std::size_t batch = 128;
  std::size_t epochs = 100;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch", batch, "mini-batch size");
    app->add_option("--epochs", epochs, "training epochs");
  }

  TrainConfig make(std::uint64_t seed, Io io) const {
    TrainConfig c;
    c.lr = lr;
    c.batch_size = batch;
    c.epochs = epochs;
    c.seed = seed;
    c.log = &io.out;
    c.Validate();
    return c;
  }
};

struct ModelFlags {
  std::size_t model_dim = 256;
  std::size_t hidden = 512;
  std::size_t heads = 8;
  std::size_t surrogate_hidden = 512;

  void add(CLI::App* app) {
    app->add_option("--model-dim", model_dim, "shared embedding width D");
    app->add_option("--hidden", hidden, "projector hidden width");
    app->add_option("--heads", heads, "attention heads");
    app->add_option("--surrogate-hidden", surrogate_hidden, "surrogate hidden width");
  }

  ModelDims make(const BundleDims& input) const {
    ModelDims d{input, model_dim, hidden, heads, surrogate_hidden};
    d.Validate();
    return d;
  }
};

struct BranchFlags {
  bool no_vision = false;
  bool no_text = false;
  bool global_only = false;

  void add(CLI::App* app) {
    app->add_flag("--no-vision", no_vision, "drop the vision branch");
    app->add_flag("--no-text", no_text, "drop the text branch");
    app->add_flag("--global-only", global_only, "baseline on pooled global frames only");
  }

  BranchMode mode() const {
    if (global_only && (no_vision || no_text)) {
      Fail(ErrorKind::kUsage, "--global-only cannot be combined with --no-vision/--no-text");
    }
    if (no_vision && no_text) {
      Fail(ErrorKind::kUsage, "--no-vision and --no-text together leave no branch");
    }
    if (global_only) return BranchMode::kGlobalOnly;
    if (no_vision) return BranchMode::kTextOnly;
    if (no_text) return BranchMode::kVisionOnly;
    return BranchMode::kFull;
  }
};

struct EndpointFlags {
  std::string endpoint;
  std::string model = VlmEndpointConfig{}.model;
  std::string mock_dir;
  std::string token_env = kDefaultTokenEnv;
  double timeout = 60.0;
  std::size_t retries = 3;
  double backoff = 1.0;
  std::size_t jobs = 1;

  void add(CLI::App* app) {
    app->add_option("--endpoint", endpoint, "chat-completion base URL");
    app->add_option("--model", model, "model identifier sent to the endpoint");
    app->add_option("--mock-dir", mock_dir, "offline canned answers instead of an endpoint");
    app->add_option("--token-env", token_env, "environment variable holding the API token")
        ->capture_default_str();
    app->add_option("--timeout", timeout, "per-request timeout in seconds");
    app->add_option("--retries", retries, "attempts per request");
    app->add_option("--backoff", backoff, "initial retry backoff in seconds");
    app->add_option("--jobs", jobs, "samples processed concurrently");
  }

  VlmEndpointConfig make() const {
    VlmEndpointConfig c;
    c.base_url = endpoint;
    c.model = model;
    c.token_env = token_env;
    c.timeout_s = timeout;
    c.retry.max_attempts = retries;
    c.retry.backoff_s = backoff;
    if (!mock_dir.empty()) c.mock_dir = mock_dir;
    if (jobs < 1) Fail(ErrorKind::kConfig, "--jobs must be >= 1");
    c.Validate();
    return c;
  }
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first error wins.
void ParallelFor(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first;
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      {
        std::lock_guard<std::mutex> lock(mu);
        if (first) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(jobs, n); ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::vector<FeatureBundle> LoadNonEmptySplit(const DatasetManifest& m, const std::string& split) {
  std::vector<FeatureBundle> samples = load_split(m, split);
  if (samples.empty()) {
    Fail(ErrorKind::kData, "split '" + split + "' of the manifest has no samples");
  }
  return samples;
}

void PrintReportRows(Io io, const std::string& prefix, const F1Report& report,
                     const std::vector<std::string>& class_names) {
  io.out << prefix << " mf1=" << Fixed(report.mf1) << " f1_all=" << Fixed(report.f1_all);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    io.out << " f1_" << class_names[c] << "=" << Fixed(report.per_class[c]);
  }
  io.out << "\n";
}

// ---- subcommands -------------------------------------------------------------

struct SynthCmd {
  std::string out;
  std::uint64_t seed = 0;
  SyntheticSpec spec;
  bool single_label = false;
  CLI::Option* prior_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--n-train", spec.n_train, "training samples");
    app->add_option("--n-eval", spec.n_eval, "evaluation samples");
    app->add_option("--t", spec.dims.t, "global frames per sample");
    app->add_option("--d-global", spec.dims.d_global, "global feature width");
    app->add_option("--n", spec.dims.n, "local instances per sample");
    app->add_option("--d-local", spec.dims.d_local, "local feature width");
    app->add_option("--s", spec.dims.s, "descriptions per sample");
    app->add_option("--d-text", spec.dims.d_text, "text feature width");
    app->add_option("--classes", spec.class_names, "class names");
    prior_opt = app->add_option("--prior", spec.class_prior, "per-class positive rate");
    app->add_flag("--single-label", single_label, "exactly one positive class per sample");
    app->add_option("--planted", spec.planted_per_class, "planted instances per positive class");
    app->add_option("--noise", spec.noise, "noise standard deviation");
    app->add_option("--hallucination-rate", spec.hallucination_rate,
                    "chance a positive class gets a signal-free description");
    app->add_option("--vision-miss-rate", spec.vision_miss_rate,
                    "chance a positive class plants no visual instance");
    app->add_option("--global-signal", spec.global_signal, "class signal in global frames");
  }

  int run(Io io) {
    RequireOut(out);
    spec.multi_label = !single_label;
    spec.dims.num_classes = spec.class_names.size();
    if (!prior_opt->count() && spec.class_prior.size() != spec.class_names.size()) {
      spec.class_prior.assign(spec.class_names.size(), 0.35);
    }
    spec.Validate();
    const DatasetManifest m = generate_synthetic(spec, seed, out);
    io.out << "wrote " << m.samples.size() << " samples to " << out << "\n";
    return kExitOk;
  }
};

struct BagCmd {
  std::string manifest;
  std::string lexicon;
  std::string supercategories;
  std::string split;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--lexicon", lexicon, "category lexicon file");
    app->add_option("--supercategories", supercategories, "supercategory grouping file");
    app->add_option("--split", split, "restrict to one split");
    app->add_option("--out", out, "JSON output file");
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    if (!lexicon.empty()) RequireFile(lexicon, "--lexicon");
    if (!supercategories.empty()) RequireFile(supercategories, "--supercategories");
    const Lexicon lex = lexicon.empty() ? Lexicon::Default() : Lexicon::Load(lexicon);
    const SupercategoryMap groups = supercategories.empty()
                                        ? SupercategoryMap::Default()
                                        : SupercategoryMap::Load(supercategories);
    const DatasetManifest m = load_manifest(manifest, false);

    std::vector<std::string> corpus;
    std::vector<std::vector<std::string>> per_sample;
    for (const SampleEntry& e : m.samples) {
      if (!split.empty() && e.split != split) continue;
      std::vector<std::string> descs = e.descriptions;
      if (descs.empty()) {
        const FeatureBundle b = read_bundle(m.bundle_path(e), m.dims);
        for (std::size_t r = 0; r < b.descriptions.size(); ++r)
          if (b.text_mask[r]) descs.push_back(b.descriptions[r]);
      }
      corpus.insert(corpus.end(), descs.begin(), descs.end());
      per_sample.push_back(std::move(descs));
    }
    const ObjectBag bag = build_object_bag(corpus, lex);
    const auto counts = count_categories(corpus, lex);

    json j;
    j["bag"] = json::array();
    for (std::size_t i = 0; i < bag.entries.size(); ++i) {
      io.out << (i + 1) << " " << bag.entries[i].first << " " << bag.entries[i].second << "\n";
      j["bag"].push_back({{"category", bag.entries[i].first}, {"count", bag.entries[i].second}});
    }
    j["supercategories"] = groups.group(counts);
    json hist = json::object();
    for (const auto& [n, samples] : annotation_histogram(per_sample)) {
      hist[std::to_string(n)] = samples;
    }
    j["annotation_histogram"] = hist;
    if (!out.empty()) WriteFileBytes(out, j.dump(2) + "\n");
    return kExitOk;
  }
};

struct EnrichCmd {
  std::string manifest;
  std::string out;
  std::string split;
  EndpointFlags endpoint;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--out", out, "cache directory");
    app->add_option("--split", split, "restrict to one split");
    endpoint.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    RequireOut(out);
    const VlmEndpointConfig config = endpoint.make();
    const DatasetManifest m = load_manifest(manifest, false);
    std::vector<const SampleEntry*> entries;
    for (const SampleEntry& e : m.samples)
      if (split.empty() || e.split == split) entries.push_back(&e);
    for (const SampleEntry* e : entries) {
      if (e->image.empty()) {
        Fail(ErrorKind::kData, "manifest sample '" + e->id + "' has no image reference");
      }
    }
    auto backend = MakeBackend(config);
    std::atomic<std::size_t> hits{0};
    const fs::path cache(out);
    ParallelFor(entries.size(), endpoint.jobs, [&](std::size_t i) {
      const SampleEntry& e = *entries[i];
      EnrichmentOutcome r = enrich_sample(e.id, e.image, m.dims.s, *backend, cache);
      if (r.cache_hit) ++hits;
      WriteFileBytes(cache / e.id / "enrichment.json", EnrichmentToJson(r.result));
    });
    io.out << "samples=" << entries.size() << " calls=" << backend->calls()
           << " cache_hits=" << hits.load() << "\n";
    return kExitOk;
  }
};

struct PseudoCmd {
  std::string manifest;
  std::string out;
  std::string split = "train";
  EndpointFlags endpoint;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--out", out, "cache directory");
    app->add_option("--split", split, "split to label")->capture_default_str();
    endpoint.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    RequireOut(out);
    const VlmEndpointConfig config = endpoint.make();
    const DatasetManifest m = load_manifest(manifest, true);
    const std::vector<FeatureBundle> samples = LoadNonEmptySplit(m, split);
    auto backend = MakeBackend(config);
    std::atomic<std::size_t> hits{0};
    std::mutex warn_mu;
    const fs::path cache(out);
    ParallelFor(samples.size(), endpoint.jobs, [&](std::size_t i) {
      const FeatureBundle& b = samples[i];
      PseudoOutcome r = derive_pseudo_cam(b.sample_id, b.descriptions, b.text_mask, b.label,
                                          m.class_names, *backend, cache);
      if (r.cache_hit) ++hits;
      write_pseudo_cam(cache / b.sample_id / "pseudo.json", r.pseudo);
      std::lock_guard<std::mutex> lock(warn_mu);
      for (const PseudoWarning& w : r.warnings) {
        io.err << "warning sample=" << b.sample_id << " line=" << w.line << " reason=" << w.reason
               << "\n";
      }
    });
    io.out << "samples=" << samples.size() << " calls=" << backend->calls()
           << " cache_hits=" << hits.load() << "\n";
    return kExitOk;
  }
};

struct TrainCmd {
  std::string manifest;
  std::string out;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::string val_split = "val";
  TrainFlags train;
  DecisionFlags decision;
  ModelFlags model;
  BranchFlags branches;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--out", out, "output directory for checkpoints and logs");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--split", split, "training split")->capture_default_str();
    app->add_option("--val-split", val_split, "model-selection split (optional)")
        ->capture_default_str();
    train.add(app);
    decision.add(app);
    model.add(app);
    branches.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    RequireOut(out);
    const BranchMode mode = branches.mode();
    TrainConfig config = train.make(seed, io);
    config.out_dir = fs::path(out);
    const DatasetManifest m = load_manifest(manifest, true);
    MainPhaseInputs in;
    in.dims = model.make(m.dims);
    in.mode = mode;
    in.decision = decision.make(m);
    in.class_names = m.class_names;
    in.multi_label = m.multi_label;
    const std::vector<FeatureBundle> train_set = LoadNonEmptySplit(m, split);
    const std::vector<FeatureBundle> val_set = load_split(m, val_split);
    in.train = &train_set;
    in.val = &val_set;
    Rng rng(seed);
    train_main(in, config, rng);
    io.out << "wrote " << (fs::path(out) / "final.fdck").string() << " and "
           << (fs::path(out) / "best.fdck").string() << "\n";
    return kExitOk;
  }
};

PseudoCamTable LoadPseudoCams(const DatasetManifest& m, const std::vector<FeatureBundle>& samples,
                              const std::string& pseudo_dir) {
  PseudoCamTable table;
  for (const FeatureBundle& b : samples) {
    fs::path p;
    if (!pseudo_dir.empty()) {
      p = fs::path(pseudo_dir) / b.sample_id / "pseudo.json";
    } else {
      for (const SampleEntry& e : m.samples)
        if (e.id == b.sample_id) p = m.sidecar_path(e, ".pseudo.json");
    }
    if (!fs::is_regular_file(p)) {
      Fail(ErrorKind::kUsage, "refine: pseudo CAM file '" + p.string() + "' for sample '" +
                                  b.sample_id + "' is missing; run `pseudo` first");
    }
    table.emplace(b.sample_id, read_pseudo_cam(p));
  }
  return table;
}

struct RefineCmd {
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::string pseudo_dir;
  std::uint64_t seed = 0;
  std::string split = "train";
  TrainFlags train;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--checkpoint", checkpoint, "main-phase checkpoint");
    app->add_option("--out", out, "output directory");
    app->add_option("--pseudo", pseudo_dir, "pseudo CAM cache (default: bundle sidecars)");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--split", split, "training split")->capture_default_str();
    train.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    RequireFile(checkpoint, "--checkpoint");
    RequireOut(out);
    TrainConfig config = train.make(seed, io);
    config.out_dir = fs::path(out);
    const DatasetManifest m = load_manifest(manifest, true);
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.dims.input != m.dims) {
      Fail(ErrorKind::kData, "checkpoint dimensions do not match the manifest");
    }
    if (!UsesText(ck.mode)) {
      Fail(ErrorKind::kUsage, "refine: checkpoint was trained without the text branch");
    }
    const std::vector<FeatureBundle> samples = LoadNonEmptySplit(m, split);
    const PseudoCamTable pseudo = LoadPseudoCams(m, samples, pseudo_dir);
    Rng rng(seed);
    train_refinement(ck, samples, pseudo, config, rng);
    io.out << "wrote " << (fs::path(out) / "refined.fdck").string() << "\n";
    return kExitOk;
  }
};

struct EvalCmd {
  std::string manifest;
  std::string checkpoint;
  std::string predictions;
  std::string split = "eval";
  std::string out;
  bool no_refine = false;
  DecisionFlags decision;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--checkpoint", checkpoint, "model checkpoint");
    app->add_option("--predictions", predictions,
                    "JSON object sample id -> 0/1 decisions, scored instead of a model");
    app->add_option("--split", split, "split to evaluate")->capture_default_str();
    app->add_option("--out", out, "JSON report file");
    app->add_flag("--no-refine", no_refine, "ignore the surrogate even when present");
    decision.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    if (checkpoint.empty() == predictions.empty()) {
      Fail(ErrorKind::kUsage, "eval needs exactly one of --checkpoint and --predictions");
    }
    if (!checkpoint.empty()) RequireFile(checkpoint, "--checkpoint");
    if (!predictions.empty()) RequireFile(predictions, "--predictions");
    const DatasetManifest m = load_manifest(manifest, predictions.empty());

    ConfusionCounts counts(m.num_classes());
    if (!predictions.empty()) {
      json p;
      try {
        p = json::parse(ReadFileBytes(predictions));
      } catch (const json::exception& e) {
        Fail(ErrorKind::kFormat, "predictions file: " + std::string(e.what()));
      }
      std::size_t n = 0;
      for (const SampleEntry* e : m.split(split)) {
        if (!p.contains(e->id)) {
          Fail(ErrorKind::kData, "predictions file has no entry for sample '" + e->id + "'");
        }
        Label d;
        try {
          for (const json& v : p.at(e->id)) d.push_back(v.get<int>() != 0);
        } catch (const json::exception&) {
          Fail(ErrorKind::kFormat, "predictions for sample '" + e->id + "' are not 0/1 lists");
        }
        if (d.size() != m.num_classes()) {
          Fail(ErrorKind::kData, "predictions for sample '" + e->id + "' have the wrong length");
        }
        accumulate(d, e->label, counts);
        ++n;
      }
      if (n == 0) Fail(ErrorKind::kData, "split '" + split + "' has no samples");
    } else {
      const Checkpoint ck = load_checkpoint(checkpoint);
      if (ck.dims.input != m.dims) {
        Fail(ErrorKind::kData, "checkpoint dimensions do not match the manifest");
      }
      const DecisionConfig config = decision.override(ck.decision, m.dims);
      const Model model = ModelFromCheckpoint(ck);
      const bool refined = !no_refine && model.surrogate.has_value();
      counts = evaluate(model, LoadNonEmptySplit(m, split), config, refined).counts;
      io.out << "mode=" << BranchModeName(ck.mode) << " refined=" << (refined ? 1 : 0) << "\n";
    }
    const F1Report report = f1_report(counts);
    io.out << FormatReport(report, m.class_names);
    PrintReportRows(io, "split=" + split, report, m.class_names);
    if (!out.empty()) {
      WriteFileBytes(out, ReportToJson(report, counts, m.class_names).dump(2) + "\n");
    }
    return kExitOk;
  }
};

struct ExplainCmd {
  std::string manifest;
  std::string checkpoint;
  std::string split = "eval";
  std::vector<std::string> samples;
  std::size_t limit = 0;
  bool no_refine = false;
  DecisionFlags decision;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--checkpoint", checkpoint, "model checkpoint");
    app->add_option("--split", split, "split to explain")->capture_default_str();
    app->add_option("--sample", samples, "sample ids (default: whole split)");
    app->add_option("--limit", limit, "explain at most this many samples");
    app->add_flag("--no-refine", no_refine, "ignore the surrogate even when present");
    decision.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    RequireFile(checkpoint, "--checkpoint");
    const DatasetManifest m = load_manifest(manifest, false);
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.dims.input != m.dims) {
      Fail(ErrorKind::kData, "checkpoint dimensions do not match the manifest");
    }
    const DecisionConfig config = decision.override(ck.decision, m.dims);
    std::vector<const SampleEntry*> entries;
    if (samples.empty()) {
      entries = m.split(split);
    } else {
      for (const std::string& id : samples) {
        auto it = std::find_if(m.samples.begin(), m.samples.end(),
                               [&](const SampleEntry& e) { return e.id == id; });
        if (it == m.samples.end()) Fail(ErrorKind::kUsage, "unknown sample '" + id + "'");
        entries.push_back(&*it);
      }
    }
    if (limit > 0 && entries.size() > limit) entries.resize(limit);
    const Model model = ModelFromCheckpoint(ck);
    const bool refined = !no_refine && model.surrogate.has_value();
    std::optional<FrozenClassifier> frozen;
    if (refined) frozen.emplace(model.text_head);
    for (const SampleEntry* e : entries) {
      const FeatureBundle b = read_bundle(m.bundle_path(*e), m.dims);
      const DecisionOutput d = refined ? predict_refined(b, model, config, &*frozen)
                                       : predict(b, model, config);
      io.out << "sample=" << b.sample_id << " decisions=";
      bool first = true;
      for (std::size_t c = 0; c < d.decisions.size(); ++c) {
        if (!d.decisions[c]) continue;
        io.out << (first ? "" : ",") << m.class_names[c];
        first = false;
      }
      if (first) io.out << "none";
      io.out << "\n";
      for (const ClassExplanation& x : d.explanations) {
        io.out << "  class=" << m.class_names[x.class_index]
               << " prob=" << Fixed(d.probabilities[x.class_index]) << " vision=[";
        for (std::size_t i = 0; i < x.vision.size(); ++i)
          io.out << (i ? "," : "") << x.vision[i];
        io.out << "] text=[";
        for (std::size_t i = 0; i < x.text.size(); ++i) io.out << (i ? "," : "") << x.text[i];
        io.out << "]\n";
        for (std::size_t idx : x.text) {
          io.out << "    description " << idx << ": " << b.descriptions[idx] << "\n";
        }
      }
    }
    return kExitOk;
  }
};

struct GradcheckCmd {
  std::uint64_t seed = 0;
  std::size_t samples = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool verbose = false;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "random seed");
    app->add_option("--samples", samples, "parameter entries checked");
    app->add_option("--step", step, "finite-difference step");
    app->add_option("--tolerance", tolerance, "maximum accepted relative error");
    app->add_flag("--verbose", verbose, "print every sampled entry");
  }

  int run(Io io) {
    if (samples < 1) Fail(ErrorKind::kUsage, "--samples must be >= 1");
    if (!(step > 0.0)) Fail(ErrorKind::kUsage, "--step must be > 0");
    GradcheckOptions o;
    o.seed = seed;
    o.samples = samples;
    o.step = step;
    const GradcheckReport r = gradcheck(o);
    if (verbose) {
      io.out << FormatGradcheck(r);
    } else {
      char buf[160];
      std::snprintf(buf, sizeof buf, "max_rel_error=%.3e samples=%zu seconds=%.2f\n",
                    r.max_rel_error, r.entries.size(), r.seconds);
      io.out << buf;
    }
    if (r.max_rel_error >= tolerance) {
      io.err << "gradcheck: max relative error exceeds " << tolerance << "\n";
      return kExitFailure;
    }
    return kExitOk;
  }
};

struct AblateCmd {
  std::string manifest;
  std::string out;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::string eval_split = "eval";
  TrainFlags train;
  DecisionFlags decision;
  ModelFlags model;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--split", split, "training split")->capture_default_str();
    app->add_option("--eval-split", eval_split, "evaluation split")->capture_default_str();
    train.add(app);
    decision.add(app);
    model.add(app);
  }

  int run(Io io) {
    RequireFile(manifest, "--manifest");
    RequireOut(out);
    const TrainConfig base = train.make(seed, io);
    const DatasetManifest m = load_manifest(manifest, true);
    MainPhaseInputs in;
    in.dims = model.make(m.dims);
    in.decision = decision.make(m);
    in.class_names = m.class_names;
    in.multi_label = m.multi_label;
    const std::vector<FeatureBundle> train_set = LoadNonEmptySplit(m, split);
    const std::vector<FeatureBundle> eval_set = LoadNonEmptySplit(m, eval_split);
    in.train = &train_set;

    json rows = json::array();
    for (BranchMode mode : {BranchMode::kGlobalOnly, BranchMode::kVisionOnly,
                            BranchMode::kTextOnly, BranchMode::kFull}) {
      in.mode = mode;
      TrainConfig config = base;
      config.out_dir = fs::path(out) / std::string(BranchModeName(mode));
      config.log = nullptr;
      Rng rng(seed);
      const TrainResult r = train_main(in, config, rng);
      const EvalResult ev = evaluate(r.model, eval_set, in.decision, false);
      std::ostringstream line;
      Io row{line, io.err};
      PrintReportRows(row, "config=" + std::string(BranchModeName(mode)), ev.report,
                      m.class_names);
      io.out << line.str() << std::flush;
      json j = ReportToJson(ev.report, ev.counts, m.class_names);
      j["config"] = BranchModeName(mode);
      rows.push_back(j);
    }
    WriteFileBytes(fs::path(out) / "ablation.json", rows.dump(2) + "\n");
    return kExitOk;
  }
};

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fusedrive: explainable driving decisions from fused vision and text"};
  app.name("fusedrive");
  app.require_subcommand(1);
  app.set_version_flag("--version", "fusedrive 0.1.0");

  SynthCmd synth;
  BagCmd bag;
  EnrichCmd enrich;
  PseudoCmd pseudo;
  TrainCmd train;
  RefineCmd refine;
  EvalCmd eval;
  ExplainCmd explain;
  GradcheckCmd gradcheck_cmd;
  AblateCmd ablate;
  std::map<CLI::App*, std::function<int(Io)>> runners;
  auto reg = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    runners[sub] = [&cmd](Io io) { return cmd.run(io); };
  };
  reg("synth", "generate a planted synthetic dataset", synth);
  reg("bag", "rank object categories mentioned in descriptions", bag);
  reg("enrich", "ask the three enrichment questions per sample", enrich);
  reg("pseudo", "derive pseudo CAMs from descriptions and labels", pseudo);
  reg("train", "train the main model", train);
  reg("refine", "train the text-branch surrogate on pseudo CAMs", refine);
  reg("eval", "F1 report on a split", eval);
  reg("explain", "decisions with supporting instances and descriptions", explain);
  reg("gradcheck", "compare gradients against finite differences", gradcheck_cmd);
  reg("ablate", "train and evaluate the four branch configurations", ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Io io{out, err};
  try {
    for (CLI::App* sub : app.get_subcommands()) return runners.at(sub)(io);
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << ErrorKindName(e.kind()) << "): " << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error (usage): " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace fusedrive

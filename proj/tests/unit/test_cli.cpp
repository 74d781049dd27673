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

#include <cstdlib>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/cli.hpp"
#include "fusedrive/manifest.hpp"
#include "support.hpp"

using namespace fusedrive;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Run(std::vector<std::string> args) {
  args.insert(args.begin(), "fusedrive");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmallModel = {"--model-dim", "8",  "--hidden", "16",
                                              "--heads",     "2",  "--surrogate-hidden", "8",
                                              "--k",         "2",  "--khat", "1"};

std::vector<std::string> With(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// One small synthetic dataset and checkpoint shared by the cases below.
struct Workspace {
  testing::TempDir dir;
  fs::path manifest = dir / "data" / "manifest.json";
  fs::path run = dir / "run";

  Workspace() {
    const Outcome s = Run({"synth", "--out", (dir / "data").string(), "--seed", "3", "--n-train", "48",
                           "--n-eval", "24", "--t", "2", "--d-global", "6", "--n", "8", "--d-local", "6",
                           "--s", "4", "--d-text", "6", "--noise", "0.3"});
    REQUIRE(s.code == 0);
    const Outcome t = Run(With({"train", "--manifest", manifest.string(), "--out", run.string(), "--epochs",
                                "3", "--batch", "16", "--lr", "3e-3", "--seed", "1"},
                               kSmallModel));
    REQUIRE(t.code == 0);
  }
};

Workspace& Shared() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(Run({}).code == kExitUsage);
  CHECK(Run({"frobnicate"}).code == kExitUsage);
  CHECK(Run({"--help"}).code == kExitOk);
  const Outcome v = Run({"--version"});
  CHECK(v.code == kExitOk);
  CHECK(v.out.find("fusedrive") != std::string::npos);
  CHECK(Run({"synth", "--n-train", "0", "--out", "x"}).code == kExitUsage);
  CHECK(Run({"synth"}).code == kExitUsage);
  CHECK(Run({"train", "--manifest", "/nonexistent/manifest.json", "--out", "x"}).code == kExitUsage);
  CHECK(Run({"gradcheck", "--samples", "0"}).code == kExitUsage);
  CHECK(Run({"eval", "--manifest", Shared().manifest.string()}).code == kExitUsage);
}

TEST_CASE("exit codes follow error kinds") {
  CHECK(ExitCodeFor(ErrorKind::kUsage) == 2);
  CHECK(ExitCodeFor(ErrorKind::kConfig) == 2);
  CHECK(ExitCodeFor(ErrorKind::kData) == 3);
  CHECK(ExitCodeFor(ErrorKind::kShape) == 3);
  CHECK(ExitCodeFor(ErrorKind::kFormat) == 4);
  CHECK(ExitCodeFor(ErrorKind::kTransport) == 5);
  CHECK(ExitCodeFor(ErrorKind::kParse) == 6);
}

TEST_CASE("train writes checkpoints and a log") {
  Workspace& w = Shared();
  CHECK(fs::exists(w.run / "final.fdck"));
  CHECK(fs::exists(w.run / "best.fdck"));
  const std::string log = ReadFileBytes(w.run / "train_log.txt");
  CHECK(std::count(log.begin(), log.end(), '\n') >= 3);

  const std::string m = w.manifest.string();
  const std::string out = (w.dir / "bad").string();
  CHECK(Run(With({"train", "--manifest", m, "--out", out, "--no-vision", "--no-text"}, kSmallModel)).code ==
        kExitUsage);
  CHECK(Run(With({"train", "--manifest", m, "--out", out, "--global-only", "--no-text"}, kSmallModel)).code ==
        kExitUsage);
  CHECK(Run({"train", "--manifest", m, "--out", out, "--k", "99"}).code == kExitUsage);
  CHECK(Run(With({"train", "--manifest", m, "--out", out, "--lr", "-1"}, kSmallModel)).code == kExitUsage);
  CHECK(Run(With({"train", "--manifest", m, "--out", out, "--split", "nope"}, kSmallModel)).code == kExitData);
}

TEST_CASE("eval scores a predictions file") {
  Workspace& w = Shared();
  const DatasetManifest m = load_manifest(w.manifest);
  nlohmann::json perfect, missing;
  for (const SampleEntry* e : m.split("eval")) perfect[e->id] = e->label;
  missing = perfect;
  missing.erase(missing.begin());
  WriteFileBytes(w.dir / "perfect.json", perfect.dump());
  WriteFileBytes(w.dir / "missing.json", missing.dump());
  WriteFileBytes(w.dir / "broken.json", "{\"syn");

  const Outcome r = Run({"eval", "--manifest", w.manifest.string(), "--predictions",
                         (w.dir / "perfect.json").string(), "--out", (w.dir / "report.json").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("mF1                1.0000") != std::string::npos);
  CHECK(r.out.find("F1_all             1.0000") != std::string::npos);
  const auto report = nlohmann::json::parse(ReadFileBytes(w.dir / "report.json"));
  CHECK(report["mf1"].get<double>() == 1.0);

  CHECK(Run({"eval", "--manifest", w.manifest.string(), "--predictions", (w.dir / "missing.json").string()})
            .code == kExitData);
  CHECK(Run({"eval", "--manifest", w.manifest.string(), "--predictions", (w.dir / "broken.json").string()})
            .code == kExitFormat);
  CHECK(Run({"eval", "--manifest", w.manifest.string(), "--predictions", (w.dir / "perfect.json").string(),
             "--checkpoint", (w.run / "final.fdck").string()})
            .code == kExitUsage);
}

TEST_CASE("eval and explain a checkpoint") {
  Workspace& w = Shared();
  const Outcome e = Run({"eval", "--manifest", w.manifest.string(), "--checkpoint", (w.run / "best.fdck").string()});
  CHECK(e.code == kExitOk);
  CHECK(e.out.find("mode=full refined=0") != std::string::npos);
  CHECK(e.out.find("split=eval mf1=") != std::string::npos);

  const Outcome x = Run({"explain", "--manifest", w.manifest.string(), "--checkpoint",
                         (w.run / "best.fdck").string(), "--limit", "5", "--threshold", "0.01"});
  CHECK(x.code == kExitOk);
  CHECK(std::count(x.out.begin(), x.out.end(), 's') > 0);
  const std::regex class_line(R"(  class=\w+ prob=[0-9.]+ vision=\[\d+,\d+\] text=\[\d+\])");
  std::istringstream lines(x.out);
  std::size_t samples = 0, classes = 0;
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("sample=", 0) == 0) ++samples;
    if (line.rfind("  class=", 0) == 0) {
      ++classes;
      CHECK(std::regex_match(line, class_line));
    }
  }
  CHECK(samples == 5);
  CHECK(classes > 0);

  CHECK(Run({"explain", "--manifest", w.manifest.string(), "--checkpoint", (w.run / "best.fdck").string(),
             "--sample", "nobody"})
            .code == kExitUsage);
  CHECK(Run({"explain", "--manifest", w.manifest.string(), "--checkpoint", (w.run / "best.fdck").string(),
             "--khat", "9"})
            .code == kExitUsage);

  WriteFileBytes(w.dir / "garbage.fdck", "not a checkpoint");
  CHECK(Run({"eval", "--manifest", w.manifest.string(), "--checkpoint", (w.dir / "garbage.fdck").string()})
            .code == kExitFormat);
}

TEST_CASE("refine uses pseudo CAM sidecars and reports missing ones") {
  Workspace& w = Shared();
  const std::string ck = (w.run / "final.fdck").string();
  const Outcome r = Run({"refine", "--manifest", w.manifest.string(), "--checkpoint", ck, "--out",
                         (w.dir / "refined").string(), "--epochs", "2", "--batch", "16", "--lr", "3e-3"});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(w.dir / "refined" / "refined.fdck"));
  const Outcome e = Run({"eval", "--manifest", w.manifest.string(), "--checkpoint",
                         (w.dir / "refined" / "refined.fdck").string()});
  CHECK(e.code == kExitOk);
  CHECK(e.out.find("refined=1") != std::string::npos);

  const Outcome missing = Run({"refine", "--manifest", w.manifest.string(), "--checkpoint", ck, "--out",
                               (w.dir / "refined2").string(), "--pseudo", (w.dir / "empty").string()});
  CHECK(missing.code == kExitUsage);
  CHECK(missing.err.find("pseudo") != std::string::npos);
}

TEST_CASE("enrich and pseudo through the mock endpoint") {
  Workspace& w = Shared();
  const std::string mock = (fs::path(FUSEDRIVE_FIXTURES) / "mock").string();
  const std::string cache = (w.dir / "cache").string();
  const Outcome first = Run({"enrich", "--manifest", w.manifest.string(), "--out", cache, "--split", "eval",
                             "--mock-dir", mock, "--jobs", "3"});
  CHECK(first.code == kExitOk);
  CHECK(first.out == "samples=24 calls=72 cache_hits=0\n");
  const Outcome second =
      Run({"enrich", "--manifest", w.manifest.string(), "--out", cache, "--split", "eval", "--mock-dir", mock});
  CHECK(second.out == "samples=24 calls=0 cache_hits=24\n");
  CHECK(fs::exists(fs::path(cache) / "syn00048" / "enrichment.json"));

  const Outcome pseudo = Run({"pseudo", "--manifest", w.manifest.string(), "--out", cache, "--mock-dir", mock});
  CHECK(pseudo.code == kExitOk);
  CHECK(pseudo.out == "samples=48 calls=48 cache_hits=0\n");
  CHECK(fs::exists(fs::path(cache) / "syn00000" / "pseudo.json"));

  CHECK(Run({"enrich", "--manifest", w.manifest.string(), "--out", cache, "--mock-dir", mock, "--endpoint",
             "http://127.0.0.1:9"})
            .code == kExitUsage);

  testing::TempDir bad;
  fs::create_directories(bad / "_default");
  WriteFileBytes(bad / "_default" / "enrich_q1.txt", "None.");
  WriteFileBytes(bad / "_default" / "enrich_q2.txt", "None.");
  CHECK(Run({"enrich", "--manifest", w.manifest.string(), "--out", (w.dir / "c2").string(), "--mock-dir",
             bad.path().string()})
            .code == kExitParse);

  ::setenv("FUSEDRIVE_VLM_TOKEN", "t", 1);
  // Synthetic image references are not files, so a live enrich stops before any request.
  CHECK(Run({"enrich", "--manifest", w.manifest.string(), "--out", (w.dir / "c3").string(), "--endpoint",
             "http://127.0.0.1:9/v1", "--retries", "1", "--timeout", "2"})
            .code == kExitData);
  CHECK(Run({"pseudo", "--manifest", w.manifest.string(), "--out", (w.dir / "c3").string(), "--endpoint",
             "http://127.0.0.1:9/v1", "--retries", "1", "--timeout", "2"})
            .code == kExitTransport);
}

TEST_CASE("bag, gradcheck and ablate") {
  Workspace& w = Shared();
  const Outcome b = Run({"bag", "--manifest", w.manifest.string(), "--out", (w.dir / "bag.json").string()});
  CHECK(b.code == kExitOk);
  const auto bag = nlohmann::json::parse(ReadFileBytes(w.dir / "bag.json"));
  CHECK(bag["bag"].size() <= 10);
  CHECK(bag.contains("annotation_histogram"));

  const Outcome g = Run({"gradcheck", "--samples", "5"});
  CHECK(g.code == kExitOk);
  CHECK(g.out.rfind("max_rel_error=", 0) == 0);

  const Outcome a = Run(With({"ablate", "--manifest", w.manifest.string(), "--out", (w.dir / "ablate").string(),
                              "--epochs", "1", "--batch", "16"},
                             kSmallModel));
  CHECK(a.code == kExitOk);
  const auto rows = nlohmann::json::parse(ReadFileBytes(w.dir / "ablate" / "ablation.json"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0]["config"] == "global-only");
  CHECK(rows[3]["config"] == "full");
}

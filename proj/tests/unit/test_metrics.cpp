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

#include <random>

#include "fusedrive/metrics.hpp"
#include "support.hpp"

using namespace fusedrive;

namespace {

// Independent recount straight from the definition.
struct Oracle {
  std::vector<double> per_class;
  double micro = 0.0;
  double macro = 0.0;
};

Oracle Recount(const std::vector<Label>& pred, const std::vector<Label>& truth, std::size_t c) {
  Oracle o;
  double tp_all = 0, fp_all = 0, fn_all = 0;
  for (std::size_t k = 0; k < c; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      tp += pred[i][k] && truth[i][k];
      fp += pred[i][k] && !truth[i][k];
      fn += !pred[i][k] && truth[i][k];
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    o.per_class.push_back(precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0);
    o.macro += o.per_class.back() / static_cast<double>(c);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  const double p = tp_all + fp_all > 0 ? tp_all / (tp_all + fp_all) : 0.0;
  const double r = tp_all + fn_all > 0 ? tp_all / (tp_all + fn_all) : 0.0;
  o.micro = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  return o;
}

ConfusionCounts Count(const std::vector<Label>& pred, const std::vector<Label>& truth, std::size_t c) {
  ConfusionCounts counts(c);
  for (std::size_t i = 0; i < pred.size(); ++i) accumulate(pred[i], truth[i], counts);
  return counts;
}

}  // namespace

TEST_CASE("hand-counted single class") {
  // TP=2, FP=1, FN=1.
  const std::vector<Label> pred = {{1}, {1}, {1}, {0}, {0}};
  const std::vector<Label> truth = {{1}, {1}, {0}, {1}, {0}};
  const ConfusionCounts counts = Count(pred, truth, 1);
  CHECK(counts.per_class[0] == ClassCounts{2, 1, 1, 1});
  const F1Report r = f1_report(counts);
  CHECK(std::abs(r.per_class[0] - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(r.mf1 - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(r.f1_all - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("perfect predictions score one, silent classes zero") {
  const std::vector<Label> truth = {{1, 0, 1}, {0, 1, 0}, {1, 1, 0}};
  const F1Report r = f1_report(Count(truth, truth, 3));
  for (double v : r.per_class) CHECK(v == 1.0);
  CHECK(r.mf1 == 1.0);
  CHECK(r.f1_all == 1.0);

  const std::vector<Label> none = {{0, 0}, {0, 0}};
  const F1Report z = f1_report(Count(none, none, 2));
  CHECK(z.per_class == std::vector<double>{0.0, 0.0});
  CHECK(z.mf1 == 0.0);
  CHECK(z.f1_all == 0.0);
  CHECK(f1_report(ConfusionCounts(0)).mf1 == 0.0);
}

TEST_CASE("random labels agree with the precision/recall recount") {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 1 + trial % 5;
    const std::size_t n = 1 + trial % 37;
    std::vector<Label> pred(n, Label(c)), truth(n, Label(c));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        pred[i][k] = coin(rng);
        truth[i][k] = coin(rng);
      }
    const F1Report r = f1_report(Count(pred, truth, c));
    const Oracle o = Recount(pred, truth, c);
    for (std::size_t k = 0; k < c; ++k) CHECK(std::abs(r.per_class[k] - o.per_class[k]) < 1e-12);
    CHECK(std::abs(r.f1_all - o.micro) < 1e-12);
    CHECK(std::abs(r.mf1 - o.macro) < 1e-12);
    for (double v : r.per_class) CHECK((v >= 0.0 && v <= 1.0));
    for (const ClassCounts& k : Count(pred, truth, c).per_class) CHECK(k.total() == n);
  }
}

TEST_CASE("merged shards equal one pass") {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution coin(0.5);
  std::vector<Label> pred(50, Label(4)), truth(50, Label(4));
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      pred[i][k] = coin(rng);
      truth[i][k] = coin(rng);
    }
  const ConfusionCounts whole = Count(pred, truth, 4);
  ConfusionCounts a(4), b(4);
  for (std::size_t i = 0; i < 50; ++i) accumulate(pred[i], truth[i], i % 3 ? a : b);
  ConfusionCounts ab = a, ba = b;
  CHECK(ab.merge(b) == whole);
  CHECK(ba.merge(a) == whole);
  CHECK(testing::KindOf([&] { a.merge(ConfusionCounts(3)); }) == ErrorKind::kUsage);
  CHECK(testing::KindOf([&] { accumulate(Label{1, 0}, Label{1, 0, 0, 0}, a); }) == ErrorKind::kUsage);
}

TEST_CASE("report rendering") {
  ConfusionCounts counts(2);
  counts.per_class[0] = {2, 1, 1, 0};
  counts.per_class[1] = {0, 0, 0, 4};
  const F1Report r = f1_report(counts);
  const std::string text = FormatReport(r, {"stop", "go"});
  CHECK(text ==
        "class                  F1\n"
        "stop               0.6667\n"
        "go                 0.0000\n"
        "F1_all             0.6667\n"
        "mF1                0.3333\n");
  const nlohmann::json j = ReportToJson(r, counts, {"stop", "go"});
  CHECK(j["classes"][0]["name"] == "stop");
  CHECK(j["classes"][0]["tp"] == 2);
  CHECK(j["classes"][1]["tn"] == 4);
  CHECK(j["mf1"].get<double>() == r.mf1);
  CHECK(j["f1_all"].get<double>() == r.f1_all);
}

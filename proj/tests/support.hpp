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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fusedrive/bundle.hpp"
#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"
#include "fusedrive/tensor.hpp"
#include <unistd.h>

namespace testing {

using fusedrive::Tensor;

inline Tensor Random(fusedrive::Shape shape, fusedrive::Rng& rng, double scale = 1.0,
                     bool requires_grad = false) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return Tensor::FromData(std::move(shape), std::move(v), requires_grad);
}

inline bool BitEqual(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  return std::equal(x.begin(), x.end(), y.begin());
}

inline double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Largest |analytic - central difference| / max(1, |analytic|) over every
// element of every input. `loss` must return a scalar and record on the
// tape it is given (it is called with nullptr for the numeric side).
inline double FiniteDifferenceError(const std::function<Tensor(fusedrive::Tape*)>& loss,
                                    std::vector<Tensor> inputs, double h = 1e-5) {
  for (Tensor& t : inputs) t.zero_grad();
  fusedrive::Tape tape;
  Tensor l = loss(&tape);
  tape.backward(l);
  double worst = 0.0;
  for (Tensor& t : inputs) {
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.mutable_data()[i] = saved + h;
      const double up = loss(nullptr).item();
      t.mutable_data()[i] = saved - h;
      const double down = loss(nullptr).item();
      t.mutable_data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                  std::max(1.0, std::abs(analytic[i])));
    }
  }
  return worst;
}

// Weighted sum with fixed random weights, so every output element carries a
// distinct gradient.
inline Tensor Project(const Tensor& out, const Tensor& weights, fusedrive::Tape* tape) {
  Tensor flat = fusedrive::reshape(out, {1, out.size()}, tape);
  return fusedrive::sum(fusedrive::matmul(flat, weights, tape), tape);
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fusedrive_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Random bundle with `valid_local` valid local rows and `valid_text` valid
// descriptions at the front; padding rows are zero.
inline fusedrive::FeatureBundle RandomBundle(const fusedrive::BundleDims& d, fusedrive::Rng& rng,
                                             std::size_t valid_local, std::size_t valid_text,
                                             const std::string& id = "sample") {
  fusedrive::FeatureBundle b;
  b.sample_id = id;
  b.global = Random({d.t, d.d_global}, rng);
  b.local = Random({d.n, d.d_local}, rng);
  b.text = Random({d.s, d.d_text}, rng);
  b.local_mask.assign(d.n, 0);
  b.text_mask.assign(d.s, 0);
  auto local = b.local.mutable_data();
  for (std::size_t i = 0; i < d.n; ++i) {
    if (i < valid_local) {
      b.local_mask[i] = 1;
    } else {
      std::fill_n(local.begin() + static_cast<std::ptrdiff_t>(i * d.d_local), d.d_local, 0.0);
    }
  }
  auto text = b.text.mutable_data();
  b.descriptions.assign(d.s, "");
  for (std::size_t i = 0; i < d.s; ++i) {
    if (i < valid_text) {
      b.text_mask[i] = 1;
      b.descriptions[i] = "description " + std::to_string(i);
    } else {
      std::fill_n(text.begin() + static_cast<std::ptrdiff_t>(i * d.d_text), d.d_text, 0.0);
    }
  }
  b.label.assign(d.num_classes, 0);
  std::uniform_int_distribution<std::size_t> pick(0, d.num_classes - 1);
  b.label[pick(rng)] = 1;
  return b;
}

template <typename Fn>
fusedrive::ErrorKind KindOf(Fn&& fn) {
  try {
    fn();
  } catch (const fusedrive::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected a fusedrive::Error");
}

}  // namespace testing


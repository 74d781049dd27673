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

#include "fusedrive/refinement.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fusedrive/binary_io.hpp"
#include "fusedrive/error.hpp"
#include "fusedrive/ops.hpp"

namespace fusedrive {

Surrogate Surrogate::Init(std::size_t d_text, std::size_t hidden,
                          std::size_t dim, Rng& rng) {
  Surrogate s{Linear::Init(d_text, hidden, rng), Linear::Init(hidden, dim, rng),
              Linear::Init(dim, dim, rng)};
  return s;
}

Tensor Surrogate::forward(const Tensor& x_text, Tape* tape) const {
  Tensor h = relu(first.forward(x_text, tape), tape);
  h = relu(second.forward(h, tape), tape);
  return third.forward(h, tape);
}

void Surrogate::collect(const std::string& prefix, ParameterList& out) const {
  first.collect(prefix + ".0", out);
  second.collect(prefix + ".1", out);
  third.collect(prefix + ".2", out);
}

namespace {

Linear FrozenCopy(const Linear& l) {
  return Linear{l.weight.clone(), l.bias.clone()};
}

}  // namespace

FrozenClassifier::FrozenClassifier(const Classifier& trained)
    : frozen_{FrozenCopy(trained.first), FrozenCopy(trained.second),
              FrozenCopy(trained.third), trained.dropout_rate} {}

PseudoCam PseudoCam::Zeros(std::string sample_id, std::size_t rows,
                           std::size_t classes, Mask mask) {
  PseudoCam p;
  p.sample_id = std::move(sample_id);
  p.rows = rows;
  p.classes = classes;
  p.values.assign(rows * classes, 0);
  p.mask = std::move(mask);
  if (p.mask.empty()) p.mask.assign(rows, 1);
  p.Validate();
  return p;
}

void PseudoCam::Validate() const {
  if (values.size() != rows * classes || mask.size() != rows) {
    Fail(ErrorKind::kData, "pseudo CAM '" + sample_id + "' has inconsistent sizes");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::uint8_t v = at(r, c);
      if (v > 1) Fail(ErrorKind::kData, "pseudo CAM '" + sample_id + "' is not binary");
      if (!mask[r] && v) {
        Fail(ErrorKind::kData, "pseudo CAM '" + sample_id + "' marks masked row " +
                                   std::to_string(r));
      }
    }
  }
}

void write_pseudo_cam(const std::filesystem::path& path, const PseudoCam& cam) {
  cam.Validate();
  nlohmann::json j;
  j["sample_id"] = cam.sample_id;
  j["rows"] = cam.rows;
  j["classes"] = cam.classes;
  j["mask"] = cam.mask;
  nlohmann::json matrix = nlohmann::json::array();
  for (std::size_t r = 0; r < cam.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < cam.classes; ++c) row.push_back(cam.at(r, c));
    matrix.push_back(std::move(row));
  }
  j["matrix"] = std::move(matrix);
  WriteFileBytes(path, j.dump(1) + "\n");
}

PseudoCam read_pseudo_cam(const std::filesystem::path& path) {
  try {
    const nlohmann::json j = nlohmann::json::parse(ReadFileBytes(path));
    PseudoCam p;
    p.sample_id = j.at("sample_id").get<std::string>();
    p.rows = j.at("rows").get<std::size_t>();
    p.classes = j.at("classes").get<std::size_t>();
    p.mask = j.at("mask").get<Mask>();
    const auto& matrix = j.at("matrix");
    if (matrix.size() != p.rows) {
      Fail(ErrorKind::kFormat, path.string() + ": matrix row count mismatch");
    }
    for (const auto& row : matrix) {
      if (row.size() != p.classes) {
        Fail(ErrorKind::kFormat, path.string() + ": matrix column count mismatch");
      }
      for (const auto& v : row) p.values.push_back(v.get<std::uint8_t>());
    }
    p.Validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

Cam surrogate_forward(const Tensor& x_text, const Mask& mask,
                      const Surrogate& surrogate, const FrozenClassifier& head,
                      Tape* tape) {
  if (x_text.rank() != 2 || x_text.cols() != surrogate.first.in_features()) {
    Fail(ErrorKind::kShape, "surrogate: text features " +
                                ShapeToString(x_text.shape()) +
                                " do not match surrogate input width");
  }
  if (surrogate.third.out_features() != head.classifier().first.in_features()) {
    Fail(ErrorKind::kShape, "surrogate output width does not match classifier");
  }
  Rng unused(0);
  return compute_cam(surrogate.forward(x_text, tape), mask, head.classifier(),
                     /*training=*/false, unused, tape);
}

Tensor refinement_loss(const Cam& cam_prime, const PseudoCam& pseudo, Tape* tape) {
  const std::size_t m = cam_prime.instances(), c = cam_prime.classes();
  if (pseudo.rows != m || pseudo.classes != c) {
    Fail(ErrorKind::kData, "refinement_loss: pseudo CAM '" + pseudo.sample_id +
                               "' shape does not match CAM");
  }
  if (pseudo.mask != cam_prime.mask) {
    Fail(ErrorKind::kData, "refinement_loss: pseudo CAM '" + pseudo.sample_id +
                               "' mask disagrees with CAM mask");
  }
  const std::size_t valid_rows = CountValid(pseudo.mask);
  if (valid_rows == 0) Fail(ErrorKind::kData, "refinement_loss: no valid rows");
  const double inv = 1.0 / static_cast<double>(valid_rows * c);
  const Tensor& scores = cam_prime.scores;
  auto x = scores.data();
  std::vector<double> dx(m * c, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (!pseudo.mask[r]) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double xi = x[r * c + k];
      const double yi = pseudo.at(r, k);
      loss += std::max(xi, 0.0) - xi * yi + std::log1p(std::exp(-std::abs(xi)));
      const double sig = xi >= 0.0 ? 1.0 / (1.0 + std::exp(-xi))
                                   : std::exp(xi) / (1.0 + std::exp(xi));
      dx[r * c + k] = (sig - yi) * inv;
    }
  }
  loss *= inv;
  const bool record = ShouldRecord(tape, {&scores});
  Tensor out = Tensor::Scalar(loss, record);
  if (record) {
    tape->record([scores, out, dx = std::move(dx)]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto gs = scores.grad_buffer();
      for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += g * dx[i];
    });
  }
  return out;
}

Cam refine_cam(const Cam& cam, const Cam& cam_prime) {
  if (cam.scores.shape() != cam_prime.scores.shape()) {
    Fail(ErrorKind::kData, "refine_cam: CAM shapes differ");
  }
  if (cam.mask != cam_prime.mask) Fail(ErrorKind::kData, "refine_cam: CAM masks differ");
  return Cam{scale(add(cam.scores, cam_prime.scores), 0.5), cam.mask};
}

}  // namespace fusedrive

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

#include "fusedrive/ops.hpp"

#include <algorithm>
#include <cmath>

#include "fusedrive/error.hpp"

namespace fusedrive {
namespace {

void RequireRank2(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    Fail(ErrorKind::kShape, std::string(op) + ": expected rank-2 tensor, got " +
                                ShapeToString(x.shape()));
  }
}

// out[m x q] += a[m x p] * b[p x q]
void GemmAccumulate(const double* a, const double* b, double* out,
                    std::size_t m, std::size_t p, std::size_t q) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict orow = out + i * q;
    const double* arow = a + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* __restrict brow = b + k * q;
      for (std::size_t j = 0; j < q; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  RequireRank2(a, "matmul");
  RequireRank2(b, "matmul");
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  if (b.rows() != p) {
    Fail(ErrorKind::kShape, "matmul: inner dimensions differ: " +
                                ShapeToString(a.shape()) + " * " +
                                ShapeToString(b.shape()));
  }
  const bool record = ShouldRecord(tape, {&a, &b});
  Tensor out = Tensor::Zeros({m, q}, record);
  GemmAccumulate(a.data().data(), b.data().data(), out.mutable_data().data(),
                 m, p, q);
  if (record) {
    tape->record([a, b, out, m, p, q]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        // dA = G * B^T
        double* ga = a.grad_buffer().data();
        const double* bd = b.data().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * q;
          for (std::size_t k = 0; k < p; ++k) {
            const double* brow = bd + k * q;
            double acc = 0.0;
            for (std::size_t j = 0; j < q; ++j) acc += grow[j] * brow[j];
            ga[i * p + k] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        // dB = A^T * G
        double* gb = b.grad_buffer().data();
        const double* ad = a.data().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * q;
          for (std::size_t k = 0; k < p; ++k) {
            const double aik = ad[i * p + k];
            if (aik == 0.0) continue;
            double* __restrict gbrow = gb + k * q;
            for (std::size_t j = 0; j < q; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x, Tape* tape) {
  RequireRank2(x, "transpose");
  const std::size_t m = x.rows(), q = x.cols();
  const bool record = ShouldRecord(tape, {&x});
  Tensor out = Tensor::Zeros({q, m}, record);
  auto od = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j) od[j * m + i] = xd[i * q + j];
  if (record) {
    tape->record([x, out, m, q]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < q; ++j) gx[i * q + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
  const bool record = ShouldRecord(tape, {&x});
  std::vector<double> values(x.data().begin(), x.data().end());
  Tensor out = Tensor::FromData(std::move(shape), std::move(values), record);
  if (record) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  const bool same = a.shape() == b.shape();
  const bool row_broadcast =
      !same && a.rank() == 2 && b.rank() == 1 && b.size() == a.cols();
  if (!same && !row_broadcast) {
    Fail(ErrorKind::kShape, "add: incompatible shapes " +
                                ShapeToString(a.shape()) + " and " +
                                ShapeToString(b.shape()));
  }
  const bool record = ShouldRecord(tape, {&a, &b});
  Tensor out = Tensor::Zeros(a.shape(), record);
  auto od = out.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  const std::size_t n = a.size(), q = b.size();
  for (std::size_t i = 0; i < n; ++i) od[i] = ad[i] + bd[same ? i : i % q];
  if (record) {
    tape->record([a, b, out, same, n, q]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gb[same ? i : i % q] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c, Tape* tape) {
  const bool record = ShouldRecord(tape, {&x});
  Tensor out = Tensor::Zeros(x.shape(), record);
  auto od = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = c * xd[i];
  if (record) {
    tape->record([x, out, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
  const bool record = ShouldRecord(tape, {&x});
  Tensor out = Tensor::Zeros(x.shape(), record);
  auto od = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (record) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xd = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor mean_over_axis(const Tensor& x, std::size_t axis, Tape* tape) {
  if (x.rank() == 1) {
    if (axis != 0) Fail(ErrorKind::kShape, "mean_over_axis: axis out of range");
    const double inv = 1.0 / static_cast<double>(x.size());
    return scale(sum(x, tape), inv, tape);
  }
  RequireRank2(x, "mean_over_axis");
  if (axis > 1) Fail(ErrorKind::kShape, "mean_over_axis: axis out of range");
  const std::size_t m = x.rows(), q = x.cols();
  const bool record = ShouldRecord(tape, {&x});
  Tensor out = Tensor::Zeros({axis == 0 ? q : m}, record);
  auto od = out.mutable_data();
  auto xd = x.data();
  if (axis == 0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < q; ++j) od[j] += xd[i * q + j];
    for (std::size_t j = 0; j < q; ++j) od[j] /= static_cast<double>(m);
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < q; ++j) acc += xd[i * q + j];
      od[i] = acc / static_cast<double>(q);
    }
  }
  if (record) {
    tape->record([x, out, axis, m, q]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      const double inv = 1.0 / static_cast<double>(axis == 0 ? m : q);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < q; ++j)
          gx[i * q + j] += inv * g[axis == 0 ? j : i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
  const bool record = ShouldRecord(tape, {&x});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::Scalar(acc, record);
  if (record) {
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (double& gx : x.grad_buffer()) gx += g;
    });
  }
  return out;
}

Tensor rowwise_softmax(const Tensor& x, Tape* tape) {
  RequireRank2(x, "rowwise_softmax");
  const std::size_t m = x.rows(), q = x.cols();
  const bool record = ShouldRecord(tape, {&x});
  Tensor out = Tensor::Zeros({m, q}, record);
  auto od = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * q;
    double* orow = od.data() + i * q;
    const double mx = *std::max_element(row, row + q);
    double denom = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (std::size_t j = 0; j < q; ++j) orow[j] /= denom;
  }
  if (record) {
    tape->record([x, out, m, q]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < q; ++j) dot += g[i * q + j] * y[i * q + j];
        for (std::size_t j = 0; j < q; ++j)
          gx[i * q + j] += y[i * q + j] * (g[i * q + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps, Tape* tape) {
  RequireRank2(x, "layer_norm");
  const std::size_t m = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    Fail(ErrorKind::kShape, "layer_norm: gain/bias width does not match " +
                                ShapeToString(x.shape()));
  }
  if (!(eps > 0.0)) Fail(ErrorKind::kConfig, "layer_norm: eps must be > 0");
  const bool record = ShouldRecord(tape, {&x, &gain, &bias});
  Tensor out = Tensor::Zeros({m, d}, record);
  auto od = out.mutable_data();
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  // Normalized values and inverse std are kept for the backward pass.
  std::vector<double> xhat(m * d);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xd.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      od[i * d + j] = gd[j] * xhat[i * d + j] + bd[j];
    }
  }
  if (record) {
    tape->record([x, gain, bias, out, m, d, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gd = gain.data();
      if (gain.requires_grad()) {
        auto gg = gain.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = g[i * d + j] * gd[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[i * d + j];
          }
          mean_dxhat *= inv_d;
          mean_dxhat_xhat *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = g[i * d + j] * gd[j];
            gx[i * d + j] += inv_std[i] * (dxhat - mean_dxhat -
                                           xhat[i * d + j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng,
               Tape* tape) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    Fail(ErrorKind::kConfig,
         "dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const bool record = ShouldRecord(tape, {&x});
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (double& v : mask) v = uniform(rng) < rate ? 0.0 : keep_scale;
  Tensor out = Tensor::Zeros(x.shape(), record);
  auto od = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] * mask[i];
  if (record) {
    tape->record([x, out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Tape* tape) {
  return add(matmul(x, weight, tape), bias, tape);
}

}  // namespace fusedrive

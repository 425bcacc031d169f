// Copyright 2026 The ebmlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ebmlab/losses.hpp"

namespace ebmlab {

std::string to_string(Projection p) { return p == Projection::kGaussian ? "gaussian" : "rademacher"; }

Projection parse_projection(const std::string& s) {
  if (s == "gaussian") return Projection::kGaussian;
  if (s == "rademacher") return Projection::kRademacher;
  throw ConfigError("unknown projection '" + s + "'", "projection");
}

namespace {

void require_like(const Array& a, const Array& ref, const char* name) {
  if (a.shape != ref.shape) {
    throw ShapeError(std::string("loss batch: ") + name + " has shape " + shape_string(a.shape) +
                     ", expected " + shape_string(ref.shape));
  }
}

// vᵀ (∇_Y S) v summed over rows, kept on the tape.
Tensor projected_jacobian(const Tensor& s, const Tensor& y, const Tensor& v) {
  if (!s.tracked() || !s.graph()->depends_on(s, y)) return Tensor(0.0);
  return dot(v, gradient(dot(v, s), y, true));
}

Tensor batch_mean(const Tensor& total, std::size_t n) {
  return scale(1.0 / static_cast<double>(n), total);
}

}  // namespace

void LossBatch::validate() const {
  if (y_pos.rank() != 2 || y_pos.rows() == 0 || y_pos.cols() == 0) {
    throw ShapeError("loss batch: Y⁺ must be a non-empty n x d matrix, got " +
                     shape_string(y_pos.shape));
  }
  if (x.rank() != 2 || x.rows() != y_pos.rows()) {
    throw ShapeError("loss batch: x has shape " + shape_string(x.shape) + ", expected " +
                     std::to_string(y_pos.rows()) + " rows");
  }
  if (y_neg) require_like(*y_neg, y_pos, "Y⁻");
  if (y_anchor) require_like(*y_anchor, y_pos, "Y⁰");
  if (v) {
    for (const Array& p : *v) require_like(p, y_pos, "v");
  }
  if (t) {
    if (t->size() != y_pos.rows()) throw ShapeError("loss batch: t must have one value per row");
    for (double ti : *t) {
      if (!(ti >= 0.0 && ti <= 1.0)) {
        throw ConfigError("loss batch: t = " + std::to_string(ti) + " is outside [0, 1]", "t");
      }
    }
  }
}

Array draw_projections(Shape shape, Projection kind, Rng& rng) {
  if (kind == Projection::kGaussian) return standard_normal(std::move(shape), rng);
  Array a = Array::zeros(std::move(shape));
  std::bernoulli_distribution coin(0.5);
  for (double& v : a.values) v = coin(rng) ? 1.0 : -1.0;
  return a;
}

Tensor nce_loss(const ScoreSource& energy, const LossBatch& batch) {
  batch.validate();
  if (!batch.y_neg) throw ConfigError("nce_loss requires negative samples Y⁻", "y_neg");
  if (!energy.is_analytic()) throw ConfigError("nce_loss requires an energy model", "score_path");
  const Tensor x(batch.x);
  const Tensor pos = energy.energies(x, Tensor(batch.y_pos));
  const Tensor neg = energy.energies(x, Tensor(*batch.y_neg));
  return add(mean(softplus(pos)), mean(softplus(scale(-1.0, neg))));
}

Tensor sm_loss(const ScoreSource& source, const LossBatch& batch, std::size_t trace_limit) {
  batch.validate();
  const std::size_t n = batch.size(), d = batch.dim();
  if (d > trace_limit) {
    throw ConfigError("sm_loss: dimension " + std::to_string(d) + " exceeds the trace limit " +
                          std::to_string(trace_limit) + "; use ssm_loss",
                      "loss");
  }
  const Tensor y = source.graph().variable(batch.y_pos);
  const Tensor s = source.score(Tensor(batch.x), y, true);
  Tensor trace(0.0);
  for (std::size_t k = 0; k < d; ++k) {
    Array e = Array::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) e.at(i, k) = 1.0;
    trace = add(trace, projected_jacobian(s, y, Tensor(std::move(e))));
  }
  return batch_mean(add(trace, scale(0.5, norm2(s))), n);
}

Tensor ssm_loss(const ScoreSource& source, const LossBatch& batch, Rng* rng, std::size_t draws,
                Projection kind) {
  batch.validate();
  std::vector<Array> projections;
  if (batch.v) {
    projections = *batch.v;
  } else {
    if (!rng) {
      throw ConfigError("ssm_loss: no projection vectors and no random generator supplied", "v");
    }
    for (std::size_t k = 0; k < draws; ++k) {
      projections.push_back(draw_projections(batch.y_pos.shape, kind, *rng));
    }
  }
  if (projections.empty()) throw ConfigError("ssm_loss: need at least one projection", "K");

  const Tensor y = source.graph().variable(batch.y_pos);
  const Tensor s = source.score(Tensor(batch.x), y, true);
  Tensor proj(0.0);
  for (const Array& v : projections) proj = add(proj, projected_jacobian(s, y, Tensor(v)));
  proj = scale(1.0 / static_cast<double>(projections.size()), proj);
  return batch_mean(add(proj, scale(0.5, norm2(s))), batch.size());
}

Tensor delta_loss(const ScoreSource& source, const LossBatch& batch) {
  batch.validate();
  if (!batch.y_neg) throw ConfigError("delta_loss requires negative samples Y⁻", "y_neg");
  const Array& neg = *batch.y_neg;
  Array target = batch.y_pos;
  for (std::size_t i = 0; i < target.numel(); ++i) target.values[i] -= neg.values[i];
  const Tensor s = source.score(Tensor(batch.x), source.graph().variable(neg), true);
  return batch_mean(scale(0.5, norm2(sub(s, Tensor(std::move(target))))), batch.size());
}

Array interpolate(const Array& y_pos, const Array& y_anchor, const std::vector<double>& t) {
  Array out = y_pos;
  const std::size_t d = y_pos.cols();
  for (std::size_t i = 0; i < y_pos.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = t[i] * y_pos.at(i, j) + (1.0 - t[i]) * y_anchor.at(i, j);
    }
  }
  return out;
}

Array append_time(const Array& x, const std::vector<double>& t) {
  const std::size_t n = x.rows(), k = x.cols();
  Array out = Array::zeros({n, k + 1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) = x.at(i, j);
    out.at(i, k) = t[i];
  }
  return out;
}

Tensor fm_loss(const ScoreSource& velocity, const LossBatch& batch) {
  batch.validate();
  if (!batch.y_anchor) throw ConfigError("fm_loss requires anchor samples Y⁰", "y_anchor");
  if (!batch.t) throw ConfigError("fm_loss requires interpolation times t", "t");
  const Array& anchor = *batch.y_anchor;
  Array target = batch.y_pos;
  for (std::size_t i = 0; i < target.numel(); ++i) target.values[i] -= anchor.values[i];
  const Array yt = interpolate(batch.y_pos, anchor, *batch.t);
  const Tensor v = velocity.score(Tensor(append_time(batch.x, *batch.t)),
                                  velocity.graph().variable(yt), true);
  return batch_mean(scale(0.5, norm2(sub(v, Tensor(std::move(target))))), batch.size());
}

}  // namespace ebmlab

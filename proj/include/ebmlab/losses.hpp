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

// Training objectives. Every loss returns a scalar tensor on the source's
// graph, averaged over the batch and differentiable with respect to whatever
// variables the source depends on.

#ifndef EBMLAB_LOSSES_HPP_
#define EBMLAB_LOSSES_HPP_

#include <optional>
#include <vector>

#include "ebmlab/data.hpp"
#include "ebmlab/models.hpp"

namespace ebmlab {

inline constexpr std::size_t kDefaultTraceLimit = 16;

enum class Projection { kGaussian, kRademacher };

std::string to_string(Projection p);
Projection parse_projection(const std::string& s);

// Shapes: x n×k (k may be 0), every other array n×d, t length n.
struct LossBatch {
  Array x;
  Array y_pos;
  std::optional<Array> y_neg;
  std::optional<Array> y_anchor;
  std::optional<std::vector<double>> t;
  // One n×d array per projection draw.
  std::optional<std::vector<Array>> v;

  std::size_t size() const { return y_pos.rows(); }
  std::size_t dim() const { return y_pos.cols(); }
  void validate() const;
};

// n×d projection vectors with identity covariance.
Array draw_projections(Shape shape, Projection kind, Rng& rng);

// mean softplus(E(x,Y⁺)) + softplus(−E(x,Y⁻)).
Tensor nce_loss(const ScoreSource& energy, const LossBatch& batch);

// mean tr(∇_Y S) + ½‖S‖², the trace from d basis-vector Hessian products.
Tensor sm_loss(const ScoreSource& source, const LossBatch& batch,
               std::size_t trace_limit = kDefaultTraceLimit);

// mean over rows and draws of vᵀ(∇_Y S)v + ½‖S‖². Uses batch.v when present,
// otherwise draws `draws` projections from `rng`.
Tensor ssm_loss(const ScoreSource& source, const LossBatch& batch, Rng* rng = nullptr,
                std::size_t draws = 1, Projection kind = Projection::kGaussian);

// mean ½‖S(x,Y⁻) − (Y⁺ − Y⁻)‖². The score is evaluated at the negative.
Tensor delta_loss(const ScoreSource& source, const LossBatch& batch);

// mean ½‖V([x, t], Y_t) − (Y⁺ − Y⁰)‖² with Y_t = t Y⁺ + (1 − t) Y⁰. The
// velocity network sees t as an extra trailing condition column.
Tensor fm_loss(const ScoreSource& velocity, const LossBatch& batch);

// Y_t for the flow-matching interpolant.
Array interpolate(const Array& y_pos, const Array& y_anchor, const std::vector<double>& t);
// [x, t] as an n×(k+1) condition matrix.
Array append_time(const Array& x, const std::vector<double>& t);

}  // namespace ebmlab

#endif  // EBMLAB_LOSSES_HPP_

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

#ifndef EBMLAB_TRAINING_HPP_
#define EBMLAB_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebmlab/data.hpp"
#include "ebmlab/eval.hpp"
#include "ebmlab/losses.hpp"
#include "ebmlab/models.hpp"

namespace ebmlab {

enum class LossKind { kNce, kSm, kSsm, kDelta, kFm };
enum class ScorePath { kAnalytic, kPredictive };
enum class OptimizerKind { kAdam, kSgd };

std::string to_string(LossKind k);
std::string to_string(ScorePath p);
std::string to_string(OptimizerKind o);
LossKind parse_loss(const std::string& s);
ScorePath parse_score_path(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);

ModelVariant variant_for(ScorePath path);

struct TrainConfig {
  LossKind loss = LossKind::kSsm;
  ScorePath score_path = ScorePath::kAnalytic;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-4;
  std::size_t batch = 10;
  std::size_t steps = 5000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
  std::size_t checkpoint_every = 0;  // 0 disables intermediate checkpoints
  Projection projection = Projection::kGaussian;
  std::size_t projections = 1;  // K
  std::size_t trace_limit = kDefaultTraceLimit;
  // Adds wall-clock milliseconds to metric records. Off by default so that
  // metric logs are reproducible byte for byte.
  bool log_wall_time = false;

  void validate() const;
};

// Bias-corrected Adam, elementwise. `state.step` counts completed updates.
void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
               double lr, double beta1, double beta2, double eps);
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct MetricRecord {
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> score_mse;
  std::optional<double> wall_ms;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricRecord>& log);

// Everything a training run draws from besides the model.
struct TrainingData {
  Dataset dataset;
  std::optional<NegativeSampler> negatives;  // Y⁻ for nce/delta, Y⁰ for fm
  std::optional<ConditionalTask> task;       // for base-predictor negatives
  // Oracle for the score-field metric (d = 2 only).
  std::optional<SyntheticDistribution> oracle;
  std::optional<Grid> grid;
};

struct TrainResult {
  Mlp model;
  OptimizerState optimizer;
  std::vector<MetricRecord> log;
};

// Called after `step` updates whenever checkpoint_every divides step.
using CheckpointHook = std::function<void(std::size_t step, const Mlp&, const OptimizerState&)>;

// Seeded mini-batch training. Every random draw at step s comes from a stream
// keyed by (seed, s), so a run resumed from a checkpoint continues exactly as
// the uninterrupted run would have. `resume` carries the optimizer state
// (including the step counter) saved with that checkpoint.
TrainResult train(const TrainConfig& cfg, const Mlp& model, const TrainingData& data,
                  std::optional<OptimizerState> resume = std::nullopt,
                  const CheckpointHook& on_checkpoint = {});

// The loss of `model` on one batch, as a scalar on `graph`, with the model
// bound as trainable parameters. Exposed for gradient checks.
struct BoundLoss {
  Tensor loss;
  std::vector<Tensor> params;
};
BoundLoss bind_loss(Graph& graph, const TrainConfig& cfg, const Mlp& model, const LossBatch& batch,
                    Rng& rng);

// Assembles the loss batch for training step `step` (0-based).
LossBatch make_batch(const TrainConfig& cfg, const TrainingData& data, std::size_t step, Rng& rng);

// Central differences of the batch loss with respect to the flat parameters
// (the listed coordinates, or all of them) against the backward pass.
struct ParameterCheck {
  double max_rel = 0.0;   // grad_check statistic
  double norm_rel = 0.0;  // relative_error over the checked coordinates
};
ParameterCheck parameter_grad_check(const TrainConfig& cfg, const Mlp& model,
                                    const LossBatch& batch, double h,
                                    std::span<const std::size_t> coords = {});

// Random stream for step `step` of a run seeded with `seed`.
Rng step_rng(std::uint64_t seed, std::uint64_t step);

}  // namespace ebmlab

#endif  // EBMLAB_TRAINING_HPP_

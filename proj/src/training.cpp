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

#include "ebmlab/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ebmlab {

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kNce: return "nce";
    case LossKind::kSm: return "sm";
    case LossKind::kSsm: return "ssm";
    case LossKind::kDelta: return "delta";
    case LossKind::kFm: return "fm";
  }
  return "unknown";
}

std::string to_string(ScorePath p) { return p == ScorePath::kAnalytic ? "analytic" : "predictive"; }

std::string to_string(OptimizerKind o) { return o == OptimizerKind::kAdam ? "adam" : "sgd"; }

LossKind parse_loss(const std::string& s) {
  for (auto k : {LossKind::kNce, LossKind::kSm, LossKind::kSsm, LossKind::kDelta, LossKind::kFm}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown loss '" + s + "'", "loss");
}

ScorePath parse_score_path(const std::string& s) {
  if (s == "analytic") return ScorePath::kAnalytic;
  if (s == "predictive") return ScorePath::kPredictive;
  throw ConfigError("unknown score path '" + s + "'", "score_path");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + s + "'", "optimizer");
}

ModelVariant variant_for(ScorePath path) {
  return path == ScorePath::kAnalytic ? ModelVariant::kEnergy : ModelVariant::kScore;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0", "lr");
  if (batch == 0) throw ConfigError("batch must be >= 1", "batch");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)", "beta1");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)", "beta2");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0", "eps");
  if (projections == 0) throw ConfigError("projections must be >= 1", "projections");
  if (loss == LossKind::kNce && score_path != ScorePath::kAnalytic) {
    throw ConfigError("nce needs an energy model; use score_path=analytic", "score_path");
  }
}

// ---------------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
               double lr, double beta1, double beta2, double eps) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.step == 0 && state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameter count");
  }
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  ++state.step;
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "step,loss,score_mse,wall_ms\n";
  char buf[32];
  for (const auto& r : log) {
    out << r.step;
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << ',' << buf << ',';
    if (r.score_mse) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.score_mse);
      out << buf;
    }
    out << ',';
    if (r.wall_ms) {
      std::snprintf(buf, sizeof buf, "%.3f", *r.wall_ms);
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

Rng step_rng(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  return Rng(seq);
}

LossBatch make_batch(const TrainConfig& cfg, const TrainingData& data, std::size_t /*step*/,
                     Rng& rng) {
  const Dataset& ds = data.dataset;
  if (ds.size() == 0) throw ConfigError("training dataset is empty", "data");
  const std::size_t k = ds.dim_x(), d = ds.dim_y(), n = cfg.batch;
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  LossBatch b;
  b.x = Array::zeros({n, k});
  b.y_pos = Array::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = pick(rng);
    for (std::size_t j = 0; j < k; ++j) b.x.at(i, j) = ds.x.at(r, j);
    for (std::size_t j = 0; j < d; ++j) b.y_pos.at(i, j) = ds.y.at(r, j);
  }
  const ConditionalTask* task = data.task ? &*data.task : nullptr;
  auto negatives = [&]() {
    if (!data.negatives) {
      throw ConfigError("loss " + to_string(cfg.loss) + " needs a negative sampler", "negatives");
    }
    return make_negatives(*data.negatives, task, b.x, b.y_pos, rng);
  };
  switch (cfg.loss) {
    case LossKind::kNce:
    case LossKind::kDelta:
      b.y_neg = negatives();
      break;
    case LossKind::kFm: {
      b.y_anchor = negatives();
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> t(n);
      for (double& ti : t) ti = u(rng);
      b.t = std::move(t);
      break;
    }
    case LossKind::kSsm: {
      std::vector<Array> v;
      for (std::size_t p = 0; p < cfg.projections; ++p) {
        v.push_back(draw_projections({n, d}, cfg.projection, rng));
      }
      b.v = std::move(v);
      break;
    }
    case LossKind::kSm:
      break;
  }
  return b;
}

BoundLoss bind_loss(Graph& graph, const TrainConfig& cfg, const Mlp& model, const LossBatch& batch,
                    Rng& rng) {
  BoundMlp bound(graph, model, true);
  const ScoreSource source = ScoreSource::from_model(bound);
  BoundLoss out;
  out.params = bound.parameters();
  switch (cfg.loss) {
    case LossKind::kNce: out.loss = nce_loss(source, batch); break;
    case LossKind::kSm: out.loss = sm_loss(source, batch, cfg.trace_limit); break;
    case LossKind::kSsm:
      out.loss = ssm_loss(source, batch, &rng, cfg.projections, cfg.projection);
      break;
    case LossKind::kDelta: out.loss = delta_loss(source, batch); break;
    case LossKind::kFm: out.loss = fm_loss(source, batch); break;
  }
  return out;
}

ParameterCheck parameter_grad_check(const TrainConfig& cfg, const Mlp& model,
                                    const LossBatch& batch, double h,
                                    std::span<const std::size_t> coords) {
  const std::vector<double> theta = model.flat_parameters();
  std::vector<double> analytic;
  {
    Graph g;
    Rng rng(cfg.seed);
    const BoundLoss bound = bind_loss(g, cfg, model, batch, rng);
    const auto grads = gradients(bound.loss, bound.params, false, Unreachable::kZero);
    for (const Tensor& t : grads) analytic.insert(analytic.end(), t.values().begin(), t.values().end());
  }
  Mlp probe = model;
  auto f = [&](std::span<const double> p) {
    probe.set_flat_parameters(p);
    Graph g;
    Rng rng(cfg.seed);
    return bind_loss(g, cfg, probe, batch, rng).loss.item();
  };
  ParameterCheck out;
  out.max_rel = grad_check(f, analytic, theta, h, coords);

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(theta.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }
  std::vector<double> a, n;
  std::vector<double> p = theta;
  for (std::size_t i : coords) {
    p[i] = theta[i] + h;
    const double up = f(p);
    p[i] = theta[i] - h;
    const double down = f(p);
    p[i] = theta[i];
    a.push_back(analytic[i]);
    n.push_back((up - down) / (2.0 * h));
  }
  out.norm_rel = relative_error(a, n);
  return out;
}

namespace {

void check_compatible(const TrainConfig& cfg, const Mlp& model, const TrainingData& data) {
  cfg.validate();
  if (model.spec().variant != variant_for(cfg.score_path)) {
    throw ConfigError("model is a " + to_string(model.spec().variant) + " network but score_path is " +
                          to_string(cfg.score_path),
                      "score_path");
  }
  const std::size_t want_x = data.dataset.dim_x() + (cfg.loss == LossKind::kFm ? 1 : 0);
  if (model.spec().dim_x != want_x || model.spec().dim_y != data.dataset.dim_y()) {
    throw ConfigError("model dimensions (dim_x=" + std::to_string(model.spec().dim_x) +
                          ", dim_y=" + std::to_string(model.spec().dim_y) +
                          ") do not match the data (dim_x=" + std::to_string(want_x) +
                          ", dim_y=" + std::to_string(data.dataset.dim_y()) + ")",
                      "model");
  }
  const bool needs_negatives = cfg.loss == LossKind::kNce || cfg.loss == LossKind::kDelta ||
                               cfg.loss == LossKind::kFm;
  if (needs_negatives && !data.negatives) {
    throw ConfigError("loss " + to_string(cfg.loss) + " needs a negative sampler", "negatives");
  }
  if (cfg.loss == LossKind::kSm && data.dataset.dim_y() > cfg.trace_limit) {
    throw ConfigError("sm: dimension exceeds the trace limit; use ssm", "loss");
  }
}

std::optional<double> field_metric(const Mlp& model, const TrainingData& data) {
  if (!data.oracle || data.oracle->dim() != 2 || model.spec().dim_x != 0) return std::nullopt;
  Graph g;
  const BoundMlp bound(g, model, false);
  return score_field_mse(ScoreSource::from_model(bound), *data.oracle, data.grid.value_or(Grid{}));
}

double loss_value(const TrainConfig& cfg, const Mlp& model, const TrainingData& data,
                  std::size_t step) {
  Rng rng = step_rng(cfg.seed, step);
  const LossBatch batch = make_batch(cfg, data, step, rng);
  Graph g;
  return bind_loss(g, cfg, model, batch, rng).loss.item();
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Mlp& model, const TrainingData& data,
                  std::optional<OptimizerState> resume, const CheckpointHook& on_checkpoint) {
  check_compatible(cfg, model, data);
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto wall = [&]() -> std::optional<double> {
    if (!cfg.log_wall_time) return std::nullopt;
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  TrainResult result;
  result.model = model;
  result.optimizer = resume.value_or(OptimizerState{});
  const std::size_t start = result.optimizer.step;

  if (start == 0 && cfg.eval_every > 0) {
    result.log.push_back({0, loss_value(cfg, model, data, 0),
                          field_metric(model, data), wall()});
  }

  std::vector<double> params = result.model.flat_parameters();
  for (std::size_t step = start; step < cfg.steps; ++step) {
    Rng rng = step_rng(cfg.seed, step);
    double loss = 0.0;
    std::vector<double> flat;
    try {
      const LossBatch batch = make_batch(cfg, data, step, rng);
      Graph graph;
      const BoundLoss bound = bind_loss(graph, cfg, result.model, batch, rng);
      loss = bound.loss.item();
      if (std::isfinite(loss)) {
        const auto grads = gradients(bound.loss, bound.params, false, Unreachable::kZero);
        for (const Tensor& g : grads) flat.insert(flat.end(), g.values().begin(), g.values().end());
      }
    } catch (const NumericError& e) {
      if (e.step() >= 0) throw;
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step),
                         static_cast<std::int64_t>(step));
    }
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss at step " + std::to_string(step),
                         static_cast<std::int64_t>(step));
    }
    for (double g : flat) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient at step " + std::to_string(step),
                           static_cast<std::int64_t>(step));
      }
    }
    if (cfg.optimizer == OptimizerKind::kAdam) {
      adam_step(params, flat, result.optimizer, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    } else {
      sgd_step(params, flat, cfg.lr);
      ++result.optimizer.step;
    }
    result.model.set_flat_parameters(params);

    const std::size_t done = step + 1;
    if (cfg.eval_every > 0 && (done % cfg.eval_every == 0 || done == cfg.steps)) {
      result.log.push_back({done, loss, field_metric(result.model, data), wall()});
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      on_checkpoint(done, result.model, result.optimizer);
    }
  }
  return result;
}

}  // namespace ebmlab

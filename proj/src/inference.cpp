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

#include "ebmlab/inference.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "ebmlab/data.hpp"

namespace ebmlab {

std::string to_string(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::kLangevin: return "langevin";
    case SamplerMethod::kDenoise: return "denoise";
    case SamplerMethod::kOneStep: return "one-step";
  }
  return "unknown";
}

SamplerMethod parse_sampler_method(const std::string& s) {
  if (s == "langevin") return SamplerMethod::kLangevin;
  if (s == "denoise") return SamplerMethod::kDenoise;
  if (s == "one-step" || s == "one_step") return SamplerMethod::kOneStep;
  throw ConfigError("unknown sampler method '" + s + "'", "method");
}

std::vector<ScheduleEntry> constant_schedule(ScheduleEntry entry, std::size_t steps) {
  return std::vector<ScheduleEntry>(steps, entry);
}

void SamplerConfig::validate() const {
  if (record_every == 0) throw ConfigError("record_every must be >= 1", "record_every");
  if (!std::isfinite(rho)) throw ConfigError("rho must be finite", "rho");
  if (method == SamplerMethod::kDenoise) {
    if (schedule.size() < steps) {
      throw ConfigError("denoise schedule has " + std::to_string(schedule.size()) +
                            " entries for " + std::to_string(steps) + " steps",
                        "schedule");
    }
    for (const auto& e : schedule) {
      if (!(e.alpha > 0.0)) throw ConfigError("schedule alpha must be > 0", "alpha");
      if (!(e.sigma >= 0.0)) throw ConfigError("schedule sigma must be >= 0", "sigma");
    }
  }
}

SamplerConfig classical_langevin(double rho, std::size_t steps, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.method = SamplerMethod::kDenoise;
  cfg.rho = rho;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.schedule = constant_schedule({1.0, rho, std::sqrt(2.0 * rho)}, steps);
  return cfg;
}

Array evaluate_score(const ScoreSource& source, const Array& x, const Array& y) {
  GraphScope scope(source.graph());
  return source.score(Tensor(x), Tensor(y), false).array();
}

namespace {

using Update = std::function<void(Array& y, const Array& s, std::size_t step)>;

std::vector<double> row_norms(const Array& a) {
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += v * v;
    out[i] = std::sqrt(s);
  }
  return out;
}

void check_iterate(const Array& y, double limit, std::size_t step) {
  for (double v : y.values) {
    if (!std::isfinite(v)) {
      throw NumericError("sampler produced a non-finite iterate at step " + std::to_string(step),
                         static_cast<std::int64_t>(step));
    }
  }
  for (double n : row_norms(y)) {
    if (n > limit) {
      throw NumericError("sampler diverged at step " + std::to_string(step) + " (norm " +
                             std::to_string(n) + ")",
                         static_cast<std::int64_t>(step));
    }
  }
}

Trajectory iterate(const ScoreSource& source, const Array& x, const Array& y_init,
                   const SamplerConfig& cfg, const Update& update) {
  cfg.validate();
  if (y_init.rank() != 2) throw ShapeError("sampler: Y must be an n x d matrix");
  const Array xr = as_rows(x, y_init.rows());
  Trajectory traj;
  Array y = y_init;
  for (std::size_t step = 0;; ++step) {
    const bool record = step % cfg.record_every == 0;
    const bool last = step == cfg.steps;
    if (last && !record) break;
    const Array s = evaluate_score(source, xr, y);
    if (record) traj.iterates.push_back({step, y, row_norms(s)});
    if (last) break;
    update(y, s, step);
    check_iterate(y, cfg.divergence_limit, step + 1);
  }
  traj.final = std::move(y);
  return traj;
}

}  // namespace

Trajectory langevin_run(const ScoreSource& source, const Array& x, const Array& y_init,
                        const SamplerConfig& cfg) {
  const double rho = cfg.rho;
  return iterate(source, x, y_init, cfg, [rho](Array& y, const Array& s, std::size_t) {
    for (std::size_t i = 0; i < y.numel(); ++i) y.values[i] = y.values[i] + rho * s.values[i];
  });
}

Trajectory denoise_run(const ScoreSource& source, const Array& x, const Array& y_init,
                       const SamplerConfig& cfg) {
  std::vector<Rng> chains;
  for (std::size_t i = 0; i < y_init.rows(); ++i) chains.emplace_back(cfg.seed + cfg.chain_offset + i);
  const auto& schedule = cfg.schedule;
  return iterate(source, x, y_init, cfg, [&](Array& y, const Array& s, std::size_t step) {
    const ScheduleEntry& e = schedule[step];
    const double inv_sqrt_alpha = 1.0 / std::sqrt(e.alpha);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t k = i * d + j;
        const double z = normal(chains[i]);
        double next = inv_sqrt_alpha * (y.values[k] + e.beta * s.values[k]);
        if (e.sigma != 0.0) next += e.sigma * z;
        y.values[k] = next;
      }
    }
  });
}

Array one_step(const ScoreSource& source, const Array& x, const Array& y_neg) {
  const Array s = evaluate_score(source, as_rows(x, y_neg.rows()), y_neg);
  Array out = y_neg;
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = y_neg.values[i] + s.values[i];
  return out;
}

Trajectory run_sampler(const ScoreSource& source, const Array& x, const Array& y_init,
                       const SamplerConfig& cfg) {
  switch (cfg.method) {
    case SamplerMethod::kLangevin: return langevin_run(source, x, y_init, cfg);
    case SamplerMethod::kDenoise: return denoise_run(source, x, y_init, cfg);
    case SamplerMethod::kOneStep: {
      const Array xr = as_rows(x, y_init.rows());
      Trajectory t;
      const Array s0 = evaluate_score(source, xr, y_init);
      t.iterates.push_back({0, y_init, row_norms(s0)});
      Array y1 = y_init;
      for (std::size_t i = 0; i < y1.numel(); ++i) y1.values[i] += s0.values[i];
      check_iterate(y1, cfg.divergence_limit, 1);
      t.iterates.push_back({1, y1, row_norms(evaluate_score(source, xr, y1))});
      t.final = std::move(y1);
      return t;
    }
  }
  throw ConfigError("unknown sampler method", "method");
}

void write_trajectory_csv(const std::string& path, const Trajectory& trajectory) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::size_t d = trajectory.final.rank() == 2 ? trajectory.final.cols() : 0;
  out << "step";
  for (std::size_t j = 0; j < d; ++j) out << ",dim_" << j;
  out << ",score_norm\n";
  char buf[32];
  for (const auto& snap : trajectory.iterates) {
    for (std::size_t i = 0; i < snap.y.rows(); ++i) {
      out << snap.step;
      for (double v : snap.y.row(i)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
      std::snprintf(buf, sizeof buf, "%.17g", snap.score_norms[i]);
      out << ',' << buf << '\n';
    }
  }
}

}  // namespace ebmlab

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

#ifndef EBMLAB_INFERENCE_HPP_
#define EBMLAB_INFERENCE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ebmlab/models.hpp"

namespace ebmlab {

enum class SamplerMethod { kLangevin, kDenoise, kOneStep };

std::string to_string(SamplerMethod m);
SamplerMethod parse_sampler_method(const std::string& s);

// Y ← (1/√alpha)(Y + beta·S) + sigma·Z
struct ScheduleEntry {
  double alpha = 1.0;
  double beta = 1e-2;
  double sigma = 0.0;
};

std::vector<ScheduleEntry> constant_schedule(ScheduleEntry entry, std::size_t steps);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::kLangevin;
  double rho = 1e-2;
  std::size_t steps = 0;
  std::vector<ScheduleEntry> schedule;  // denoise only, one entry per step
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  // Chains are rows; row i draws its noise from seed + chain_offset + i.
  std::size_t chain_offset = 0;
  // Abort once any chain's norm exceeds this.
  double divergence_limit = 1e6;

  void validate() const;
};

// Denoise schedule that adds the classical Langevin noise term:
// alpha = 1, beta = rho, sigma = sqrt(2 rho).
SamplerConfig classical_langevin(double rho, std::size_t steps, std::uint64_t seed);

struct Trajectory {
  struct Snapshot {
    std::size_t step = 0;
    Array y;                         // n×d
    std::vector<double> score_norms;  // ‖S(x, Y_i)‖ per row at this iterate
  };
  std::vector<Snapshot> iterates;  // iterates[0] is the initialisation
  Array final;
};

// Y ← Y + rho·S(x, Y), no noise term.
Trajectory langevin_run(const ScoreSource& source, const Array& x, const Array& y_init,
                        const SamplerConfig& cfg);

Trajectory denoise_run(const ScoreSource& source, const Array& x, const Array& y_init,
                       const SamplerConfig& cfg);

// Y⁻ + S(x, Y⁻).
Array one_step(const ScoreSource& source, const Array& x, const Array& y_neg);

// Dispatch on cfg.method; one_step yields a two-entry trajectory.
Trajectory run_sampler(const ScoreSource& source, const Array& x, const Array& y_init,
                       const SamplerConfig& cfg);

// Header step,dim_0,...,dim_{d-1},score_norm; one line per chain per
// recorded iterate, chains in row order.
void write_trajectory_csv(const std::string& path, const Trajectory& trajectory);

// Evaluates scores without leaving nodes on the source's graph.
Array evaluate_score(const ScoreSource& source, const Array& x, const Array& y);

}  // namespace ebmlab

#endif  // EBMLAB_INFERENCE_HPP_

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

// Verification harnesses: finite-difference checks, the Hutchinson trace
// identity, score-field error on a fixed grid, two-sample distances and the
// inference-step sweep.

#ifndef EBMLAB_EVAL_HPP_
#define EBMLAB_EVAL_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebmlab/data.hpp"
#include "ebmlab/losses.hpp"
#include "ebmlab/models.hpp"

namespace ebmlab {

// Regular lo..hi grid in each of two dimensions, resolution points per axis,
// x-major order.
struct Grid {
  double lo = -4.0;
  double hi = 4.0;
  std::size_t resolution = 41;

  Array points() const;  // resolution²×2
};

// ---------------------------------------------------------------------------
// Finite differences

inline constexpr double kGradCheckFloor = 1e-8;

// Central differences of `f` at `point`, coordinate by coordinate (all of them
// when `coords` is empty), against `analytic`. Returns
// max |a − n| / max(|n|, 1e-8).
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> analytic, std::span<const double> point, double h,
                  std::span<const std::size_t> coords = {});

// Analytic score of an energy source against −∂E/∂Y by central differences at
// a single point (x of length k, y of length d).
double score_grad_check(const ScoreSource& source, const Array& x, const Array& y, double h);

// ‖a − b‖₂ / max(‖b‖₂, 1e-8).
double relative_error(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Hutchinson

struct HutchinsonResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  double exact = 0.0;
  double z = 0.0;
  bool pass = false;  // |mean − exact| <= 3 stderr
};

// Exact tr(∇_Y S) at one point from d basis-vector products.
double exact_trace(const ScoreSource& source, const Array& x, const Array& y,
                   std::size_t trace_limit = kDefaultTraceLimit);

// `draws` samples of vᵀ(∇_Y S)v at one point.
std::vector<double> projection_terms(const ScoreSource& source, const Array& x, const Array& y,
                                     std::size_t draws, std::uint64_t seed,
                                     Projection kind = Projection::kGaussian);

HutchinsonResult hutchinson_check(const ScoreSource& source, const Array& x, const Array& y,
                                  std::size_t draws, std::uint64_t seed,
                                  Projection kind = Projection::kGaussian,
                                  std::size_t trace_limit = kDefaultTraceLimit);

// ---------------------------------------------------------------------------
// Fields and samples

// Mean over grid points of ‖S_model − ∇ log p‖². Unconditional 2-D only.
double score_field_mse(const ScoreSource& source, const SyntheticDistribution& dist,
                       const Grid& grid);
// Per-point squared error in grid order.
std::vector<double> score_field_errors(const ScoreSource& source, const SyntheticDistribution& dist,
                                       const Grid& grid);

// E‖a−b‖ − ½E‖a−a′‖ − ½E‖b−b′‖ over all pairs (diagonal included).
double energy_distance(const Array& a, const Array& b);
// Biased RBF MMD² with the median pairwise distance of the pooled sample as bandwidth.
double mmd_rbf(const Array& a, const Array& b);

// ---------------------------------------------------------------------------
// Reports

struct Metric {
  std::string name;
  double value = 0.0;
  std::optional<double> threshold;
  std::string op;  // "<=", "<", ">=", ">" when a threshold is set
  std::vector<std::uint64_t> seeds;

  std::optional<bool> pass() const;
};

struct EvalReport {
  std::string name;
  std::vector<Metric> metrics;
  std::vector<std::vector<std::string>> table;  // optional, first row is the header
  std::optional<Grid> grid;
  std::vector<double> grid_values;

  void add(Metric m) { metrics.push_back(std::move(m)); }
  const Metric* find(const std::string& name) const;
  bool passed() const;
};

std::string report_to_json(const EvalReport& report);
void write_report_json(const std::string& path, const EvalReport& report);
// Heatmap table: header "y\x,<x values>", one line per y value.
void write_grid_csv(const std::string& path, const Grid& grid, std::span<const double> values);

// ---------------------------------------------------------------------------
// Inference-step sweep

struct SweepConfig {
  double rho = 1.0;
  std::size_t heldout = 500;
  std::uint64_t seed = 12345;
};

struct SweepRow {
  std::size_t steps = 0;
  double mse = 0.0;  // mean over items of ‖Ŷ − Y⁺‖²; +inf after divergence
  bool diverged = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  bool one_step_beats_zero = false;
  bool degrades_at_largest = false;  // mse(max N) >= mse(1)
  std::size_t best_steps = 0;
  bool one_step_within_5pct_of_best = false;
};

// Starts every held-out item at the base predictor Â x and runs Y ← Y + rho S
// for each listed step count.
SweepResult step_sweep(const ScoreSource& source, const ConditionalTask& task,
                       std::span<const std::size_t> steps_list, const SweepConfig& cfg);
EvalReport sweep_report(const SweepResult& result, const SweepConfig& cfg);

}  // namespace ebmlab

#endif  // EBMLAB_EVAL_HPP_

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

#include "ebmlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "ebmlab/inference.hpp"
#include "json.hpp"

namespace ebmlab {

Array Grid::points() const {
  if (resolution < 2) throw ConfigError("grid resolution must be >= 2", "resolution");
  Array p = Array::zeros({resolution * resolution, 2});
  const double step = (hi - lo) / static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      p.at(i * resolution + j, 0) = lo + step * static_cast<double>(i);
      p.at(i * resolution + j, 1) = lo + step * static_cast<double>(j);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> analytic, std::span<const double> point, double h,
                  std::span<const std::size_t> coords) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ConfigError("grad_check: h must lie in [1e-7, 1e-3]", "h");
  if (analytic.size() != point.size()) throw ShapeError("grad_check: gradient/point size mismatch");
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(point.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }
  std::vector<double> p(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(p);
    p[i] = orig - h;
    const double down = f(p);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite gradient at coordinate " + std::to_string(i));
    }
    const double err =
        std::abs(analytic[i] - numeric) / std::max(std::abs(numeric), kGradCheckFloor);
    worst = std::max(worst, err);
  }
  return worst;
}

double score_grad_check(const ScoreSource& source, const Array& x, const Array& y, double h) {
  const std::size_t d = y.numel();
  const Array xr = as_rows(x, 1);
  const Array yr = as_rows(y, 1);
  const Array s = evaluate_score(source, xr, yr);
  std::vector<double> neg_grad(d);
  for (std::size_t j = 0; j < d; ++j) neg_grad[j] = -s.values[j];
  auto f = [&](std::span<const double> pt) {
    GraphScope scope(source.graph());
    return energy(source, xr, Array::matrix(1, d, {pt.begin(), pt.end()})).item();
  };
  return grad_check(f, neg_grad, yr.values, h);
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), kGradCheckFloor);
}

// ---------------------------------------------------------------------------

double exact_trace(const ScoreSource& source, const Array& x, const Array& y,
                   std::size_t trace_limit) {
  const std::size_t d = y.numel();
  if (d > trace_limit) {
    throw ConfigError("exact_trace: dimension " + std::to_string(d) + " exceeds the trace limit",
                      "trace_limit");
  }
  GraphScope scope(source.graph());
  const Tensor yv = source.graph().variable(as_rows(y, 1));
  const Tensor s = source.score(Tensor(as_rows(x, 1)), yv, true);
  if (!s.tracked() || !source.graph().depends_on(s, yv)) return 0.0;
  double trace = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    Array e = Array::zeros({1, d});
    e.values[k] = 1.0;
    const Tensor ev(e);
    trace += gradient(dot(ev, s), yv, false).values()[k];
  }
  return trace;
}

std::vector<double> projection_terms(const ScoreSource& source, const Array& x, const Array& y,
                                     std::size_t draws, std::uint64_t seed, Projection kind) {
  constexpr std::size_t kChunk = 1000;
  const std::size_t d = y.numel();
  Rng rng(seed);
  std::vector<double> terms;
  terms.reserve(draws);
  for (std::size_t start = 0; start < draws; start += kChunk) {
    const std::size_t m = std::min(kChunk, draws - start);
    const Array v = draw_projections({m, d}, kind, rng);
    GraphScope scope(source.graph());
    const Tensor yv = source.graph().variable(as_rows(y, m));
    const Tensor s = source.score(Tensor(as_rows(x, m)), yv, true);
    Array jtv = Array::zeros({m, d});
    if (s.tracked() && source.graph().depends_on(s, yv)) {
      jtv = gradient(dot(Tensor(v), s), yv, false).array();
    }
    for (std::size_t i = 0; i < m; ++i) {
      double t = 0.0;
      for (std::size_t j = 0; j < d; ++j) t += v.at(i, j) * jtv.at(i, j);
      terms.push_back(t);
    }
  }
  return terms;
}

HutchinsonResult hutchinson_check(const ScoreSource& source, const Array& x, const Array& y,
                                  std::size_t draws, std::uint64_t seed, Projection kind,
                                  std::size_t trace_limit) {
  if (draws < 2) throw ConfigError("hutchinson_check needs at least 2 draws", "draws");
  HutchinsonResult r;
  r.exact = exact_trace(source, x, y, trace_limit);
  const auto terms = projection_terms(source, x, y, draws, seed, kind);
  const double n = static_cast<double>(terms.size());
  r.mean = std::accumulate(terms.begin(), terms.end(), 0.0) / n;
  double ss = 0.0;
  for (double t : terms) ss += (t - r.mean) * (t - r.mean);
  r.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  const double diff = r.mean - r.exact;
  r.z = r.stderr_ > 0.0 ? diff / r.stderr_ : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
  r.pass = std::abs(diff) <= 3.0 * r.stderr_;
  return r;
}

// ---------------------------------------------------------------------------

std::vector<double> score_field_errors(const ScoreSource& source, const SyntheticDistribution& dist,
                                       const Grid& grid) {
  if (dist.dim() != 2) throw ConfigError("score-field error needs a 2-D distribution", "dim");
  const Array pts = grid.points();
  const Array model = evaluate_score(source, Array::zeros({pts.rows(), 0}), pts);
  const Array truth = dist.score(pts);
  std::vector<double> err(pts.rows());
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    double e = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      const double diff = model.at(i, j) - truth.at(i, j);
      e += diff * diff;
    }
    err[i] = e;
  }
  return err;
}

double score_field_mse(const ScoreSource& source, const SyntheticDistribution& dist,
                       const Grid& grid) {
  const auto err = score_field_errors(source, dist, grid);
  return std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

double mean_pairwise(const Array& a, const Array& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < b.rows(); ++j) row += distance(a.row(i), b.row(j));
    total += row;
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

void check_samples(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() == 0 || b.rows() == 0) {
    throw ShapeError("two-sample metric: both batches must be non-empty n x d matrices");
  }
  if (a.cols() != b.cols()) {
    throw ShapeError("two-sample metric: dimensions differ, " + shape_string(a.shape) + " vs " +
                     shape_string(b.shape));
  }
}

}  // namespace

double energy_distance(const Array& a, const Array& b) {
  check_samples(a, b);
  const double ab = mean_pairwise(a, b);
  const double aa = mean_pairwise(a, a);
  const double bb = mean_pairwise(b, b);
  return ab - 0.5 * aa - 0.5 * bb;
}

double mmd_rbf(const Array& a, const Array& b) {
  check_samples(a, b);
  std::vector<double> dists;
  Array pooled = Array::zeros({a.rows() + b.rows(), a.cols()});
  std::copy(a.values.begin(), a.values.end(), pooled.values.begin());
  std::copy(b.values.begin(), b.values.end(), pooled.values.begin() + a.numel());
  for (std::size_t i = 0; i < pooled.rows(); ++i) {
    for (std::size_t j = i + 1; j < pooled.rows(); ++j) {
      dists.push_back(distance(pooled.row(i), pooled.row(j)));
    }
  }
  double bandwidth = 1.0;
  if (!dists.empty()) {
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    if (*mid > 0.0) bandwidth = *mid;
  }
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  auto kmean = [&](const Array& p, const Array& q) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < q.rows(); ++j) {
        const double dd = distance(p.row(i), q.row(j));
        total += std::exp(-gamma * dd * dd);
      }
    }
    return total / (static_cast<double>(p.rows()) * static_cast<double>(q.rows()));
  };
  return kmean(a, a) + kmean(b, b) - 2.0 * kmean(a, b);
}

// ---------------------------------------------------------------------------

std::optional<bool> Metric::pass() const {
  if (!threshold) return std::nullopt;
  const double t = *threshold;
  if (op == "<=") return value <= t;
  if (op == "<") return value < t;
  if (op == ">=") return value >= t;
  if (op == ">") return value > t;
  throw ConfigError("metric " + name + ": unknown comparator '" + op + "'", "op");
}

const Metric* EvalReport::find(const std::string& metric) const {
  for (const auto& m : metrics) {
    if (m.name == metric) return &m;
  }
  return nullptr;
}

bool EvalReport::passed() const {
  return std::all_of(metrics.begin(), metrics.end(),
                     [](const Metric& m) { return m.pass().value_or(true); });
}

namespace {

nlohmann::ordered_json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["name"] = report.name;
  j["passed"] = report.passed();
  auto metrics = nlohmann::ordered_json::array();
  for (const auto& m : report.metrics) {
    nlohmann::ordered_json e;
    e["name"] = m.name;
    e["value"] = number_or_string(m.value);
    e["threshold"] = m.threshold ? number_or_string(*m.threshold) : nlohmann::ordered_json();
    e["op"] = m.threshold ? nlohmann::ordered_json(m.op) : nlohmann::ordered_json();
    const auto p = m.pass();
    e["pass"] = p ? nlohmann::ordered_json(*p) : nlohmann::ordered_json();
    e["seeds"] = m.seeds;
    metrics.push_back(std::move(e));
  }
  j["metrics"] = std::move(metrics);
  if (!report.table.empty()) j["table"] = report.table;
  if (report.grid) {
    j["grid"] = {{"lo", report.grid->lo},
                 {"hi", report.grid->hi},
                 {"resolution", report.grid->resolution}};
  }
  return j.dump(2) + "\n";
}

void write_report_json(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << report_to_json(report);
}

void write_grid_csv(const std::string& path, const Grid& grid, std::span<const double> values) {
  const std::size_t r = grid.resolution;
  if (values.size() != r * r) throw ShapeError("write_grid_csv: value count does not match grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const double step = (grid.hi - grid.lo) / static_cast<double>(r - 1);
  char buf[32];
  out << "y\\x";
  for (std::size_t i = 0; i < r; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", grid.lo + step * static_cast<double>(i));
    out << ',' << buf;
  }
  out << '\n';
  for (std::size_t j = 0; j < r; ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", grid.lo + step * static_cast<double>(j));
    out << buf;
    for (std::size_t i = 0; i < r; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i * r + j]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

double mean_squared_norm(const Array& a, const Array& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return total / static_cast<double>(a.rows());
}

}  // namespace

SweepResult step_sweep(const ScoreSource& source, const ConditionalTask& task,
                       std::span<const std::size_t> steps_list, const SweepConfig& cfg) {
  if (steps_list.empty()) throw ConfigError("step_sweep needs at least one step count", "steps");
  const Dataset held = sample_task(task, cfg.heldout, cfg.seed);
  std::vector<std::size_t> order(steps_list.begin(), steps_list.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  SweepResult result;
  Array y = task.base_prediction(held.x);
  std::size_t done = 0;
  bool diverged = false;
  SamplerConfig sc;
  sc.method = SamplerMethod::kLangevin;
  sc.rho = cfg.rho;
  for (std::size_t n : order) {
    SweepRow row;
    row.steps = n;
    if (!diverged && n > done) {
      sc.steps = n - done;
      sc.record_every = sc.steps;
      try {
        y = langevin_run(source, held.x, y, sc).final;
      } catch (const NumericError&) {
        diverged = true;
      }
      done = n;
    }
    row.diverged = diverged;
    row.mse = diverged ? std::numeric_limits<double>::infinity() : mean_squared_norm(y, held.y);
    result.rows.push_back(row);
  }

  auto mse_at = [&](std::size_t n) -> std::optional<double> {
    for (const auto& r : result.rows) {
      if (r.steps == n) return r.mse;
    }
    return std::nullopt;
  };
  const auto best = std::min_element(result.rows.begin(), result.rows.end(),
                                     [](const SweepRow& a, const SweepRow& b) { return a.mse < b.mse; });
  result.best_steps = best->steps;
  const auto zero = mse_at(0), one = mse_at(1);
  const double largest = result.rows.back().mse;
  if (zero && one) result.one_step_beats_zero = *one < *zero;
  if (one) {
    result.degrades_at_largest = largest >= *one;
    result.one_step_within_5pct_of_best = *one <= 1.05 * best->mse;
  }
  return result;
}

EvalReport sweep_report(const SweepResult& result, const SweepConfig& cfg) {
  EvalReport report;
  report.name = "step-sweep";
  report.table.push_back({"steps", "mse", "diverged"});
  char buf[32];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof buf, "%.6g", r.mse);
    report.table.push_back({std::to_string(r.steps), buf, r.diverged ? "yes" : "no"});
    report.add({"mse_steps_" + std::to_string(r.steps), r.mse, std::nullopt, "", {cfg.seed}});
  }
  report.add({"best_steps", static_cast<double>(result.best_steps), std::nullopt, "", {cfg.seed}});
  report.add({"one_step_beats_zero", result.one_step_beats_zero ? 1.0 : 0.0, std::nullopt, "",
              {cfg.seed}});
  report.add({"degrades_at_largest", result.degrades_at_largest ? 1.0 : 0.0, std::nullopt, "",
              {cfg.seed}});
  report.add({"one_step_within_5pct_of_best", result.one_step_within_5pct_of_best ? 1.0 : 0.0,
              std::nullopt, "", {cfg.seed}});
  return report;
}

}  // namespace ebmlab

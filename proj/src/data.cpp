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

#include "ebmlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

namespace ebmlab {

Array standard_normal(Shape shape, Rng& rng) {
  Array a = Array::zeros(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : a.values) v = n(rng);
  return a;
}

// ---------------------------------------------------------------------------
// SyntheticDistribution

namespace {

void require_positive(const std::vector<double>& v, const char* what) {
  for (double s : v) {
    if (!(s > 0.0)) throw ConfigError(std::string(what) + " must be > 0", what);
  }
}

double diag_gaussian_log_pdf(std::span<const double> y, const std::vector<double>& mean,
                             const std::vector<double>& sigma) {
  double lp = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = (y[i] - mean[i]) / sigma[i];
    lp += -0.5 * z * z - std::log(sigma[i]) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

double norm_of(std::span<const double> y) {
  double s = 0.0;
  for (double v : y) s += v * v;
  return std::sqrt(s);
}

// Radial density ρ^(d−1) exp(−(ρ−r)²/(2w²)) is log-concave with curvature at
// most −1/w², so a normal proposal at the mode with scale w dominates it.
double sample_ring_radius(const RingSpec& ring, Rng& rng) {
  const double dm1 = static_cast<double>(ring.dim) - 1.0;
  const double w2 = ring.width * ring.width;
  const double mode = 0.5 * (ring.radius + std::sqrt(ring.radius * ring.radius + 4.0 * dm1 * w2));
  auto log_f = [&](double rho) {
    const double t = rho - ring.radius;
    return (dm1 > 0.0 ? dm1 * std::log(rho) : 0.0) - t * t / (2.0 * w2);
  };
  const double log_f_mode = log_f(mode);
  std::normal_distribution<double> proposal(mode, ring.width);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const double rho = proposal(rng);
    if (rho <= 0.0) continue;
    const double t = rho - mode;
    const double log_accept = log_f(rho) - log_f_mode + t * t / (2.0 * w2);
    if (std::log(u(rng)) < log_accept) return rho;
  }
}

}  // namespace

SyntheticDistribution SyntheticDistribution::gaussian(std::vector<double> mean, double sigma) {
  GaussianSpec spec;
  spec.sigma.assign(mean.size(), sigma);
  spec.mean = std::move(mean);
  return gaussian(std::move(spec));
}

SyntheticDistribution SyntheticDistribution::gaussian(GaussianSpec spec) {
  if (spec.mean.empty()) throw ConfigError("gaussian needs a mean", "mean");
  if (spec.sigma.size() != spec.mean.size()) {
    throw ConfigError("gaussian sigma and mean differ in length", "sigma");
  }
  require_positive(spec.sigma, "sigma");
  SyntheticDistribution d;
  d.dim_ = spec.mean.size();
  d.spec_ = std::move(spec);
  return d;
}

SyntheticDistribution SyntheticDistribution::mixture(MixtureSpec spec) {
  const std::size_t k = spec.weights.size();
  if (k == 0 || spec.means.size() != k || spec.sigmas.size() != k) {
    throw ConfigError("mixture weights, means and sigmas must have the same count", "weights");
  }
  double total = 0.0;
  for (double w : spec.weights) {
    if (w < 0.0) throw ConfigError("mixture weights must be >= 0", "weights");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1", "weights");
  const std::size_t d = spec.means[0].size();
  if (d == 0) throw ConfigError("mixture means must be non-empty", "means");
  for (std::size_t c = 0; c < k; ++c) {
    if (spec.means[c].size() != d || spec.sigmas[c].size() != d) {
      throw ConfigError("mixture components must share one dimension", "means");
    }
    require_positive(spec.sigmas[c], "sigmas");
  }
  SyntheticDistribution dist;
  dist.dim_ = d;
  dist.spec_ = std::move(spec);
  return dist;
}

SyntheticDistribution SyntheticDistribution::ring(RingSpec spec) {
  if (!(spec.radius > 0.0)) throw ConfigError("ring radius must be > 0", "radius");
  if (!(spec.width > 0.0)) throw ConfigError("ring width must be > 0", "width");
  if (spec.dim == 0) throw ConfigError("ring dim must be >= 1", "dim");
  SyntheticDistribution d;
  d.dim_ = spec.dim;
  d.spec_ = spec;
  return d;
}

Array SyntheticDistribution::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  return sample(n, rng);
}

Array SyntheticDistribution::sample(std::size_t n, Rng& rng) const {
  Array out = Array::zeros({n, dim_});
  std::normal_distribution<double> normal(0.0, 1.0);
  if (const auto* g = std::get_if<GaussianSpec>(&spec_)) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) out.at(i, j) = g->mean[j] + g->sigma[j] * normal(rng);
    }
  } else if (const auto* m = std::get_if<MixtureSpec>(&spec_)) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = u(rng);
      std::size_t c = 0;
      double cumulative = m->weights[0];
      while (r >= cumulative && c + 1 < m->weights.size()) cumulative += m->weights[++c];
      for (std::size_t j = 0; j < dim_; ++j) {
        out.at(i, j) = m->means[c][j] + m->sigmas[c][j] * normal(rng);
      }
    }
  } else {
    const auto& ring = std::get<RingSpec>(spec_);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<double> row = out.row(i);
      double len = 0.0;
      while (len == 0.0) {
        for (double& v : row) v = normal(rng);
        len = norm_of(row);
      }
      const double rho = sample_ring_radius(ring, rng);
      for (double& v : row) v *= rho / len;
    }
  }
  return out;
}

double SyntheticDistribution::log_density(std::span<const double> y) const {
  if (y.size() != dim_) throw ShapeError("log_density: wrong dimension");
  if (const auto* g = std::get_if<GaussianSpec>(&spec_)) {
    return diag_gaussian_log_pdf(y, g->mean, g->sigma);
  }
  if (const auto* m = std::get_if<MixtureSpec>(&spec_)) {
    std::vector<double> terms;
    for (std::size_t c = 0; c < m->weights.size(); ++c) {
      if (m->weights[c] == 0.0) continue;
      terms.push_back(std::log(m->weights[c]) + diag_gaussian_log_pdf(y, m->means[c], m->sigmas[c]));
    }
    const double top = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - top);
    return top + std::log(s);
  }
  const auto& ring = std::get<RingSpec>(spec_);
  const double t = norm_of(y) - ring.radius;
  return -t * t / (2.0 * ring.width * ring.width);
}

std::vector<double> SyntheticDistribution::score(std::span<const double> y) const {
  if (y.size() != dim_) throw ShapeError("score: wrong dimension");
  std::vector<double> s(dim_, 0.0);
  if (const auto* g = std::get_if<GaussianSpec>(&spec_)) {
    for (std::size_t j = 0; j < dim_; ++j) s[j] = -(y[j] - g->mean[j]) / (g->sigma[j] * g->sigma[j]);
  } else if (const auto* m = std::get_if<MixtureSpec>(&spec_)) {
    const std::size_t k = m->weights.size();
    std::vector<double> logr(k, -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (m->weights[c] == 0.0) continue;
      logr[c] = std::log(m->weights[c]) + diag_gaussian_log_pdf(y, m->means[c], m->sigmas[c]);
      top = std::max(top, logr[c]);
    }
    double total = 0.0;
    std::vector<double> r(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      r[c] = m->weights[c] == 0.0 ? 0.0 : std::exp(logr[c] - top);
      total += r[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (r[c] == 0.0) continue;
      const double resp = r[c] / total;
      for (std::size_t j = 0; j < dim_; ++j) {
        const double var = m->sigmas[c][j] * m->sigmas[c][j];
        s[j] += resp * (-(y[j] - m->means[c][j]) / var);
      }
    }
  } else {
    const auto& ring = std::get<RingSpec>(spec_);
    const double len = norm_of(y);
    if (len == 0.0) throw NumericError("ring score is undefined at the origin");
    const double coef = -(len - ring.radius) / (ring.width * ring.width * len);
    for (std::size_t j = 0; j < dim_; ++j) s[j] = coef * y[j];
  }
  return s;
}

Array SyntheticDistribution::score(const Array& y) const {
  if (y.rank() != 2 || y.cols() != dim_) {
    throw ShapeError("score: expected [n x " + std::to_string(dim_) + "], got " +
                     shape_string(y.shape));
  }
  Array out = Array::zeros(y.shape);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto s = score(y.row(i));
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conditional task

void ConditionalTask::validate() const {
  if (a.rank() != 2 || a.rows() == 0) throw ConfigError("task matrix A must be d x k", "A");
  if (!(sigma >= 0.0)) throw ConfigError("task sigma must be >= 0", "sigma");
}

namespace {

Array rows_times_transpose(const Array& x, const Array& a, double factor) {
  if (x.rank() != 2 || x.cols() != a.cols()) {
    throw ShapeError("task: x has shape " + shape_string(x.shape) + ", A has " +
                     shape_string(a.shape));
  }
  Array out = Array::zeros({x.rows(), a.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < a.cols(); ++c) s += a.at(r, c) * x.at(i, c);
      out.at(i, r) = factor * s;
    }
  }
  return out;
}

}  // namespace

Array ConditionalTask::conditional_mean(const Array& x) const {
  return rows_times_transpose(x, a, 1.0);
}

Array ConditionalTask::base_prediction(const Array& x) const {
  return rows_times_transpose(x, a, lambda);
}

Dataset sample_task(const ConditionalTask& task, std::size_t n, std::uint64_t seed) {
  task.validate();
  Rng rng(seed);
  Dataset d;
  d.x = standard_normal({n, task.dim_x()}, rng);
  d.y = task.conditional_mean(d.x);
  const Array eps = standard_normal({n, task.dim_y()}, rng);
  for (std::size_t i = 0; i < d.y.numel(); ++i) d.y.values[i] += task.sigma * eps.values[i];
  return d;
}

Dataset unconditional(Array y) {
  Dataset d;
  d.x = Array::zeros({y.rows(), 0});
  d.y = std::move(y);
  return d;
}

// ---------------------------------------------------------------------------
// Negatives

std::string to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::kGaussianJitter: return "gaussian_jitter";
    case NegativeStrategy::kBasePredictor: return "base_predictor";
    case NegativeStrategy::kBasePredictorPlusJitter: return "base_predictor_plus_jitter";
    case NegativeStrategy::kGaussianNoise: return "gaussian_noise";
  }
  return "unknown";
}

NegativeStrategy parse_negative_strategy(const std::string& s) {
  for (auto k : {NegativeStrategy::kGaussianJitter, NegativeStrategy::kBasePredictor,
                 NegativeStrategy::kBasePredictorPlusJitter, NegativeStrategy::kGaussianNoise}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown negative strategy '" + s + "'", "strategy");
}

Array make_negatives(const NegativeSampler& sampler, const ConditionalTask* task, const Array& x,
                     const Array& y_pos, Rng& rng) {
  if (!(sampler.sigma_noise >= 0.0)) {
    throw ConfigError("negative sigma_noise must be >= 0", "sigma_noise");
  }
  const bool needs_task = sampler.strategy == NegativeStrategy::kBasePredictor ||
                          sampler.strategy == NegativeStrategy::kBasePredictorPlusJitter;
  if (needs_task && task == nullptr) {
    throw ConfigError("negative strategy " + to_string(sampler.strategy) +
                          " requires a conditional task",
                      "strategy");
  }
  Array out;
  switch (sampler.strategy) {
    case NegativeStrategy::kGaussianJitter:
      out = y_pos;
      break;
    case NegativeStrategy::kGaussianNoise:
      out = Array::zeros(y_pos.shape);
      break;
    case NegativeStrategy::kBasePredictor:
    case NegativeStrategy::kBasePredictorPlusJitter:
      out = task->base_prediction(x);
      if (out.shape != y_pos.shape) {
        throw ShapeError("base predictor output " + shape_string(out.shape) +
                         " does not match Y " + shape_string(y_pos.shape));
      }
      break;
  }
  if (sampler.strategy != NegativeStrategy::kBasePredictor) {
    const Array eps = standard_normal(y_pos.shape, rng);
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] += sampler.sigma_noise * eps.values[i];
  }
  return out;
}

Array make_negatives(const NegativeSampler& sampler, const ConditionalTask* task, const Array& x,
                     const Array& y_pos) {
  Rng rng(sampler.seed);
  return make_negatives(sampler, task, x, y_pos, rng);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(cur);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::optional<double> parse_number(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return std::nullopt;
  s = s.substr(b, e - b + 1);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, std::size_t dim_y, bool has_condition) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw IoError(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    first = false;
    for (double v : row) {
      if (!std::isfinite(v)) throw IoError(path + ":" + std::to_string(lineno) + ": non-finite value");
    }
    if (rows.empty()) {
      columns = row.size();
      const std::size_t need = dim_y + (has_condition ? 1 : 0);
      if (columns < need || (!has_condition && columns != dim_y)) {
        throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                      (has_condition ? "more than " : "") + std::to_string(dim_y) +
                      " columns, got " + std::to_string(columns));
      }
    } else if (row.size() != columns) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                    " columns, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");
  const std::size_t k = columns - dim_y;
  Dataset d;
  d.x = Array::zeros({rows.size(), k});
  d.y = Array::zeros({rows.size(), dim_y});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) d.x.at(i, j) = rows[i][j];
    for (std::size_t j = 0; j < dim_y; ++j) d.y.at(i, j) = rows[i][k + j];
  }
  return d;
}

void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::size_t k = data.dim_x(), d = data.dim_y();
  for (std::size_t j = 0; j < k; ++j) out << "x_" << j << ',';
  for (std::size_t j = 0; j < d; ++j) out << "y_" << j << (j + 1 < d ? "," : "\n");
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.x.at(i, j));
      out << buf << ',';
    }
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.y.at(i, j));
      out << buf << (j + 1 < d ? "," : "\n");
    }
  }
}

}  // namespace ebmlab

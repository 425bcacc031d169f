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

// Synthetic densities with closed-form scores, a linear-Gaussian conditional
// task with a deliberately biased base predictor, negative-sample generation
// and CSV ingestion.

#ifndef EBMLAB_DATA_HPP_
#define EBMLAB_DATA_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ebmlab/autodiff.hpp"

namespace ebmlab {

using Rng = std::mt19937_64;

// Standard-normal fill of an array of the given shape.
Array standard_normal(Shape shape, Rng& rng);

struct GaussianSpec {
  std::vector<double> mean;
  std::vector<double> sigma;  // per-dimension standard deviation
};

struct MixtureSpec {
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> sigmas;  // diagonal standard deviations
};

// log p ∝ −(‖Y‖ − radius)² / (2 width²); undefined score at the origin.
struct RingSpec {
  double radius = 1.0;
  double width = 0.1;
  std::size_t dim = 2;
};

class SyntheticDistribution {
 public:
  static SyntheticDistribution gaussian(std::vector<double> mean, double sigma);
  static SyntheticDistribution gaussian(GaussianSpec spec);
  static SyntheticDistribution mixture(MixtureSpec spec);
  static SyntheticDistribution ring(RingSpec spec);

  std::size_t dim() const { return dim_; }
  const std::variant<GaussianSpec, MixtureSpec, RingSpec>& spec() const { return spec_; }

  // n×d draws from std::mt19937_64(seed).
  Array sample(std::size_t n, std::uint64_t seed) const;
  Array sample(std::size_t n, Rng& rng) const;

  // Normalised for Gaussians and mixtures; the ring omits its constant.
  double log_density(std::span<const double> y) const;
  // ∇ log p, row by row for an n×d batch.
  Array score(const Array& y) const;
  std::vector<double> score(std::span<const double> y) const;

 private:
  SyntheticDistribution() = default;
  std::variant<GaussianSpec, MixtureSpec, RingSpec> spec_;
  std::size_t dim_ = 0;
};

// x ~ N(0, I_k), Y = A x + sigma ε with A (d×k). The base predictor
// Â = lambda·A stands in for a pretrained model's hypotheses.
struct ConditionalTask {
  Array a = Array::matrix(2, 2, {1, 0, 0, 1});
  double sigma = 0.3;
  double lambda = 0.8;

  std::size_t dim_x() const { return a.cols(); }
  std::size_t dim_y() const { return a.rows(); }
  void validate() const;

  Array conditional_mean(const Array& x) const;  // rows A x
  Array base_prediction(const Array& x) const;   // rows Â x
};

struct Dataset {
  Array x;  // n×k, k may be 0
  Array y;  // n×d

  std::size_t size() const { return y.rows(); }
  std::size_t dim_x() const { return x.cols(); }
  std::size_t dim_y() const { return y.cols(); }
};

Dataset sample_task(const ConditionalTask& task, std::size_t n, std::uint64_t seed);
Dataset unconditional(Array y);

enum class NegativeStrategy {
  kGaussianJitter,            // Y⁺ + σ ε
  kBasePredictor,             // Â x
  kBasePredictorPlusJitter,   // Â x + σ ε
  kGaussianNoise,             // σ ε, independent of Y⁺ (x-free anchors)
};

std::string to_string(NegativeStrategy s);
NegativeStrategy parse_negative_strategy(const std::string& s);

struct NegativeSampler {
  NegativeStrategy strategy = NegativeStrategy::kGaussianJitter;
  double sigma_noise = 0.5;
  std::uint64_t seed = 0;
};

// One negative per positive row. `task` is required by the base-predictor
// strategies and ignored otherwise.
Array make_negatives(const NegativeSampler& sampler, const ConditionalTask* task, const Array& x,
                     const Array& y_pos, Rng& rng);
// Draws from std::mt19937_64(sampler.seed).
Array make_negatives(const NegativeSampler& sampler, const ConditionalTask* task, const Array& x,
                     const Array& y_pos);

// Comma-separated rows, condition columns first when `has_condition`. A first
// row that does not parse as numbers is treated as a header. Row order is
// preserved.
Dataset load_csv(const std::string& path, std::size_t dim_y, bool has_condition);
void save_csv(const std::string& path, const Dataset& data);

}  // namespace ebmlab

#endif  // EBMLAB_DATA_HPP_

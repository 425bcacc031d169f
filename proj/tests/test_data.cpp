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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include "ebmlab/data.hpp"
#include "ebmlab/inference.hpp"
#include "test_util.hpp"

namespace ebmlab {
namespace {

namespace fs = std::filesystem;

// Independent log densities for the finite-difference oracles.
double log_mixture_1d(double y, const std::vector<double>& w, const std::vector<double>& mu, double s) {
  double p = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double z = (y - mu[k]) / s;
    p += w[k] * std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
  }
  return std::log(p);
}

double log_ring(std::span<const double> y, double radius, double width) {
  double r2 = 0.0;
  for (double v : y) r2 += v * v;
  const double dev = std::sqrt(r2) - radius;
  return -dev * dev / (2.0 * width * width);
}

ScoreSource oracle_source(Graph& g, const SyntheticDistribution& dist) {
  return ScoreSource::predictive(g, [&dist](const Tensor&, const Tensor& y) {
    return Tensor(dist.score(y.array()));
  });
}

SyntheticDistribution two_bumps(std::vector<double> w, double sep = 2.0, double sigma = 1.0) {
  MixtureSpec m;
  m.weights = std::move(w);
  m.means = {{-sep, 0.0}, {sep, 0.0}};
  m.sigmas = {{sigma, sigma}, {sigma, sigma}};
  return SyntheticDistribution::mixture(m);
}

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = (fs::temp_directory_path() / name).string();
  std::ofstream(path) << text;
  return path;
}

TEST(Sampling, SameSeedIsIdentical) {
  const auto d = two_bumps({0.5, 0.5});
  EXPECT_EQ(d.sample(100, 4).values, d.sample(100, 4).values);
  EXPECT_NE(d.sample(100, 4).values, d.sample(100, 5).values);
}

TEST(Sampling, GaussianMeanOverManyDraws) {
  const auto d = SyntheticDistribution::gaussian({5.0, 5.0}, 1.0);
  const Array s = d.sample(1000000, 0);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) mean += s.at(i, j);
    mean /= static_cast<double>(s.rows());
    EXPECT_GE(mean, 4.99);
    EXPECT_LE(mean, 5.01);
  }
}

TEST(Sampling, ZeroWeightComponentIsNeverDrawn) {
  const Array s = two_bumps({1.0, 0.0}, 10.0).sample(10000, 1);
  for (std::size_t i = 0; i < s.rows(); ++i) EXPECT_LT(s.at(i, 0), 0.0);
}

TEST(Score, GaussianClosedForm) {
  const auto d = SyntheticDistribution::gaussian({1.0, 1.0}, 1.0);
  EXPECT_EQ(d.score(std::vector<double>{2.0, 1.0}), (std::vector<double>{-1.0, 0.0}));
}

TEST(Score, SymmetricMixtureMidpointIsStationary) {
  const auto s = two_bumps({0.5, 0.5}).score(std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(s[0], 0.0, 1e-15);
  EXPECT_NEAR(s[1], 0.0, 1e-15);
}

TEST(Score, MixtureAgreesWithLogDensityDifferences) {
  MixtureSpec m;
  m.weights = {0.3, 0.7};
  m.means = {{-2.0}, {2.0}};
  m.sigmas = {{1.0}, {1.0}};
  const auto d = SyntheticDistribution::mixture(m);
  for (double y : {0.5, -1.3, 2.7, 0.0}) {
    const std::vector<double> p{y};
    const auto fd = testing::fd_gradient(
        [](std::span<const double> q) { return log_mixture_1d(q[0], {0.3, 0.7}, {-2.0, 2.0}, 1.0); }, p,
        1e-6);
    EXPECT_LE(testing::rel_err(d.score(p), fd), 1e-6) << y;
    EXPECT_NEAR(d.log_density(p), log_mixture_1d(y, {0.3, 0.7}, {-2.0, 2.0}, 1.0), 1e-12);
  }
}

TEST(Score, RingAgreesWithLogDensityDifferences) {
  const auto d = SyntheticDistribution::ring({1.5, 0.2, 3});
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const auto p = testing::normal_vector(3, rng);
    const auto fd = testing::fd_gradient(
        [](std::span<const double> q) { return log_ring(q, 1.5, 0.2); }, p, 1e-6);
    EXPECT_LE(testing::rel_err(d.score(p), fd), 1e-6);
  }
  EXPECT_THROW(d.score(std::vector<double>{0.0, 0.0, 0.0}), NumericError);
}

TEST(Score, BatchedMatchesRowWise) {
  const auto d = two_bumps({0.4, 0.6});
  const Array y = d.sample(16, 3);
  const Array s = d.score(y);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto row = d.score(std::vector<double>{y.at(i, 0), y.at(i, 1)});
    EXPECT_EQ(s.at(i, 0), row[0]);
    EXPECT_EQ(s.at(i, 1), row[1]);
  }
  EXPECT_THROW(d.score(Array::zeros({2, 3})), ShapeError);
}

TEST(Score, OracleFieldsHaveNoCirculation) {
  const std::vector<SyntheticDistribution> dists{two_bumps({0.3, 0.7}),
                                                 SyntheticDistribution::ring({1.0, 0.3, 2})};
  std::mt19937_64 rng(8);
  for (const auto& d : dists) {
    for (int i = 0; i < 10; ++i) {
      const auto c = testing::normal_vector(2, rng);
      const double h = 1e-3;
      const double pts[5][2] = {{c[0], c[1]}, {c[0] + h, c[1]}, {c[0] + h, c[1] + h}, {c[0], c[1] + h}, {c[0], c[1]}};
      double total = 0.0;
      for (int k = 0; k < 4; ++k) {
        const auto a = d.score(std::vector<double>{pts[k][0], pts[k][1]});
        const auto b = d.score(std::vector<double>{pts[k + 1][0], pts[k + 1][1]});
        total += 0.5 * ((a[0] + b[0]) * (pts[k + 1][0] - pts[k][0]) + (a[1] + b[1]) * (pts[k + 1][1] - pts[k][1]));
      }
      EXPECT_LT(std::abs(total), 1e-8);
    }
  }
}

TEST(Validation, WeightsAndScales) {
  EXPECT_THROW(two_bumps({0.5, 0.6}), ConfigError);
  EXPECT_THROW(two_bumps({1.2, -0.2}), ConfigError);
  EXPECT_THROW(two_bumps({0.5, 0.5}, 2.0, 0.0), ConfigError);
  EXPECT_THROW(SyntheticDistribution::gaussian({0.0}, -1.0), ConfigError);
  EXPECT_THROW(SyntheticDistribution::ring({0.0, 0.1, 2}), ConfigError);
}

TEST(Validation, LangevinMomentsMatchTheGaussian) {
  const auto d = SyntheticDistribution::gaussian({1.0, -1.0}, 0.5);
  Graph g;
  const std::size_t n = 1000;
  Rng rng(0);
  const Array init = standard_normal({n, 2}, rng);
  const auto t = denoise_run(oracle_source(g, d), Array::zeros({n, 0}), init, classical_langevin(0.01, 1000, 5));
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += t.final.at(i, j);
    mean /= static_cast<double>(n);
    EXPECT_NEAR(mean, j == 0 ? 1.0 : -1.0, 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
  }
}

TEST(Task, DefaultsAndResidualScale) {
  const ConditionalTask task;
  EXPECT_EQ(task.dim_x(), 2u);
  EXPECT_EQ(task.dim_y(), 2u);
  const Dataset data = sample_task(task, 20000, 1);
  const Array mean = task.conditional_mean(data.x);
  double ss = 0.0;
  for (std::size_t i = 0; i < data.y.numel(); ++i) ss += std::pow(data.y.values[i] - mean.values[i], 2);
  EXPECT_NEAR(ss / static_cast<double>(data.y.numel()), 0.09, 0.09 * 0.03);
  const Array base = task.base_prediction(data.x);
  for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_DOUBLE_EQ(base.values[i], 0.8 * mean.values[i]);
}

TEST(Negatives, ZeroJitterReturnsPositives) {
  const Array y = Array::matrix(2, 2, {1, 2, 3, 4});
  NegativeSampler s;
  s.sigma_noise = 0.0;
  EXPECT_EQ(make_negatives(s, nullptr, Array::zeros({2, 0}), y).values, y.values);
}

TEST(Negatives, UnbiasedBasePredictorReturnsConditionalMean) {
  ConditionalTask task;
  task.lambda = 1.0;
  task.a = Array::matrix(2, 2, {1, 2, 0, -1});
  const Array x = Array::matrix(2, 2, {1, 1, 0.5, -2});
  NegativeSampler s;
  s.strategy = NegativeStrategy::kBasePredictor;
  const Array out = make_negatives(s, &task, x, Array::zeros({2, 2}));
  EXPECT_EQ(out.values, (std::vector<double>{3, -1, -3.5, 2}));
}

TEST(Negatives, JitterSecondMoment) {
  const std::size_t n = 100000, d = 3;
  const Array y = Array::zeros({n, d});
  NegativeSampler s;
  s.sigma_noise = 0.5;
  s.seed = 11;
  const Array neg = make_negatives(s, nullptr, Array::zeros({n, 0}), y);
  double ss = 0.0;
  for (double v : neg.values) ss += v * v;
  EXPECT_NEAR(ss / static_cast<double>(n), 0.25 * d, 0.02 * 0.25 * d);
}

TEST(Negatives, BasePredictorNeedsATask) {
  NegativeSampler s;
  s.strategy = NegativeStrategy::kBasePredictorPlusJitter;
  EXPECT_THROW(make_negatives(s, nullptr, Array::zeros({1, 2}), Array::zeros({1, 2})), ConfigError);
  EXPECT_THROW(parse_negative_strategy("shuffle"), ConfigError);
}

TEST(Negatives, SeededAndDeterministic) {
  NegativeSampler s;
  s.seed = 3;
  const Array y = Array::matrix(3, 1, {1, 2, 3});
  EXPECT_EQ(make_negatives(s, nullptr, Array::zeros({3, 0}), y).values,
            make_negatives(s, nullptr, Array::zeros({3, 0}), y).values);
  s.strategy = NegativeStrategy::kGaussianNoise;
  const Array noise = make_negatives(s, nullptr, Array::zeros({3, 0}), Array::matrix(3, 1, {100, 100, 100}));
  for (double v : noise.values) EXPECT_LT(std::abs(v), 10.0);
}

TEST(Csv, RoundTripPreservesRowsAndOrder) {
  const Dataset d = sample_task(ConditionalTask{}, 7, 2);
  const auto path = (fs::temp_directory_path() / "ebmlab_data_rt.csv").string();
  save_csv(path, d);
  const Dataset back = load_csv(path, 2, true);
  EXPECT_EQ(back.x.values, d.x.values);
  EXPECT_EQ(back.y.values, d.y.values);
  fs::remove(path);
}

TEST(Csv, HeaderIsDetected) {
  const auto path = write_temp("ebmlab_data_hdr.csv", "a,b\n1,2\n3,4\n");
  const Dataset d = load_csv(path, 2, false);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dim_x(), 0u);
  EXPECT_EQ(d.y.values, (std::vector<double>{1, 2, 3, 4}));
  fs::remove(path);
}

TEST(Csv, ConditionColumnsComeFirst) {
  const auto path = write_temp("ebmlab_data_cond.csv", "1,2,3\n4,5,6\n");
  const Dataset d = load_csv(path, 1, true);
  EXPECT_EQ(d.x.values, (std::vector<double>{1, 2, 4, 5}));
  EXPECT_EQ(d.y.values, (std::vector<double>{3, 6}));
  fs::remove(path);
}

TEST(Csv, EmptyAndMalformedFilesAreErrors) {
  const auto empty = write_temp("ebmlab_data_empty.csv", "");
  EXPECT_THROW(load_csv(empty, 2, false), IoError);
  const auto bad = write_temp("ebmlab_data_bad.csv", "1,2\n3,4\n5,oops\n");
  try {
    load_csv(bad, 2, false);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_csv("/nonexistent/data.csv", 2, false), IoError);
  fs::remove(empty);
  fs::remove(bad);
}

}  // namespace
}  // namespace ebmlab

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
#include <random>

#include "ebmlab/eval.hpp"
#include "ebmlab/inference.hpp"
#include "ebmlab/losses.hpp"
#include "test_util.hpp"

namespace ebmlab {
namespace {

const Array kNoX = Array::zeros({1, 0});

LossBatch single(std::vector<double> y_pos) {
  LossBatch b;
  b.x = kNoX;
  const std::size_t d = y_pos.size();
  b.y_pos = Array::matrix(1, d, std::move(y_pos));
  return b;
}

// E(Y) = first coordinate, so energies can be dialled in directly.
ScoreSource first_coordinate_energy(Graph& g) { return testing::linear_energy(g, {1, 0}); }

double oracle_softplus(double z) { return std::log1p(std::exp(z)); }

TEST(Nce, SymmetricMidpointIsTwoLn2) {
  Graph g;
  LossBatch b = single({0, 5});
  b.y_neg = Array::matrix(1, 2, {0, -3});
  EXPECT_NEAR(nce_loss(first_coordinate_energy(g), b).item(), 2.0 * std::log(2.0), 1e-12);
}

TEST(Nce, SaturatedOptimumIsNearZero) {
  Graph g;
  LossBatch b = single({-100, 0});
  b.y_neg = Array::matrix(1, 2, {100, 0});
  EXPECT_LE(nce_loss(first_coordinate_energy(g), b).item(), 1e-40);
}

TEST(Nce, MatchesSoftplusOracle) {
  Graph g;
  LossBatch b = single({1, 0});
  b.y_neg = Array::matrix(1, 2, {2, 0});
  const double expected = oracle_softplus(1.0) + oracle_softplus(-2.0);
  EXPECT_NEAR(nce_loss(first_coordinate_energy(g), b).item(), expected, 1e-12);
  EXPECT_NEAR(expected, 1.4401896985, 1e-10);
}

TEST(Nce, RequiresNegativesAndAnEnergy) {
  Graph g;
  EXPECT_THROW(nce_loss(first_coordinate_energy(g), single({0, 0})), ConfigError);
  LossBatch b = single({0, 0});
  b.y_neg = Array::matrix(1, 2, {1, 1});
  EXPECT_THROW(nce_loss(testing::constant_score(g, {0, 0}), b), ConfigError);
}

TEST(Sm, GaussianClosedForm) {
  Graph g;
  EXPECT_DOUBLE_EQ(sm_loss(testing::quadratic_energy(g, {1, 1}), single({1, 1})).item(), -1.0);
}

TEST(Sm, ZeroScoreGivesZero) {
  Graph g;
  EXPECT_DOUBLE_EQ(sm_loss(testing::constant_score(g, {0, 0}), single({0.3, -2})).item(), 0.0);
}

TEST(Sm, DiagonalQuadratic) {
  Graph g;
  EXPECT_DOUBLE_EQ(sm_loss(testing::quadratic_energy(g, {1, 3}), single({1, 0})).item(), -3.5);
}

TEST(Sm, DimensionAboveTraceLimitPointsToSsm) {
  Graph g;
  try {
    sm_loss(testing::quadratic_energy(g, {1, 1, 1}), single({1, 1, 1}), 2);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ssm"), std::string::npos) << e.what();
  }
}

TEST(Ssm, AxisProjection) {
  Graph g;
  LossBatch b = single({1, 1});
  b.v = std::vector<Array>{Array::matrix(1, 2, {1, 0})};
  EXPECT_DOUBLE_EQ(ssm_loss(testing::quadratic_energy(g, {1, 1}), b).item(), 0.0);
}

TEST(Ssm, DiagonalProjection) {
  Graph g;
  LossBatch b = single({1, 1});
  b.v = std::vector<Array>{Array::matrix(1, 2, {1, 1})};
  EXPECT_DOUBLE_EQ(ssm_loss(testing::quadratic_energy(g, {1, 1}), b).item(), -1.0);
}

TEST(Ssm, NeedsProjectionsOrGenerator) {
  Graph g;
  EXPECT_THROW(ssm_loss(testing::quadratic_energy(g, {1, 1}), single({1, 1})), ConfigError);
  Rng rng(0);
  EXPECT_NO_THROW(ssm_loss(testing::quadratic_energy(g, {1, 1}), single({1, 1}), &rng));
}

TEST(Ssm, ProjectionMeanMatchesExactTrace) {
  const std::size_t d = 3;
  const Mlp m = Mlp::init(make_spec(ModelVariant::kEnergy, 0, d, {16, 16}, Activation::kTanh), 8);
  Graph g;
  const BoundMlp net(g, m, false);
  const ScoreSource src = ScoreSource::from_model(net);
  const LossBatch b = single({0.2, -0.4, 0.9});
  const Array s = evaluate_score(src, kNoX, b.y_pos);
  double half_norm = 0.0;
  for (double v : s.values) half_norm += 0.5 * v * v;
  const double exact = sm_loss(src, b).item() - half_norm;

  const std::vector<double> terms = projection_terms(src, kNoX, b.y_pos, 100000, 77);
  double mean = 0.0;
  for (double t : terms) mean += t;
  mean /= static_cast<double>(terms.size());
  double var = 0.0;
  for (double t : terms) var += (t - mean) * (t - mean);
  var /= static_cast<double>(terms.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(terms.size()));
  EXPECT_LE(std::abs(mean - exact), 3.0 * se) << "mean " << mean << " exact " << exact;
}

TEST(Delta, PerfectScoreGivesZero) {
  Graph g;
  LossBatch b = single({1, 2});
  b.y_neg = Array::matrix(1, 2, {0.5, -1});
  EXPECT_DOUBLE_EQ(delta_loss(testing::toward(g, b.y_pos), b).item(), 0.0);
}

TEST(Delta, ZeroScoreArithmetic) {
  Graph g;
  LossBatch b = single({1, 2});
  b.y_neg = Array::matrix(1, 2, {0, 0});
  EXPECT_DOUBLE_EQ(delta_loss(testing::constant_score(g, {0, 0}), b).item(), 2.5);
}

TEST(Delta, RequiresNegatives) {
  Graph g;
  EXPECT_THROW(delta_loss(testing::constant_score(g, {0, 0}), single({1, 2})), ConfigError);
}

// The score output is a free variable P; ∂L/∂P = P − (Y⁺ − Y⁻) for one item.
TEST(Delta, GradientWithRespectToScoreOutput) {
  Graph g;
  const Tensor p = g.variable(Array::matrix(1, 2, {0.3, -0.8}));
  const ScoreSource src =
      ScoreSource::predictive(g, [p](const Tensor&, const Tensor&) { return p; });
  LossBatch b = single({1, 2});
  b.y_neg = Array::matrix(1, 2, {0.5, 0.25});
  const Tensor grad = gradient(delta_loss(src, b), p, false);
  const std::vector<double> closed{0.3 - 0.5, -0.8 - 1.75};
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(grad.values()[j], closed[j], 1e-15);

  auto loss_at = [&](std::span<const double> q) {
    Graph h;
    const Tensor pq = h.variable(Array::matrix(1, 2, {q[0], q[1]}));
    const ScoreSource s = ScoreSource::predictive(h, [pq](const Tensor&, const Tensor&) { return pq; });
    return delta_loss(s, b).item();
  };
  const std::vector<double> p0{0.3, -0.8};
  const auto numeric = testing::fd_gradient(loss_at, p0, 1e-5);
  EXPECT_LE(testing::rel_err({grad.values().begin(), grad.values().end()}, numeric), 1e-9);
}

TEST(Fm, TimeZeroWithNegativeAnchorsEqualsDelta) {
  Graph g;
  // A score network that ignores its trailing time column: x has one real
  // column plus t, and the first-layer weights on t are zeroed.
  Mlp m = Mlp::init(make_spec(ModelVariant::kScore, 2, 2, {8}, Activation::kTanh), 3);
  std::vector<double> flat = m.flat_parameters();
  const std::size_t out0 = m.weight(0).cols();
  for (std::size_t o = 0; o < out0; ++o) flat[1 * out0 + o] = 0.0;  // row 1 of W0 is t
  m.set_flat_parameters(flat);
  const Mlp plain = Mlp::from_parameters(make_spec(ModelVariant::kScore, 1, 2, {8}, Activation::kTanh), 3,
                                         [&] {
                                           std::vector<double> f;
                                           for (std::size_t i = 0; i < flat.size(); ++i) {
                                             if (i / out0 != 1 || i >= 4 * out0) f.push_back(flat[i]);
                                           }
                                           return f;
                                         }());
  const BoundMlp velocity(g, m, false), score(g, plain, false);

  std::mt19937_64 rng(1);
  LossBatch b;
  b.x = Array::matrix(3, 1, testing::normal_vector(3, rng));
  b.y_pos = Array::matrix(3, 2, testing::normal_vector(6, rng));
  b.y_neg = Array::matrix(3, 2, testing::normal_vector(6, rng));
  LossBatch f = b;
  f.y_anchor = b.y_neg;
  f.t = std::vector<double>(3, 0.0);
  EXPECT_NEAR(fm_loss(ScoreSource::from_model(velocity), f).item(),
              delta_loss(ScoreSource::from_model(score), b).item(), 1e-12);
}

TEST(Fm, InterpolantEndpoints) {
  const Array yp = Array::matrix(2, 2, {1, 2, 3, 4});
  const Array y0 = Array::matrix(2, 2, {-1, 0, 0.5, 9});
  EXPECT_EQ(interpolate(yp, y0, {1.0, 1.0}), yp);
  EXPECT_EQ(interpolate(yp, y0, {0.0, 0.0}), y0);
}

TEST(Fm, PerfectVelocityGivesZero) {
  Graph g;
  LossBatch b = single({1, 2});
  b.y_anchor = Array::matrix(1, 2, {-1, 0.5});
  b.t = std::vector<double>{0.37};
  EXPECT_DOUBLE_EQ(fm_loss(testing::constant_score(g, {2, 1.5}), b).item(), 0.0);
}

TEST(Fm, TimeOutsideUnitIntervalIsRejected) {
  Graph g;
  LossBatch b = single({1, 2});
  b.y_anchor = Array::matrix(1, 2, {0, 0});
  b.t = std::vector<double>{1.5};
  EXPECT_THROW(fm_loss(testing::constant_score(g, {0, 0}), b), ConfigError);
}

TEST(Fm, TimeIsAppendedAsTrailingConditionColumn) {
  const Array xt = append_time(Array::matrix(2, 1, {7, 8}), {0.25, 0.75});
  EXPECT_EQ(xt, Array::matrix(2, 2, {7, 0.25, 8, 0.75}));
}

// ---------------------------------------------------------------------------
// Properties over random networks and batches

struct LossCase {
  const char* name;
  ModelVariant variant;
  std::function<Tensor(const ScoreSource&, const LossBatch&)> loss;
  bool time = false;
};

std::vector<LossCase> all_cases() {
  return {
      {"nce", ModelVariant::kEnergy, [](const ScoreSource& s, const LossBatch& b) { return nce_loss(s, b); }},
      {"sm-analytic", ModelVariant::kEnergy, [](const ScoreSource& s, const LossBatch& b) { return sm_loss(s, b); }},
      {"sm-predictive", ModelVariant::kScore, [](const ScoreSource& s, const LossBatch& b) { return sm_loss(s, b); }},
      {"ssm-analytic", ModelVariant::kEnergy, [](const ScoreSource& s, const LossBatch& b) { return ssm_loss(s, b); }},
      {"ssm-predictive", ModelVariant::kScore, [](const ScoreSource& s, const LossBatch& b) { return ssm_loss(s, b); }},
      {"delta-analytic", ModelVariant::kEnergy, [](const ScoreSource& s, const LossBatch& b) { return delta_loss(s, b); }},
      {"delta-predictive", ModelVariant::kScore, [](const ScoreSource& s, const LossBatch& b) { return delta_loss(s, b); }},
      {"fm-predictive", ModelVariant::kScore, [](const ScoreSource& s, const LossBatch& b) { return fm_loss(s, b); }, true},
      {"fm-analytic", ModelVariant::kEnergy, [](const ScoreSource& s, const LossBatch& b) { return fm_loss(s, b); }, true},
  };
}

LossBatch random_batch(std::size_t n, std::size_t k, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossBatch b;
  b.x = Array::matrix(n, k, testing::normal_vector(n * k, rng));
  b.y_pos = Array::matrix(n, d, testing::normal_vector(n * d, rng));
  b.y_neg = Array::matrix(n, d, testing::normal_vector(n * d, rng));
  b.y_anchor = Array::matrix(n, d, testing::normal_vector(n * d, rng));
  std::vector<double> t(n);
  for (double& ti : t) ti = u(rng);
  b.t = t;
  b.v = std::vector<Array>{Array::matrix(n, d, testing::normal_vector(n * d, rng)),
                           Array::matrix(n, d, testing::normal_vector(n * d, rng))};
  return b;
}

double loss_value(const LossCase& c, const Mlp& m, const LossBatch& b) {
  Graph g;
  const BoundMlp net(g, m, false);
  return c.loss(ScoreSource::from_model(net), b).item();
}

TEST(LossProperties, ParameterGradientsMatchFiniteDifferences) {
  const std::size_t k = 2, d = 2;
  for (const LossCase& c : all_cases()) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const MlpSpec spec = make_spec(c.variant, k + (c.time ? 1 : 0), d, {8, 8}, Activation::kTanh);
      const Mlp m = Mlp::init(spec, seed);
      const LossBatch b = random_batch(4, k, d, seed + 50);

      Graph g;
      const BoundMlp net(g, m, true);
      const Tensor loss = c.loss(ScoreSource::from_model(net), b);
      const auto analytic = net.flatten_gradients(
          gradients(loss, net.parameters(), false, Unreachable::kZero));

      Mlp probe = m;
      const std::vector<double> theta = m.flat_parameters();
      std::mt19937_64 pick(seed);
      std::uniform_int_distribution<std::size_t> coord(0, theta.size() - 1);
      double worst = 0.0;
      for (int i = 0; i < 20; ++i) {
        const std::size_t j = coord(pick);
        std::vector<double> p = theta;
        p[j] = theta[j] + 1e-5;
        probe.set_flat_parameters(p);
        const double up = loss_value(c, probe, b);
        p[j] = theta[j] - 1e-5;
        probe.set_flat_parameters(p);
        const double down = loss_value(c, probe, b);
        const double numeric = (up - down) / 2e-5;
        worst = std::max(worst, std::abs(analytic[j] - numeric) / std::max(std::abs(numeric), 1e-8));
      }
      EXPECT_LE(worst, 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(LossProperties, BatchLossIsMeanOfItemLosses) {
  const std::size_t k = 2, d = 2, n = 5;
  for (const LossCase& c : all_cases()) {
    const Mlp m = Mlp::init(make_spec(c.variant, k + (c.time ? 1 : 0), d, {8}, Activation::kSoftplus), 4);
    const LossBatch b = random_batch(n, k, d, 9);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      LossBatch item;
      auto row = [i](const Array& a) {
        return Array::matrix(1, a.cols(), {a.row(i).begin(), a.row(i).end()});
      };
      item.x = row(b.x);
      item.y_pos = row(b.y_pos);
      item.y_neg = row(*b.y_neg);
      item.y_anchor = row(*b.y_anchor);
      item.t = std::vector<double>{(*b.t)[i]};
      item.v = std::vector<Array>{row((*b.v)[0]), row((*b.v)[1])};
      mean += loss_value(c, m, item);
    }
    mean /= static_cast<double>(n);
    EXPECT_NEAR(loss_value(c, m, b), mean, 1e-12) << c.name;
  }
}

TEST(LossProperties, SignsAndFiniteness) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LossBatch b = random_batch(6, 1, 3, seed);
    const Mlp e = Mlp::init(make_spec(ModelVariant::kEnergy, 1, 3, {8}, Activation::kTanh), seed);
    const Mlp s = Mlp::init(make_spec(ModelVariant::kScore, 1, 3, {8}, Activation::kTanh), seed);
    for (const LossCase& c : all_cases()) {
      if (c.time) continue;
      const double v = loss_value(c, c.variant == ModelVariant::kEnergy ? e : s, b);
      EXPECT_TRUE(std::isfinite(v)) << c.name;
    }
    Graph g;
    const BoundMlp be(g, e, false), bs(g, s, false);
    EXPECT_GT(nce_loss(ScoreSource::from_model(be), b).item(), 0.0);
    EXPECT_GE(delta_loss(ScoreSource::from_model(bs), b).item(), 0.0);
  }
}

TEST(LossBatch, MismatchedShapesAreRejected) {
  LossBatch b = single({1, 2});
  b.y_neg = Array::matrix(2, 2, {0, 0, 0, 0});
  EXPECT_THROW(b.validate(), ShapeError);
}

}  // namespace
}  // namespace ebmlab

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

#ifndef EBMLAB_MODELS_HPP_
#define EBMLAB_MODELS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebmlab/autodiff.hpp"

namespace ebmlab {

enum class Activation { kTanh, kSoftplus };

// kEnergy networks output one scalar per row; kScore networks output dim_y.
enum class ModelVariant { kEnergy, kScore };

std::string to_string(Activation a);
std::string to_string(ModelVariant v);
Activation parse_activation(const std::string& s);
ModelVariant parse_variant(const std::string& s);

struct MlpSpec {
  // widths.front() == dim_x + dim_y; widths.back() is 1 or dim_y per variant.
  std::vector<std::size_t> widths;
  Activation activation = Activation::kTanh;
  ModelVariant variant = ModelVariant::kEnergy;
  std::size_t dim_x = 0;
  std::size_t dim_y = 0;

  bool operator==(const MlpSpec&) const = default;
};

// Builds the widths [dim_x + dim_y, hidden..., out] for a variant.
MlpSpec make_spec(ModelVariant variant, std::size_t dim_x, std::size_t dim_y,
                  const std::vector<std::size_t>& hidden, Activation activation);

// Fully connected network on the concatenation [x, Y]. Hidden layers apply the
// activation; the last layer is linear. Parameters per layer: W (in×out), then b (out).
class Mlp {
 public:
  Mlp() = default;

  // Glorot-uniform weights from std::mt19937_64(seed), zero biases.
  static Mlp init(const MlpSpec& spec, std::uint64_t seed);
  static Mlp from_parameters(const MlpSpec& spec, std::uint64_t seed,
                             std::span<const double> flat);

  const MlpSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t layers() const { return weights_.size(); }
  const Array& weight(std::size_t l) const { return weights_.at(l); }
  const Array& bias(std::size_t l) const { return biases_.at(l); }

  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  bool operator==(const Mlp&) const = default;

 private:
  MlpSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<Array> weights_;
  std::vector<Array> biases_;
};

// An Mlp whose parameters live in a graph, as variables (trainable) or constants.
class BoundMlp {
 public:
  BoundMlp(Graph& graph, const Mlp& model, bool trainable);

  // Rows of x (n×dim_x, may have zero columns) and Y (n×dim_y) -> n×out.
  Tensor forward(const Tensor& x, const Tensor& y) const;

  // Graph tensors in flat-parameter order, with the first weight split into
  // its x rows and Y rows. Use `flatten_gradients` to map results back.
  const std::vector<Tensor>& parameters() const { return params_; }
  std::vector<double> flatten_gradients(std::span<const Tensor> grads) const;

  const MlpSpec& spec() const { return spec_; }
  Graph& graph() const { return *graph_; }

 private:
  Graph* graph_;
  MlpSpec spec_;
  std::vector<Tensor> params_;  // W0x, W0y, b0, W1, b1, ...
};

// Either an energy whose negative gradient is the score, or a network that
// outputs the score directly. Both map (x, Y) batches to scores shaped like Y.
class ScoreSource {
 public:
  // Per-row energies: (x n×k, Y n×d) -> n×1.
  using EnergyFn = std::function<Tensor(const Tensor& x, const Tensor& y)>;
  // Scores: (x n×k, Y n×d) -> n×d.
  using ScoreFn = std::function<Tensor(const Tensor& x, const Tensor& y)>;

  static ScoreSource analytic(Graph& graph, EnergyFn energy);
  static ScoreSource predictive(Graph& graph, ScoreFn score);
  // Energy models become analytic sources, score models predictive ones.
  static ScoreSource from_model(const BoundMlp& model);

  bool is_analytic() const { return static_cast<bool>(energy_); }
  Graph& graph() const { return *graph_; }

  // Per-row energies. Throws for predictive sources.
  Tensor energies(const Tensor& x, const Tensor& y) const;

  // Analytic: −∇_Y Σ E(x, Y_i); predictive: the network output. `y` must be a
  // variable of graph() when gradients with respect to it are wanted; a
  // detached y is lifted as a fresh variable.
  Tensor score(const Tensor& x, const Tensor& y, bool retain) const;

 private:
  Graph* graph_ = nullptr;
  EnergyFn energy_;
  ScoreFn score_;
};

// Single-sample energy: x (k) and Y (d) vectors, scalar result.
Tensor energy(const ScoreSource& source, const Array& x, const Array& y);

// x as an n×k matrix; an empty x becomes n×0.
Array as_rows(const Array& a, std::size_t rows);

// Versioned JSON checkpoint. Parameters are stored as hex IEEE-754 bit
// patterns so a round trip is bit-exact.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

struct Checkpoint {
  Mlp model;
  std::optional<OptimizerState> optimizer;
};

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

std::string double_to_hex(double v);
double hex_to_double(const std::string& s);

}  // namespace ebmlab

#endif  // EBMLAB_MODELS_HPP_

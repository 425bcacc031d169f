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

#include "ebmlab/models.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace ebmlab {

namespace {
constexpr int kCheckpointFormatVersion = 1;
}

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "softplus"; }

std::string to_string(ModelVariant v) { return v == ModelVariant::kEnergy ? "energy" : "score"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation '" + s + "' (smooth activations only: tanh, softplus)",
                    "activation");
}

ModelVariant parse_variant(const std::string& s) {
  if (s == "energy" || s == "analytic") return ModelVariant::kEnergy;
  if (s == "score" || s == "predictive") return ModelVariant::kScore;
  throw ConfigError("unknown model variant '" + s + "'", "variant");
}

MlpSpec make_spec(ModelVariant variant, std::size_t dim_x, std::size_t dim_y,
                  const std::vector<std::size_t>& hidden, Activation activation) {
  MlpSpec spec;
  spec.variant = variant;
  spec.dim_x = dim_x;
  spec.dim_y = dim_y;
  spec.activation = activation;
  spec.widths.push_back(dim_x + dim_y);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(variant == ModelVariant::kEnergy ? 1 : dim_y);
  return spec;
}

namespace {

void validate(const MlpSpec& spec) {
  if (spec.widths.size() < 2) {
    throw ConfigError("model needs at least an input and an output width", "widths");
  }
  for (std::size_t w : spec.widths) {
    if (w == 0) throw ConfigError("model widths must be >= 1", "widths");
  }
  if (spec.dim_y == 0) throw ConfigError("dim_y must be >= 1", "dim_y");
  if (spec.widths.front() != spec.dim_x + spec.dim_y) {
    throw ConfigError("input width " + std::to_string(spec.widths.front()) +
                          " != dim_x + dim_y = " + std::to_string(spec.dim_x + spec.dim_y),
                      "widths");
  }
  const std::size_t out = spec.variant == ModelVariant::kEnergy ? 1 : spec.dim_y;
  if (spec.widths.back() != out) {
    throw ConfigError("output width of a " + to_string(spec.variant) + " model must be " +
                          std::to_string(out),
                      "widths");
  }
}

}  // namespace

Mlp Mlp::init(const MlpSpec& spec, std::uint64_t seed) {
  validate(spec);
  Mlp m;
  m.spec_ = spec;
  m.seed_ = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Array w = Array::zeros({in, out});
    for (double& v : w.values) v = u(rng);
    m.weights_.push_back(std::move(w));
    m.biases_.push_back(Array::zeros({out}));
  }
  return m;
}

Mlp Mlp::from_parameters(const MlpSpec& spec, std::uint64_t seed, std::span<const double> flat) {
  Mlp m = init(spec, seed);
  m.set_flat_parameters(flat);
  return m;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].numel() + biases_[l].numel();
  return n;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    flat.insert(flat.end(), weights_[l].values.begin(), weights_[l].values.end());
    flat.insert(flat.end(), biases_[l].values.begin(), biases_[l].values.end());
  }
  return flat;
}

void Mlp::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " values, model has " +
                     std::to_string(parameter_count()));
  }
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (double& v : weights_[l].values) v = flat[pos++];
    for (double& v : biases_[l].values) v = flat[pos++];
  }
}

// ---------------------------------------------------------------------------

BoundMlp::BoundMlp(Graph& graph, const Mlp& model, bool trainable)
    : graph_(&graph), spec_(model.spec()) {
  auto make = [&](Array a) { return trainable ? graph.variable(std::move(a)) : graph.constant(std::move(a)); };
  for (std::size_t l = 0; l < model.layers(); ++l) {
    const Array& w = model.weight(l);
    if (l == 0) {
      const std::size_t out = w.cols();
      const std::size_t kx = spec_.dim_x;
      std::vector<double> wx(w.values.begin(), w.values.begin() + kx * out);
      std::vector<double> wy(w.values.begin() + kx * out, w.values.end());
      params_.push_back(make(Array::matrix(kx, out, std::move(wx))));
      params_.push_back(make(Array::matrix(spec_.dim_y, out, std::move(wy))));
    } else {
      params_.push_back(make(w));
    }
    params_.push_back(make(model.bias(l)));
  }
}

Tensor BoundMlp::forward(const Tensor& x, const Tensor& y) const {
  if (y.shape().size() != 2 || y.shape()[1] != spec_.dim_y) {
    throw ShapeError("model: Y has shape " + shape_string(y.shape()) + ", expected [n x " +
                     std::to_string(spec_.dim_y) + "]");
  }
  const std::size_t n = y.shape()[0];
  if (x.shape() != Shape{n, spec_.dim_x}) {
    throw ShapeError("model: x has shape " + shape_string(x.shape()) + ", expected [" +
                     std::to_string(n) + "x" + std::to_string(spec_.dim_x) + "]");
  }
  Tensor h = affine(y, params_[1], params_[2]);
  if (spec_.dim_x > 0) h = add(h, matmul(x, params_[0]));
  for (std::size_t p = 3; p + 1 < params_.size(); p += 2) {
    h = spec_.activation == Activation::kTanh ? tanh(h) : softplus(h);
    h = affine(h, params_[p], params_[p + 1]);
  }
  return h;
}

std::vector<double> BoundMlp::flatten_gradients(std::span<const Tensor> grads) const {
  if (grads.size() != params_.size()) {
    throw ShapeError("flatten_gradients: expected " + std::to_string(params_.size()) +
                     " tensors, got " + std::to_string(grads.size()));
  }
  std::vector<double> flat;
  for (const Tensor& g : grads) flat.insert(flat.end(), g.values().begin(), g.values().end());
  return flat;
}

// ---------------------------------------------------------------------------

ScoreSource ScoreSource::analytic(Graph& graph, EnergyFn energy) {
  ScoreSource s;
  s.graph_ = &graph;
  s.energy_ = std::move(energy);
  return s;
}

ScoreSource ScoreSource::predictive(Graph& graph, ScoreFn score) {
  ScoreSource s;
  s.graph_ = &graph;
  s.score_ = std::move(score);
  return s;
}

ScoreSource ScoreSource::from_model(const BoundMlp& model) {
  auto fn = [model](const Tensor& x, const Tensor& y) { return model.forward(x, y); };
  if (model.spec().variant == ModelVariant::kEnergy) return analytic(model.graph(), fn);
  return predictive(model.graph(), fn);
}

Tensor ScoreSource::energies(const Tensor& x, const Tensor& y) const {
  if (!energy_) throw ConfigError("a predictive score source has no energy", "score_path");
  return energy_(x, y);
}

Tensor ScoreSource::score(const Tensor& x, const Tensor& y, bool retain) const {
  if (!energy_) return score_(x, y);
  const Tensor yv = y.graph() == graph_ ? y : graph_->variable(y.array());
  const Tensor total = sum(energy_(x, yv));
  return scale(-1.0, gradient(total, yv, retain));
}

Tensor energy(const ScoreSource& source, const Array& x, const Array& y) {
  const Tensor rows = source.energies(Tensor(as_rows(x, 1)), Tensor(as_rows(y, 1)));
  return sum(rows);
}

Array as_rows(const Array& a, std::size_t rows) {
  if (a.rank() == 2 && a.rows() == rows) return a;
  const std::size_t k = a.rank() == 0 ? 0 : a.numel();
  Array out = Array::zeros({rows, k});
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy(a.values.begin(), a.values.begin() + k, out.values.begin() + i * k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string double_to_hex(double v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double hex_to_double(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) {
    throw IoError("checkpoint: '" + s + "' is not a 16-digit hex double");
  }
  return std::bit_cast<double>(static_cast<std::uint64_t>(std::stoull(s, nullptr, 16)));
}

namespace {

nlohmann::json hex_array(std::span<const double> values) {
  nlohmann::json a = nlohmann::json::array();
  for (double v : values) a.push_back(double_to_hex(v));
  return a;
}

std::vector<double> from_hex_array(const nlohmann::json& a) {
  std::vector<double> out;
  out.reserve(a.size());
  for (const auto& s : a) out.push_back(hex_to_double(s.get<std::string>()));
  return out;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& checkpoint) {
  const Mlp& m = checkpoint.model;
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["spec"] = {{"widths", m.spec().widths},
               {"activation", to_string(m.spec().activation)},
               {"variant", to_string(m.spec().variant)}};
  j["seed"] = m.seed();
  j["dim_x"] = m.spec().dim_x;
  j["dim_y"] = m.spec().dim_y;
  j["parameters"] = hex_array(m.flat_parameters());
  if (checkpoint.optimizer) {
    j["optimizer"] = {{"step", checkpoint.optimizer->step},
                      {"m", hex_array(checkpoint.optimizer->m)},
                      {"v", hex_array(checkpoint.optimizer->v)}};
  }
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw IoError("checkpoint: unsupported format_version " + std::to_string(version));
    }
    MlpSpec spec;
    spec.widths = j.at("spec").at("widths").get<std::vector<std::size_t>>();
    spec.activation = parse_activation(j.at("spec").at("activation").get<std::string>());
    spec.variant = parse_variant(j.at("spec").at("variant").get<std::string>());
    spec.dim_x = j.at("dim_x").get<std::size_t>();
    spec.dim_y = j.at("dim_y").get<std::size_t>();
    Checkpoint c;
    c.model = Mlp::from_parameters(spec, j.at("seed").get<std::uint64_t>(),
                                   from_hex_array(j.at("parameters")));
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      c.optimizer = OptimizerState{o.at("step").get<std::uint64_t>(), from_hex_array(o.at("m")),
                                   from_hex_array(o.at("v"))};
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << checkpoint_to_json(checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace ebmlab

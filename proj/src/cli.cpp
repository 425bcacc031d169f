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

#include "ebmlab/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "ebmlab/data.hpp"
#include "ebmlab/error.hpp"
#include "ebmlab/eval.hpp"
#include "ebmlab/inference.hpp"
#include "ebmlab/losses.hpp"
#include "ebmlab/models.hpp"
#include "ebmlab/training.hpp"

namespace ebmlab::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* const kCommands[] = {"train", "sample", "eval", "gradcheck"};

std::string default_out() {
  const char* env = std::getenv("EBMLAB_OUT");
  return env && *env ? env : "runs";
}

json task_defaults(const std::string& kind) {
  if (kind == "conditional") {
    return {{"a", {{1.0, 0.0}, {0.0, 1.0}}}, {"sigma", 0.3}, {"lambda", 0.8}};
  }
  if (kind == "mixture") {
    return {{"weights", {0.5, 0.5}},
            {"means", {{-2.0, 0.0}, {2.0, 0.0}}},
            {"sigmas", {{1.0, 1.0}, {1.0, 1.0}}}};
  }
  if (kind == "gaussian") return {{"mean", {0.0, 0.0}}, {"sigma", 1.0}};
  if (kind == "ring") return {{"radius", 1.0}, {"width", 0.1}, {"dim", 2}};
  if (kind == "csv") return {{"path", ""}, {"dim_y", 2}, {"has_condition", false}};
  throw ConfigError("unknown task kind '" + kind +
                        "' (expected conditional, mixture, gaussian, ring or csv)",
                    "task.kind");
}

json gradcheck_defaults() {
  return {{"h", 1e-4},       {"points", 5}, {"tolerance", 1e-4},
          {"loss", nullptr}, {"batch", 4},  {"coords", 0}};
}

// Walks a dotted path; every segment must name an object member.
const json& at_path(const json& cfg, const std::string& path) {
  const json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string seg = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(seg)) {
      throw ConfigError("missing config key '" + path + "'", path);
    }
    node = &(*node)[seg];
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

template <class T>
T get(const json& cfg, const std::string& key);

template <>
double get<double>(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number", key);
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError("config key '" + key + "' must be finite", key);
  return d;
}

template <>
std::uint64_t get<std::uint64_t>(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  throw ConfigError("config key '" + key + "' must be a non-negative integer", key);
}

template <>
bool get<bool>(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false", key);
  return v.get<bool>();
}

template <>
std::string get<std::string>(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string", key);
  return v.get<std::string>();
}

std::size_t get_size(const json& cfg, const std::string& key) {
  return static_cast<std::size_t>(get<std::uint64_t>(cfg, key));
}

std::vector<double> get_doubles(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_array()) throw ConfigError("config key '" + key + "' must be a list of numbers", key);
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError("config key '" + key + "' must be a list of numbers", key);
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::vector<double>> get_matrix(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_array()) throw ConfigError("config key '" + key + "' must be a list of lists", key);
  std::vector<std::vector<double>> out;
  for (const auto& row : v) {
    if (!row.is_array()) throw ConfigError("config key '" + key + "' must be a list of lists", key);
    std::vector<double> r;
    for (const auto& e : row) {
      if (!e.is_number()) throw ConfigError("config key '" + key + "' must hold numbers", key);
      r.push_back(e.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> get_sizes(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_array()) throw ConfigError("config key '" + key + "' must be a list of integers", key);
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
      throw ConfigError("config key '" + key + "' must be a list of non-negative integers", key);
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

// Wraps parse errors from enum parsers so they name the full key.
template <class F>
auto parse_key(const json& cfg, const std::string& key, F parse) {
  const std::string s = get<std::string>(cfg, key);
  try {
    return parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), key);
  }
}

void deep_merge(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      deep_merge(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

void set_path(json& cfg, const std::string& path, const json& value) {
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string seg = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (seg.empty()) throw ConfigError("malformed config key '" + path + "'", path);
    if (dot == std::string::npos) {
      (*node)[seg] = value;
      return;
    }
    json& child = (*node)[seg];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError("config key '" + path + "' is not a section", path);
    node = &child;
    start = dot + 1;
  }
}

// Every key of `cfg` must appear in `allowed`; sections are checked recursively.
void check_keys(const json& cfg, const json& allowed, const std::string& prefix) {
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!allowed.contains(it.key())) throw ConfigError("unknown config key '" + key + "'", key);
    const json& a = allowed[it.key()];
    if (a.is_object()) {
      if (!it->is_object()) throw ConfigError("config key '" + key + "' must be a section", key);
      check_keys(*it, a, key);
    }
  }
}

bool is_command(const std::string& c) {
  for (const char* k : kCommands) {
    if (c == k) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Typed views of a resolved config

struct TaskSetup {
  std::string kind;
  Dataset data;
  std::optional<ConditionalTask> conditional;
  std::optional<SyntheticDistribution> dist;
  std::uint64_t seed = 0;

  std::size_t dim_x() const { return data.dim_x(); }
  std::size_t dim_y() const { return data.dim_y(); }
};

// Held-out draws use a stream disjoint from the training sample.
std::uint64_t heldout_seed(const TaskSetup& task) { return task.seed ^ 0x5bd1e995ULL; }

TaskSetup build_task(const json& cfg) {
  TaskSetup t;
  t.kind = get<std::string>(cfg, "task.kind");
  t.seed = get<std::uint64_t>(cfg, "task.seed");
  const std::size_t n = get_size(cfg, "task.train_size");
  if (t.kind == "conditional") {
    const auto rows = get_matrix(cfg, "task.a");
    if (rows.empty() || rows.front().empty()) throw ConfigError("task.a must be non-empty", "task.a");
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw ConfigError("task.a rows differ in length", "task.a");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    ConditionalTask task;
    task.a = Array::matrix(rows.size(), rows.front().size(), flat);
    task.sigma = get<double>(cfg, "task.sigma");
    task.lambda = get<double>(cfg, "task.lambda");
    task.validate();
    t.conditional = task;
    t.data = sample_task(task, n, t.seed);
    return t;
  }
  if (t.kind == "csv") {
    const std::string path = get<std::string>(cfg, "task.path");
    if (path.empty()) throw ConfigError("task.path is required for csv tasks", "task.path");
    t.data = load_csv(path, get_size(cfg, "task.dim_y"), get<bool>(cfg, "task.has_condition"));
    return t;
  }
  if (t.kind == "mixture") {
    MixtureSpec spec;
    spec.weights = get_doubles(cfg, "task.weights");
    spec.means = get_matrix(cfg, "task.means");
    spec.sigmas = get_matrix(cfg, "task.sigmas");
    t.dist = SyntheticDistribution::mixture(spec);
  } else if (t.kind == "gaussian") {
    t.dist = SyntheticDistribution::gaussian(get_doubles(cfg, "task.mean"), get<double>(cfg, "task.sigma"));
  } else if (t.kind == "ring") {
    RingSpec spec;
    spec.radius = get<double>(cfg, "task.radius");
    spec.width = get<double>(cfg, "task.width");
    spec.dim = get_size(cfg, "task.dim");
    t.dist = SyntheticDistribution::ring(spec);
  }
  t.data = unconditional(t.dist->sample(n, t.seed));
  return t;
}

bool needs_negatives(LossKind loss) {
  return loss == LossKind::kNce || loss == LossKind::kDelta || loss == LossKind::kFm;
}

MlpSpec build_spec(const json& cfg, const TaskSetup& task, LossKind loss) {
  const ModelVariant variant = variant_for(parse_key(cfg, "model.score_path", parse_score_path));
  const std::size_t dim_x = task.dim_x() + (loss == LossKind::kFm ? 1 : 0);
  return make_spec(variant, dim_x, task.dim_y(), get_sizes(cfg, "model.hidden"),
                   parse_key(cfg, "model.activation", parse_activation));
}

NegativeSampler build_negatives(const json& cfg) {
  NegativeSampler s;
  s.strategy = parse_key(cfg, "negatives.strategy", parse_negative_strategy);
  s.sigma_noise = get<double>(cfg, "negatives.sigma");
  s.seed = get<std::uint64_t>(cfg, "seed");
  return s;
}

TrainConfig build_train_config(const json& cfg) {
  TrainConfig tc;
  tc.loss = parse_key(cfg, "train.loss", parse_loss);
  tc.score_path = parse_key(cfg, "model.score_path", parse_score_path);
  tc.optimizer = parse_key(cfg, "train.optimizer", parse_optimizer);
  tc.lr = get<double>(cfg, "train.lr");
  tc.batch = get_size(cfg, "train.batch");
  tc.steps = get_size(cfg, "train.steps");
  tc.beta1 = get<double>(cfg, "train.beta1");
  tc.beta2 = get<double>(cfg, "train.beta2");
  tc.eps = get<double>(cfg, "train.eps");
  tc.seed = get<std::uint64_t>(cfg, "seed");
  tc.eval_every = get_size(cfg, "train.eval_every");
  tc.checkpoint_every = get_size(cfg, "train.checkpoint_every");
  tc.projection = parse_key(cfg, "train.projection", parse_projection);
  tc.projections = get_size(cfg, "train.projections");
  tc.trace_limit = get_size(cfg, "train.trace_limit");
  tc.log_wall_time = get<bool>(cfg, "train.log_wall_time");
  try {
    tc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), e.key() == "score_path" ? "model.score_path" : "train." + e.key());
  }
  return tc;
}

TrainingData build_training_data(const TaskSetup& task, std::optional<NegativeSampler> negatives) {
  TrainingData d;
  d.dataset = task.data;
  d.negatives = negatives;
  d.task = task.conditional;
  if (task.dist && task.dist->dim() == 2 && task.dim_x() == 0) {
    d.oracle = task.dist;
    d.grid = Grid{};
  }
  return d;
}

// Model of an eval/gradcheck run: the checkpoint when given, else a fresh init.
Mlp load_or_init(const json& cfg, const MlpSpec& spec) {
  const std::string path = get<std::string>(cfg, "checkpoint");
  if (path.empty()) return Mlp::init(spec, get<std::uint64_t>(cfg, "model.seed"));
  return load_checkpoint(path).model;
}

void check_model_fits(const Mlp& model, const TaskSetup& task) {
  const MlpSpec& s = model.spec();
  if (s.dim_y != task.dim_y() || s.dim_x != task.dim_x()) {
    std::string msg = "checkpoint expects dim_x=" + std::to_string(s.dim_x) +
                      ", dim_y=" + std::to_string(s.dim_y) + " but the task has dim_x=" +
                      std::to_string(task.dim_x()) + ", dim_y=" + std::to_string(task.dim_y());
    if (s.dim_x == task.dim_x() + 1) msg += " (flow-matching velocity models are not sampled)";
    throw ConfigError(msg, "checkpoint");
  }
}

void ensure_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const json& cfg, std::ostream& out) {
  const std::string dir = get<std::string>(cfg, "out");
  const TaskSetup task = build_task(cfg);
  const TrainConfig tc = build_train_config(cfg);
  const MlpSpec spec = build_spec(cfg, task, tc.loss);

  std::optional<NegativeSampler> negatives;
  if (needs_negatives(tc.loss)) negatives = build_negatives(cfg);
  const TrainingData data = build_training_data(task, negatives);

  Mlp model = Mlp::init(spec, get<std::uint64_t>(cfg, "model.seed"));
  std::optional<OptimizerState> resume;
  const std::string resume_path = get<std::string>(cfg, "resume");
  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    if (!(ck.model.spec() == spec)) {
      throw ConfigError("resume checkpoint does not match the configured model", "resume");
    }
    if (!ck.optimizer) throw ConfigError("resume checkpoint has no optimizer state", "resume");
    model = ck.model;
    resume = ck.optimizer;
  }

  ensure_out(dir);
  if (tc.checkpoint_every > 0) ensure_out(join(dir, "checkpoints"));
  auto hook = [&](std::size_t step, const Mlp& m, const OptimizerState& opt) {
    char name[48];
    std::snprintf(name, sizeof name, "step_%06zu.json", step);
    save_checkpoint(join(join(dir, "checkpoints"), name), {m, opt});
  };
  const TrainResult result = train(tc, model, data, resume, hook);
  save_checkpoint(join(dir, "checkpoint.json"), {result.model, result.optimizer});
  write_metrics_csv(join(dir, "metrics.csv"), result.log);

  out << "trained " << to_string(tc.loss) << " for " << result.optimizer.step << " steps";
  if (!result.log.empty()) {
    const MetricRecord& last = result.log.back();
    out << "; loss " << fmt(last.loss);
    if (last.score_mse) out << ", score-field mse " << fmt(*last.score_mse);
  }
  out << "\nwrote " << join(dir, "checkpoint.json") << " and " << join(dir, "metrics.csv") << "\n";
  return kExitOk;
}

int cmd_sample(const json& cfg, std::ostream& out) {
  const std::string dir = get<std::string>(cfg, "out");
  const std::string ck_path = get<std::string>(cfg, "checkpoint");
  if (ck_path.empty()) throw ConfigError("sample needs --checkpoint", "checkpoint");
  const Checkpoint ck = load_checkpoint(ck_path);
  const TaskSetup task = build_task(cfg);
  check_model_fits(ck.model, task);

  SamplerConfig sc;
  sc.method = parse_key(cfg, "sample.method", parse_sampler_method);
  sc.rho = get<double>(cfg, "sample.rho");
  sc.steps = get_size(cfg, "sample.steps");
  sc.seed = get<std::uint64_t>(cfg, "seed");
  sc.record_every = get_size(cfg, "sample.record_every");
  sc.chain_offset = get<std::uint64_t>(cfg, "sample.chain_offset");
  sc.schedule = constant_schedule({get<double>(cfg, "sample.alpha"), get<double>(cfg, "sample.beta"),
                                   get<double>(cfg, "sample.sigma")},
                                  sc.steps);
  sc.validate();

  Array x, y;
  const std::string input = get<std::string>(cfg, "sample.input");
  if (!input.empty()) {
    const Dataset in = load_csv(input, task.dim_y(), task.dim_x() > 0);
    x = in.x;
    y = in.y;
  } else {
    const std::size_t n = get_size(cfg, "sample.n");
    Rng rng(sc.seed);
    x = standard_normal({n, task.dim_x()}, rng);
    const std::string init = get<std::string>(cfg, "sample.init");
    if (init == "gaussian") {
      y = standard_normal({n, task.dim_y()}, rng);
      const double s = get<double>(cfg, "sample.init_sigma");
      for (double& v : y.values) v *= s;
    } else if (init == "base_predictor") {
      if (!task.conditional) {
        throw ConfigError("sample.init=base_predictor needs a conditional task", "sample.init");
      }
      y = task.conditional->base_prediction(x);
    } else {
      throw ConfigError("unknown sample.init '" + init + "' (expected gaussian or base_predictor)",
                        "sample.init");
    }
  }

  Graph graph;
  const BoundMlp bound(graph, ck.model, false);
  const ScoreSource source = ScoreSource::from_model(bound);
  const Trajectory traj = run_sampler(source, x, y, sc);

  ensure_out(dir);
  save_csv(join(dir, "samples.csv"), Dataset{x, traj.final});
  if (get<bool>(cfg, "sample.trajectory")) write_trajectory_csv(join(dir, "trajectory.csv"), traj);
  out << to_string(sc.method) << ": " << y.rows() << " chains, " << sc.steps << " steps\nwrote "
      << join(dir, "samples.csv") << "\n";
  return kExitOk;
}

Array normal_rows(std::size_t n, std::size_t d, Rng& rng) { return standard_normal({n, d}, rng); }

EvalReport suite_gradcheck(const json& cfg, const TaskSetup& task) {
  const ScorePath path = parse_key(cfg, "model.score_path", parse_score_path);
  const LossKind loss = parse_key(cfg, "gradcheck.loss", parse_loss);
  const double h = get<double>(cfg, "gradcheck.h");
  const double tol = get<double>(cfg, "gradcheck.tolerance");
  const std::size_t points = get_size(cfg, "gradcheck.points");
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  if (points == 0) throw ConfigError("gradcheck.points must be >= 1", "gradcheck.points");

  const MlpSpec spec = build_spec(cfg, task, loss);
  const Mlp model = load_or_init(cfg, spec);
  if (model.spec().variant != variant_for(path)) {
    throw ConfigError("checkpoint variant does not match model.score_path", "model.score_path");
  }

  EvalReport report;
  report.name = "gradcheck";
  Graph graph;
  const BoundMlp bound(graph, model, false);
  const ScoreSource source = ScoreSource::from_model(bound);
  const std::size_t kx = model.spec().dim_x, d = model.spec().dim_y;

  if (source.is_analytic()) {
    Rng rng(seed);
    double score_err = 0.0, hvp_err = 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      const Array x = normal_rows(1, kx, rng);
      const Array y = normal_rows(1, d, rng);
      const Array v = normal_rows(1, d, rng);
      score_err = std::max(score_err, score_grad_check(source, x, y, h));

      std::vector<double> analytic;
      {
        GraphScope scope(graph);
        const Tensor yv = graph.variable(y);
        const Tensor e = sum(source.energies(Tensor(x), yv));
        analytic = hvp(e, yv, Tensor(v)).array().values;
      }
      // −S is the energy gradient, so differences of S give −Hv.
      Array yp = y, ym = y;
      for (std::size_t j = 0; j < d; ++j) {
        yp.values[j] += h * v.values[j];
        ym.values[j] -= h * v.values[j];
      }
      const Array sp = evaluate_score(source, x, yp), sm = evaluate_score(source, x, ym);
      std::vector<double> numeric(d);
      for (std::size_t j = 0; j < d; ++j) numeric[j] = -(sp.values[j] - sm.values[j]) / (2.0 * h);
      hvp_err = std::max(hvp_err, relative_error(analytic, numeric));
    }
    report.add({"score_rel_err", score_err, tol, "<=", {seed}});
    report.add({"hvp_rel_err", hvp_err, tol, "<=", {seed}});
  }

  TrainConfig tc;
  tc.loss = loss;
  tc.score_path = path;
  tc.seed = seed;
  tc.batch = get_size(cfg, "gradcheck.batch");
  tc.validate();
  std::optional<NegativeSampler> negatives;
  if (needs_negatives(loss)) negatives = build_negatives(cfg);
  const TrainingData data = build_training_data(task, negatives);
  Rng rng = step_rng(seed, 0);
  const LossBatch batch = make_batch(tc, data, 0, rng);

  std::vector<std::size_t> coords;
  const std::size_t want = get_size(cfg, "gradcheck.coords");
  const std::size_t total = model.parameter_count();
  if (want > 0 && want < total) {
    for (std::size_t i = 0; i < want; ++i) coords.push_back(i * total / want);
  }
  const ParameterCheck pc = parameter_grad_check(tc, model, batch, h, coords);
  report.add({"loss_param_rel_err", pc.max_rel, tol, "<=", {seed}});
  report.add({"loss_param_norm_rel_err", pc.norm_rel, std::nullopt, "", {seed}});
  return report;
}

EvalReport suite_hutchinson(const json& cfg, const TaskSetup& task) {
  const MlpSpec spec = build_spec(cfg, task, LossKind::kSsm);
  const Mlp model = load_or_init(cfg, spec);
  check_model_fits(model, task);
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  Graph graph;
  const BoundMlp bound(graph, model, false);
  const ScoreSource source = ScoreSource::from_model(bound);
  Rng rng(seed);
  const Array x = normal_rows(1, model.spec().dim_x, rng);
  const Array y = normal_rows(1, model.spec().dim_y, rng);
  const HutchinsonResult r =
      hutchinson_check(source, x, y, get_size(cfg, "eval.draws"), seed,
                       parse_key(cfg, "eval.projection", parse_projection));
  EvalReport report;
  report.name = "hutchinson";
  report.add({"estimate", r.mean, std::nullopt, "", {seed}});
  report.add({"exact_trace", r.exact, std::nullopt, "", {seed}});
  report.add({"stderr", r.stderr_, std::nullopt, "", {seed}});
  report.add({"z", r.z, std::nullopt, "", {seed}});
  report.add({"abs_z", std::abs(r.z), get<double>(cfg, "eval.z_max"), "<=", {seed}});
  return report;
}

void require_2d_synthetic(const TaskSetup& task, const std::string& suite) {
  if (!task.dist || task.dim_x() != 0) {
    throw ConfigError(suite + " needs an unconditional synthetic task", "task.kind");
  }
}

EvalReport suite_score_field(const json& cfg, const TaskSetup& task, const std::string& dir) {
  require_2d_synthetic(task, "score-field");
  if (task.dim_y() != 2) throw ConfigError("score-field needs a 2-D task", "task.kind");
  const Mlp model = load_or_init(cfg, build_spec(cfg, task, LossKind::kSsm));
  check_model_fits(model, task);
  Graph graph;
  const BoundMlp bound(graph, model, false);
  const ScoreSource source = ScoreSource::from_model(bound);
  const Grid grid;
  const std::vector<double> errors = score_field_errors(source, *task.dist, grid);
  double mse = 0.0;
  for (double e : errors) mse += e;
  mse /= static_cast<double>(errors.size());
  const Array truth = task.dist->score(grid.points());
  double baseline = 0.0;
  for (double v : truth.values) baseline += v * v;
  baseline /= static_cast<double>(truth.rows());

  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  EvalReport report;
  report.name = "score-field";
  report.add({"score_mse", mse, std::nullopt, "", {seed}});
  report.add({"zero_baseline_mse", baseline, std::nullopt, "", {seed}});
  report.add({"mse_ratio", mse / baseline, get<double>(cfg, "eval.ratio_threshold"), "<", {seed}});
  report.grid = grid;
  report.grid_values = errors;
  write_grid_csv(join(dir, "grid.csv"), grid, errors);
  return report;
}

EvalReport suite_step_sweep(const json& cfg, const TaskSetup& task, const std::string& dir) {
  if (!task.conditional) throw ConfigError("step-sweep needs a conditional task", "task.kind");
  const Mlp model = load_or_init(cfg, build_spec(cfg, task, LossKind::kDelta));
  check_model_fits(model, task);
  Graph graph;
  const BoundMlp bound(graph, model, false);
  const ScoreSource source = ScoreSource::from_model(bound);
  SweepConfig sc;
  sc.rho = get<double>(cfg, "eval.rho");
  sc.heldout = get_size(cfg, "eval.heldout");
  sc.seed = heldout_seed(task);
  const std::vector<std::size_t> steps = get_sizes(cfg, "eval.steps");
  if (steps.empty()) throw ConfigError("eval.steps must list at least one step count", "eval.steps");
  const SweepResult result = step_sweep(source, *task.conditional, steps, sc);
  EvalReport report = sweep_report(result, sc);
  std::ostringstream csv;
  for (const auto& row : report.table) {
    for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
    csv << "\n";
  }
  write_text(join(dir, "sweep.csv"), csv.str());
  return report;
}

EvalReport suite_sample_quality(const json& cfg, const TaskSetup& task) {
  require_2d_synthetic(task, "sample-quality");
  const Mlp model = load_or_init(cfg, build_spec(cfg, task, LossKind::kSsm));
  check_model_fits(model, task);
  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  const std::size_t n = get_size(cfg, "eval.samples");
  Graph graph;
  const BoundMlp bound(graph, model, false);
  const ScoreSource source = ScoreSource::from_model(bound);

  Rng rng(seed);
  const Array init = standard_normal({n, task.dim_y()}, rng);
  SamplerConfig sc = classical_langevin(get<double>(cfg, "eval.langevin_rho"),
                                        get_size(cfg, "eval.langevin_steps"), seed);
  sc.record_every = std::max<std::size_t>(sc.steps, 1);
  const Array samples = run_sampler(source, Array::zeros({0}), init, sc).final;
  const Array heldout = task.dist->sample(n, heldout_seed(task));

  const double ed = energy_distance(samples, heldout);
  const double ed0 = energy_distance(init, heldout);
  EvalReport report;
  report.name = "sample-quality";
  report.add({"energy_distance", ed, std::nullopt, "", {seed}});
  report.add({"energy_distance_init", ed0, std::nullopt, "", {seed}});
  report.add({"mmd_rbf", mmd_rbf(samples, heldout), std::nullopt, "", {seed}});
  report.add({"energy_distance_ratio", ed / ed0, get<double>(cfg, "eval.ed_ratio"), "<=", {seed}});
  return report;
}

int finish_report(const EvalReport& report, const std::string& dir, std::ostream& out) {
  write_report_json(join(dir, "report.json"), report);
  if (!report.table.empty()) {
    for (const auto& row : report.table) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << row[i];
      out << "\n";
    }
  }
  std::vector<std::string> failed;
  for (const auto& m : report.metrics) {
    out << m.name << " = " << fmt(m.value);
    if (const auto ok = m.pass()) {
      out << "  [" << (*ok ? "pass" : "FAIL") << " " << m.op << " " << fmt(*m.threshold) << "]";
      if (!*ok) failed.push_back(m.name);
    }
    out << "\n";
  }
  out << "wrote " << join(dir, "report.json") << "\n";
  if (!failed.empty()) {
    out << "threshold failures:";
    for (const auto& f : failed) out << " " << f;
    out << "\n";
    return kExitThreshold;
  }
  return kExitOk;
}

int cmd_eval(const json& cfg, std::ostream& out) {
  const std::string dir = get<std::string>(cfg, "out");
  const std::string suite = get<std::string>(cfg, "eval.suite");
  const TaskSetup task = build_task(cfg);
  ensure_out(dir);
  EvalReport report;
  if (suite == "gradcheck") {
    report = suite_gradcheck(cfg, task);
  } else if (suite == "hutchinson") {
    report = suite_hutchinson(cfg, task);
  } else if (suite == "score-field") {
    report = suite_score_field(cfg, task, dir);
  } else if (suite == "step-sweep") {
    report = suite_step_sweep(cfg, task, dir);
  } else if (suite == "sample-quality") {
    report = suite_sample_quality(cfg, task);
  } else {
    throw ConfigError("unknown suite '" + suite +
                          "' (expected gradcheck, hutchinson, score-field, step-sweep or "
                          "sample-quality)",
                      "eval.suite");
  }
  return finish_report(report, dir, out);
}

int cmd_gradcheck(const json& cfg, std::ostream& out) {
  const std::string dir = get<std::string>(cfg, "out");
  const TaskSetup task = build_task(cfg);
  ensure_out(dir);
  return finish_report(suite_gradcheck(cfg, task), dir, out);
}

// ---------------------------------------------------------------------------
// Argument parsing

enum class FlagType { kText, kValue, kList };

struct FlagBinding {
  CLI::Option* option;
  std::string key;
  FlagType type;
  std::shared_ptr<std::string> storage;
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config;
  std::vector<std::string> sets;
  std::vector<FlagBinding> flags;

  void bind(const std::string& flag, const std::string& key, FlagType type,
            const std::string& help) {
    auto storage = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option(flag, *storage, help);
    flags.push_back({opt, key, type, storage});
  }
};

json flag_value(const FlagBinding& f) {
  const std::string& text = *f.storage;
  switch (f.type) {
    case FlagType::kText: return text;
    case FlagType::kValue: return parse_override("v=" + text).second;
    case FlagType::kList: {
      json arr = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) arr.push_back(parse_override("v=" + item).second);
      return arr;
    }
  }
  return text;
}

}  // namespace

// ---------------------------------------------------------------------------

std::pair<std::string, json> parse_override(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + text + "' must look like key=value", text);
  }
  const std::string key = text.substr(0, eq);
  const std::string value = text.substr(eq + 1);
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  return {key, parsed};
}

json default_config(const std::string& command) {
  if (!is_command(command)) throw ConfigError("unknown command '" + command + "'", "command");
  json cfg = {
      {"command", command},
      {"seed", 0},
      {"threads", 1},
      {"out", default_out()},
      {"task", {{"kind", command == "eval" || command == "gradcheck" ? "conditional" : "mixture"},
                {"train_size", 2000},
                {"seed", nullptr}}},
  };
  if (command != "sample") {
    cfg["model"] = {{"hidden", {64, 64}},
                    {"activation", "tanh"},
                    {"score_path", "analytic"},
                    {"seed", nullptr}};
    cfg["negatives"] = {{"strategy", nullptr}, {"sigma", 0.5}};
  }
  if (command == "train") {
    const TrainConfig d;
    cfg["train"] = {{"loss", to_string(d.loss)},
                    {"optimizer", to_string(d.optimizer)},
                    {"lr", d.lr},
                    {"batch", d.batch},
                    {"steps", d.steps},
                    {"beta1", d.beta1},
                    {"beta2", d.beta2},
                    {"eps", d.eps},
                    {"eval_every", d.eval_every},
                    {"checkpoint_every", d.checkpoint_every},
                    {"projection", to_string(d.projection)},
                    {"projections", d.projections},
                    {"trace_limit", d.trace_limit},
                    {"log_wall_time", d.log_wall_time}};
    cfg["resume"] = "";
  } else {
    cfg["checkpoint"] = "";
  }
  if (command == "sample") {
    cfg["sample"] = {{"method", "langevin"}, {"steps", 100},       {"rho", 1e-2},
                     {"alpha", 1.0},         {"beta", nullptr},    {"sigma", 0.0},
                     {"n", 1000},            {"record_every", 1},  {"chain_offset", 0},
                     {"trajectory", true},   {"init", "gaussian"}, {"init_sigma", 1.0},
                     {"input", ""}};
  }
  if (command == "eval") {
    cfg["eval"] = {{"suite", "gradcheck"},
                   {"draws", 10000},
                   {"projection", "gaussian"},
                   {"z_max", 3.0},
                   {"steps", {0, 1, 10, 50, 100}},
                   {"rho", 1.0},
                   {"heldout", 500},
                   {"ratio_threshold", 0.2},
                   {"samples", 2000},
                   {"langevin_steps", 500},
                   {"langevin_rho", 1e-2},
                   {"ed_ratio", 0.5}};
  }
  if (command == "eval" || command == "gradcheck") cfg["gradcheck"] = gradcheck_defaults();
  return cfg;
}

json resolve_config(const std::string& command, const json& file,
                    const std::vector<std::pair<std::string, json>>& overrides) {
  json cfg = default_config(command);
  if (!file.is_null()) {
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object", "config");
    if (file.contains("command") && file["command"] != command) {
      throw ConfigError("config file was resolved for '" + file["command"].dump() + "'", "command");
    }
    deep_merge(cfg, file);
  }
  for (const auto& [key, value] : overrides) set_path(cfg, key, value);

  // Defaults that depend on other fields.
  const std::string kind = get<std::string>(cfg, "task.kind");
  json allowed = default_config(command);
  const json kind_defaults = task_defaults(kind);
  for (auto it = kind_defaults.begin(); it != kind_defaults.end(); ++it) {
    allowed["task"][it.key()] = *it;
    if (!cfg["task"].contains(it.key())) cfg["task"][it.key()] = *it;
  }
  check_keys(cfg, allowed, "");

  const std::uint64_t seed = get<std::uint64_t>(cfg, "seed");
  if (cfg["task"]["seed"].is_null()) cfg["task"]["seed"] = seed;
  if (cfg.contains("model") && cfg["model"]["seed"].is_null()) cfg["model"]["seed"] = seed;
  if (get<std::uint64_t>(cfg, "threads") == 0) throw ConfigError("threads must be >= 1", "threads");

  if (cfg.contains("gradcheck") && cfg["gradcheck"]["loss"].is_null()) {
    cfg["gradcheck"]["loss"] =
        get<std::string>(cfg, "model.score_path") == "analytic" ? "ssm" : "delta";
  }
  if (cfg.contains("negatives") && cfg["negatives"]["strategy"].is_null()) {
    std::string loss = "ssm";
    if (cfg.contains("train")) loss = get<std::string>(cfg, "train.loss");
    if (cfg.contains("gradcheck")) loss = get<std::string>(cfg, "gradcheck.loss");
    NegativeStrategy s = NegativeStrategy::kGaussianJitter;
    if (loss == "fm") {
      s = NegativeStrategy::kGaussianNoise;
    } else if (kind == "conditional") {
      s = NegativeStrategy::kBasePredictor;
    }
    cfg["negatives"]["strategy"] = to_string(s);
  }
  if (cfg.contains("sample") && cfg["sample"]["beta"].is_null()) {
    cfg["sample"]["beta"] = cfg["sample"]["rho"];
  }
  return cfg;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ebmlab: energy-based model training, inference and verification"};
  app.name("ebmlab");
  app.require_subcommand(1);

  std::vector<Subcommand> subs(4);
  const char* help[] = {"Train a model and write checkpoint.json and metrics.csv",
                        "Run an inference sampler from a checkpoint",
                        "Evaluate a checkpoint (or a fresh init) against a suite",
                        "Finite-difference checks of scores, HVPs and loss gradients"};
  for (std::size_t i = 0; i < subs.size(); ++i) {
    Subcommand& s = subs[i];
    s.app = app.add_subcommand(kCommands[i], help[i]);
    s.app->add_option("--config", s.config, "JSON run configuration")->check(CLI::ExistingFile);
    s.app->add_option("--set", s.sets, "Override a config key, e.g. --set train.lr=1e-3 (repeatable)");
    s.bind("--seed", "seed", FlagType::kValue, "Master seed");
    s.bind("--out", "out", FlagType::kText, "Output directory (default $EBMLAB_OUT or runs)");
    s.bind("--threads", "threads", FlagType::kValue, "Worker cap (computation is serial)");
    s.bind("--task", "task.kind", FlagType::kText, "conditional, mixture, gaussian, ring or csv");
  }
  Subcommand& train_cmd = subs[0];
  train_cmd.bind("--loss", "train.loss", FlagType::kText, "nce, sm, ssm, delta or fm");
  train_cmd.bind("--score-path", "model.score_path", FlagType::kText, "analytic or predictive");
  train_cmd.bind("--steps", "train.steps", FlagType::kValue, "Optimizer steps");
  train_cmd.bind("--lr", "train.lr", FlagType::kValue, "Learning rate");
  train_cmd.bind("--batch", "train.batch", FlagType::kValue, "Mini-batch size");
  train_cmd.bind("--resume", "resume", FlagType::kText, "Continue from a checkpoint with optimizer state");

  Subcommand& sample_cmd = subs[1];
  sample_cmd.bind("--checkpoint", "checkpoint", FlagType::kText, "Model checkpoint");
  sample_cmd.bind("--method", "sample.method", FlagType::kText, "langevin, denoise or one-step");
  sample_cmd.bind("--steps", "sample.steps", FlagType::kValue, "Sampler steps");
  sample_cmd.bind("--rho", "sample.rho", FlagType::kValue, "Langevin step size");
  sample_cmd.bind("--alpha", "sample.alpha", FlagType::kValue, "Denoise alpha");
  sample_cmd.bind("--beta", "sample.beta", FlagType::kValue, "Denoise beta (default rho)");
  sample_cmd.bind("--sigma", "sample.sigma", FlagType::kValue, "Denoise noise scale");
  sample_cmd.bind("--n", "sample.n", FlagType::kValue, "Chains when no --input is given");
  sample_cmd.bind("--input", "sample.input", FlagType::kText, "CSV of initial rows");
  sample_cmd.bind("--init", "sample.init", FlagType::kText, "gaussian or base_predictor");

  Subcommand& eval_cmd = subs[2];
  eval_cmd.bind("--checkpoint", "checkpoint", FlagType::kText, "Model checkpoint (default: fresh init)");
  eval_cmd.bind("--suite", "eval.suite", FlagType::kText,
                "gradcheck, hutchinson, score-field, step-sweep or sample-quality");
  eval_cmd.bind("--draws", "eval.draws", FlagType::kValue, "Hutchinson draws");
  eval_cmd.bind("--steps", "eval.steps", FlagType::kList, "Step counts for step-sweep, e.g. 0,1,10");
  eval_cmd.bind("--rho", "eval.rho", FlagType::kValue, "Step size for step-sweep");
  eval_cmd.bind("--score-path", "model.score_path", FlagType::kText, "analytic or predictive");

  Subcommand& gc_cmd = subs[3];
  gc_cmd.bind("--checkpoint", "checkpoint", FlagType::kText, "Model checkpoint (default: fresh init)");
  gc_cmd.bind("--loss", "gradcheck.loss", FlagType::kText, "Loss whose parameter gradient is checked");
  gc_cmd.bind("--score-path", "model.score_path", FlagType::kText, "analytic or predictive");
  gc_cmd.bind("--step-size", "gradcheck.h", FlagType::kValue, "Finite-difference step");

  std::vector<const char*> argv{"ebmlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    const Subcommand& s = subs[i];
    if (!s.app->parsed()) continue;
    const std::string command = kCommands[i];
    try {
      json file;
      if (!s.config.empty()) {
        std::ifstream f(s.config);
        file = json::parse(f, nullptr, false);
        if (file.is_discarded()) throw ConfigError("cannot parse " + s.config + " as JSON", "config");
      }
      std::vector<std::pair<std::string, json>> overrides;
      for (const auto& text : s.sets) overrides.push_back(parse_override(text));
      for (const auto& f : s.flags) {
        if (f.option->count() > 0) overrides.emplace_back(f.key, flag_value(f));
      }
      const json cfg = resolve_config(command, file, overrides);
      const std::string dir = get<std::string>(cfg, "out");
      ensure_out(dir);
      write_text(join(dir, command + "_config.json"), cfg.dump(2) + "\n");

      if (command == "train") return cmd_train(cfg, out);
      if (command == "sample") return cmd_sample(cfg, out);
      if (command == "eval") return cmd_eval(cfg, out);
      return cmd_gradcheck(cfg, out);
    } catch (const ConfigError& e) {
      err << "config error";
      if (!e.key().empty()) err << " [" << e.key() << "]";
      err << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const NumericError& e) {
      err << "numerical abort";
      if (e.step() >= 0) err << " at step " << e.step();
      err << ": " << e.what() << "\n";
      return kExitNumeric;
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  }
  err << "no subcommand given\n";
  return kExitUsage;
}

}  // namespace ebmlab::cli

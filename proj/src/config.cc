// Copyright 2026 The MetaCPO Authors.
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

#include "metacpo/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "metacpo/digest.hpp"

extern char** environ;

namespace metacpo {

namespace {

// Reads the keys of one mapping and remembers which were consumed, so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(fmt::format("{}: expected a mapping", path_));
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const YAML::Node n = lookup(key);
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("{}.{}: malformed value", path_, key));
    }
  }

  void get(const std::string& key, Interval& out) {
    std::vector<double> v{out.lo, out.hi};
    get(key, v);
    if (v.size() != 2) throw ConfigError(fmt::format("{}.{}: expected [lo, hi]", path_, key));
    out = {v[0], v[1]};
  }

  template <typename E, typename Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string name;
    get(key, name);
    if (name.empty()) return;
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{}.{}: {}", path_, key, e.what()));
    }
  }

  bool has(const std::string& key) const { return static_cast<bool>(lookup(key)); }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(lookup(key), path_ + "." + key);
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(fmt::format("unknown key '{}.{}'", path_, key));
    }
  }

 private:
  YAML::Node lookup(const std::string& key) const {
    if (!node_ || !node_.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& c = node_;
    return c[key];
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_ranges(Section s, RangeConfig& r) {
  s.get("circle_radius", r.circle_radius);
  s.get("wall_scale", r.wall_scale);
  s.get("n_hazards", r.n_hazards);
  s.get("spawn_range", r.spawn_range);
  s.get("slip", r.slip);
  s.finish();
}

void apply_override(YAML::Node& root, const std::string& dotted, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.size() < 2) throw ConfigError(fmt::format("override '{}': expected section.key", dotted));
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("override '{}': malformed value", dotted));
  }
  // yaml-cpp node assignment rebinds references, so walk with fresh handles.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = chain.back()[parts[i]];
    if (!next.IsDefined() || next.IsNull()) {
      chain.back()[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = chain.back()[parts[i]];
    }
    if (!next.IsMap()) throw ConfigError(fmt::format("override '{}': {} is not a section", dotted, parts[i]));
    chain.push_back(next);
  }
  chain.back()[parts.back()] = parsed;
}

std::string interval(const Interval& i) { return fmt::format("[{}, {}]", i.lo, i.hi); }

void dump_ranges(std::string& out, const char* name, const RangeConfig& r) {
  out += fmt::format("  {}:\n", name);
  out += fmt::format("    circle_radius: {}\n", interval(r.circle_radius));
  out += fmt::format("    wall_scale: {}\n", interval(r.wall_scale));
  out += fmt::format("    n_hazards: {}\n", interval(r.n_hazards));
  out += fmt::format("    spawn_range: {}\n", interval(r.spawn_range));
  out += fmt::format("    slip: {}\n", interval(r.slip));
}

std::string dump(const ExperimentConfig& cfg, bool for_digest) {
  const EnvConfig& e = cfg.env;
  const AlgorithmConfig& a = cfg.algorithm;
  const RunConfig& r = cfg.run;
  std::string out = "env:\n";
  out += fmt::format("  kind: {}\n", to_string(e.kind));
  out += fmt::format("  horizon: {}\n", e.horizon);
  out += fmt::format("  discounted_cost: {}\n", e.discounted_cost);
  out += fmt::format("  grid_size: {}\n", e.grid_size);
  dump_ranges(out, "train", e.train);
  dump_ranges(out, "test", e.test);
  out += "algorithm:\n";
  out += fmt::format("  delta: {}\n", a.delta);
  out += fmt::format("  meta_delta: {}\n", a.meta_delta);
  out += fmt::format("  cost_limit: {}\n", a.cost_limit);
  out += fmt::format("  test_cost_limit: {}\n", a.test_cost_limit);
  out += fmt::format("  gamma: {}\n", a.gamma);
  out += fmt::format("  lambda: {}\n", a.lambda);
  out += fmt::format("  local_steps: {}\n", a.local_steps);
  out += fmt::format("  meta_batch: {}\n", a.meta_batch);
  if (!for_digest) out += fmt::format("  iterations: {}\n", a.iterations);
  out += fmt::format("  shots: {}\n", a.shots);
  out += fmt::format("  test_tasks: {}\n", a.test_tasks);
  out += fmt::format("  episodes: {}\n", a.episodes);
  out += fmt::format("  metric: {}\n", a.metric);
  out += fmt::format("  trust_measure: {}\n", a.trust_measure);
  out += fmt::format("  mode: {}\n", to_string(a.mode));
  out += fmt::format("  weighting: {}\n", to_string(a.weighting));
  out += fmt::format("  normalize_advantages: {}\n", a.normalize_advantages);
  out += fmt::format("  cost_tolerance: {}\n", a.cost_tolerance);
  out += fmt::format("  backtrack_coeff: {}\n", a.backtrack_coeff);
  out += fmt::format("  max_backtracks: {}\n", a.max_backtracks);
  out += fmt::format("  hidden: [{}]\n", fmt::join(a.hidden, ", "));
  out += fmt::format("  log_std_init: {}\n", a.log_std_init);
  out += "run:\n";
  out += fmt::format("  seed: {}\n", r.seed);
  if (!for_digest) {
    out += fmt::format("  output_dir: \"{}\"\n", r.output_dir);
    out += fmt::format("  save_every: {}\n", r.save_every);
    out += fmt::format("  workers: {}\n", r.workers);
    out += fmt::format("  record_wall_time: {}\n", r.record_wall_time);
  }
  return out;
}

void check_interval(const Interval& i, const std::string& name, double min) {
  if (!(std::isfinite(i.lo) && std::isfinite(i.hi)) || i.lo > i.hi) {
    throw ConfigError(fmt::format("{}: invalid interval [{}, {}]", name, i.lo, i.hi));
  }
  if (i.lo < min) throw ConfigError(fmt::format("{}: lower end below {}", name, min));
}

void check_ranges(const RangeConfig& r, const std::string& name) {
  check_interval(r.circle_radius, name + ".circle_radius", 0.0);
  check_interval(r.wall_scale, name + ".wall_scale", 0.0);
  check_interval(r.n_hazards, name + ".n_hazards", 0.0);
  check_interval(r.spawn_range, name + ".spawn_range", 0.0);
  check_interval(r.slip, name + ".slip", 0.0);
  if (r.slip.hi > 1.0) throw ConfigError(name + ".slip: upper end above 1");
}

TaskDistribution distribution(const ExperimentConfig& cfg, const RangeConfig& r, double h) {
  TaskDistribution d;
  d.kind = cfg.env.kind;
  d.circle_radius = r.circle_radius;
  d.wall_scale = r.wall_scale;
  d.n_hazards = r.n_hazards;
  d.spawn_range = r.spawn_range;
  d.slip = r.slip;
  d.grid_size = cfg.env.grid_size;
  d.cost_limit = h;
  d.horizon = cfg.env.horizon;
  d.gamma = cfg.algorithm.gamma;
  d.discounted_cost = cfg.env.discounted_cost;
  return d;
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  const EnvConfig& e = cfg.env;
  const AlgorithmConfig& a = cfg.algorithm;
  const RunConfig& r = cfg.run;
  if (e.horizon < 1) throw ConfigError("env.horizon must be >= 1");
  if (e.grid_size < 2) throw ConfigError("env.grid_size must be >= 2");
  check_ranges(e.train, "env.train");
  check_ranges(e.test, "env.test");
  auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) throw ConfigError(fmt::format("{} must be > 0", name));
  };
  positive(a.delta, "algorithm.delta");
  positive(a.meta_delta, "algorithm.meta_delta");
  positive(a.cost_limit, "algorithm.cost_limit");
  positive(a.test_cost_limit, "algorithm.test_cost_limit");
  if (!(a.gamma > 0.0 && a.gamma < 1.0)) throw ConfigError("algorithm.gamma must lie in (0, 1)");
  if (!(a.lambda >= 0.0 && a.lambda <= 1.0)) throw ConfigError("algorithm.lambda must lie in [0, 1]");
  if (a.local_steps < 1) throw ConfigError("algorithm.local_steps must be >= 1");
  if (a.meta_batch < 1) throw ConfigError("algorithm.meta_batch must be >= 1");
  if (a.iterations < 0) throw ConfigError("algorithm.iterations must be >= 0");
  if (a.shots < 0) throw ConfigError("algorithm.shots must be >= 0");
  if (a.test_tasks < 1) throw ConfigError("algorithm.test_tasks must be >= 1");
  if (a.episodes < 1) throw ConfigError("algorithm.episodes must be >= 1");
  if (a.metric == "fisher") {
    throw ConfigError(
        "algorithm.metric: 'fisher' is not supported by the meta-gradient chain; use 'euclidean'");
  }
  if (a.metric != "euclidean") throw ConfigError("algorithm.metric: unknown metric '" + a.metric + "'");
  if (a.trust_measure != "kl" && a.trust_measure != "distance") {
    throw ConfigError("algorithm.trust_measure: expected 'kl' or 'distance'");
  }
  if (!(a.cost_tolerance >= 0.0)) throw ConfigError("algorithm.cost_tolerance must be >= 0");
  if (!(a.backtrack_coeff > 0.0 && a.backtrack_coeff < 1.0)) {
    throw ConfigError("algorithm.backtrack_coeff must lie in (0, 1)");
  }
  if (a.max_backtracks < 0) throw ConfigError("algorithm.max_backtracks must be >= 0");
  if (a.hidden.empty() || std::any_of(a.hidden.begin(), a.hidden.end(), [](int w) { return w < 1; })) {
    throw ConfigError("algorithm.hidden must list positive widths");
  }
  if (!std::isfinite(a.log_std_init)) throw ConfigError("algorithm.log_std_init must be finite");
  if (r.save_every < 1) throw ConfigError("run.save_every must be >= 1");
  if (r.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (r.output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
}

ExperimentConfig parse_config(const std::string& text,
                              const std::map<std::string, std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("malformed config: {}", e.msg));
  }
  if (root.IsNull() || !root.IsDefined()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("malformed config: top level must be a mapping");
  for (const auto& [key, value] : overrides) apply_override(root, key, value);

  ExperimentConfig cfg;
  Section top(root, "config");
  {
    Section s = top.sub("env");
    EnvConfig& e = cfg.env;
    s.get_enum("kind", e.kind, env_kind_from_string);
    s.get("horizon", e.horizon);
    s.get("discounted_cost", e.discounted_cost);
    s.get("grid_size", e.grid_size);
    read_ranges(s.sub("train"), e.train);
    read_ranges(s.sub("test"), e.test);
    s.finish();
  }
  {
    Section s = top.sub("algorithm");
    AlgorithmConfig& a = cfg.algorithm;
    s.get("delta", a.delta);
    s.get("meta_delta", a.meta_delta);
    s.get("cost_limit", a.cost_limit);
    a.test_cost_limit = a.cost_limit;
    s.get("test_cost_limit", a.test_cost_limit);
    s.get("gamma", a.gamma);
    s.get("lambda", a.lambda);
    s.get("local_steps", a.local_steps);
    s.get("meta_batch", a.meta_batch);
    s.get("iterations", a.iterations);
    s.get("shots", a.shots);
    s.get("test_tasks", a.test_tasks);
    s.get("episodes", a.episodes);
    s.get("metric", a.metric);
    s.get("trust_measure", a.trust_measure);
    s.get_enum("mode", a.mode, gradient_mode_from_string);
    s.get_enum("weighting", a.weighting, state_weighting_from_string);
    s.get("normalize_advantages", a.normalize_advantages);
    s.get("cost_tolerance", a.cost_tolerance);
    s.get("backtrack_coeff", a.backtrack_coeff);
    s.get("max_backtracks", a.max_backtracks);
    s.get("hidden", a.hidden);
    s.get("log_std_init", a.log_std_init);
    s.finish();
  }
  {
    Section s = top.sub("run");
    RunConfig& r = cfg.run;
    s.get("seed", r.seed);
    s.get("output_dir", r.output_dir);
    s.get("save_every", r.save_every);
    s.get("workers", r.workers);
    s.get("record_wall_time", r.record_wall_time);
    s.finish();
  }
  top.finish();
  validate(cfg);
  return cfg;
}

std::map<std::string, std::string> env_overrides() {
  static constexpr std::string_view kPrefix = "METACPO_";
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    if (entry.substr(0, kPrefix.size()) != kPrefix) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    std::string name(entry.substr(kPrefix.size(), eq - kPrefix.size()));
    if (name.find("__") == std::string::npos) continue;
    std::string dotted;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (name.compare(i, 2, "__") == 0) {
        dotted.push_back('.');
        ++i;
      } else {
        dotted.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(name[i]))));
      }
    }
    out[dotted] = std::string(entry.substr(eq + 1));
  }
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), env_overrides());
}

std::string dump_config(const ExperimentConfig& cfg) { return dump(cfg, false); }

std::string config_digest(const ExperimentConfig& cfg) { return sha256_hex(dump(cfg, true)); }

PolicyArch policy_arch(const ExperimentConfig& cfg) {
  TaskSpec probe;
  probe.kind = cfg.env.kind;
  probe.grid_size = cfg.env.grid_size;
  return arch_for(probe, cfg.algorithm.hidden, cfg.algorithm.log_std_init);
}

TaskDistribution train_distribution(const ExperimentConfig& cfg) {
  return distribution(cfg, cfg.env.train, cfg.algorithm.cost_limit);
}

TaskDistribution test_distribution(const ExperimentConfig& cfg, double cost_limit) {
  return distribution(cfg, cfg.env.test, cost_limit);
}

PolicyTaskConfig policy_task_config(const ExperimentConfig& cfg) {
  PolicyTaskConfig p;
  p.episodes = cfg.algorithm.episodes;
  p.lambda = cfg.algorithm.lambda;
  p.normalize_advantages = cfg.algorithm.normalize_advantages;
  p.weighting = cfg.algorithm.weighting;
  p.kl_trust = cfg.algorithm.trust_measure == "kl";
  return p;
}

MetaConfig meta_config(const ExperimentConfig& cfg) {
  const AlgorithmConfig& a = cfg.algorithm;
  CpoConfig line;
  line.cost_limit = a.cost_limit;
  line.cost_tolerance = a.cost_tolerance;
  line.backtrack_coeff = a.backtrack_coeff;
  line.max_backtracks = a.max_backtracks;
  MetaConfig m;
  m.adapt.local_steps = a.local_steps;
  m.adapt.delta = a.delta;
  m.adapt.cpo = line;
  m.meta_batch = a.meta_batch;
  m.meta_delta = a.meta_delta;
  m.meta_cpo = line;
  m.mode = a.mode;
  m.workers = cfg.run.workers;
  return m;
}

}  // namespace metacpo

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

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "metacpo/envs.hpp"
#include "metacpo/estimators.hpp"
#include "metacpo/meta_cpo.hpp"
#include "metacpo/policy_task.hpp"

namespace metacpo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Task parameter ranges of one distribution.
struct RangeConfig {
  Interval circle_radius{1.0, 1.5};
  Interval wall_scale{0.65, 0.75};
  Interval n_hazards{0, 0};
  Interval spawn_range{1.5, 1.5};
  Interval slip{0.0, 0.0};
};

struct EnvConfig {
  EnvKind kind = EnvKind::kPointCircle;
  int horizon = 100;
  bool discounted_cost = true;
  int grid_size = 5;
  RangeConfig train;
  RangeConfig test{{2.0, 2.5}, {0.55, 0.65}, {0, 0}, {1.5, 1.5}, {0.0, 0.0}};
};

struct AlgorithmConfig {
  double delta = 0.01;
  double meta_delta = 0.01;
  double cost_limit = 10.0;
  /// Cost limit of meta-test tasks; defaults to cost_limit when absent.
  double test_cost_limit = 10.0;
  double gamma = 0.99;
  double lambda = 0.95;
  int local_steps = 5;
  int meta_batch = 5;
  int iterations = 100;
  int shots = 5;
  int test_tasks = 10;
  int episodes = 10;
  /// Only "euclidean" is accepted.
  std::string metric = "euclidean";
  /// Line-search trust measure: "kl" or "distance" (½‖s‖²).
  std::string trust_measure = "kl";
  GradientMode mode = GradientMode::kFull;
  StateWeighting weighting = StateWeighting::kDiscounted;
  bool normalize_advantages = true;
  double cost_tolerance = 0.1;
  double backtrack_coeff = 0.5;
  int max_backtracks = 10;
  std::vector<int> hidden{32, 16};
  double log_std_init = -0.5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  int save_every = 10;
  int workers = 1;
  /// Off by default so that metrics files are reproducible byte for byte.
  bool record_wall_time = false;
};

struct ExperimentConfig {
  EnvConfig env;
  AlgorithmConfig algorithm;
  RunConfig run;
};

/// Throws ConfigError naming the first offending field.
void validate(const ExperimentConfig& cfg);

/// Parses YAML text with sections env, algorithm and run. Unknown sections or
/// keys are errors. `overrides` maps "section.key" (or "section.sub.key") to
/// a YAML scalar or flow value applied before parsing.
ExperimentConfig parse_config(const std::string& text,
                              const std::map<std::string, std::string>& overrides = {});

/// Reads METACPO_<SECTION>__<KEY>[__<SUBKEY>] variables from the environment,
/// e.g. METACPO_ALGORITHM__DELTA=0.005 or METACPO_ENV__TRAIN__CIRCLE_RADIUS="[1, 2]".
std::map<std::string, std::string> env_overrides();

/// parse_config on the file contents with env_overrides().
ExperimentConfig load_config(const std::string& path);

/// Canonical YAML with every field spelled out.
std::string dump_config(const ExperimentConfig& cfg);

/// SHA-256 (hex) of the canonical form of every field that changes the
/// trajectory of training. Output location, worker count, checkpoint
/// cadence, wall-time recording and the iteration budget are left out.
std::string config_digest(const ExperimentConfig& cfg);

PolicyArch policy_arch(const ExperimentConfig& cfg);
TaskDistribution train_distribution(const ExperimentConfig& cfg);
/// Test ranges with the given cost limit.
TaskDistribution test_distribution(const ExperimentConfig& cfg, double cost_limit);
PolicyTaskConfig policy_task_config(const ExperimentConfig& cfg);
MetaConfig meta_config(const ExperimentConfig& cfg);

}  // namespace metacpo

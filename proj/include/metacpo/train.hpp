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
#include <functional>
#include <string>

#include "metacpo/checkpoint.hpp"
#include "metacpo/config.hpp"
#include "metacpo/metrics.hpp"

namespace metacpo {

struct TrainResult {
  Vector theta;
  int iterations = 0;  // total completed, including resumed ones
  std::string metrics_path;
  std::string checkpoint_path;
};

using RowCallback = std::function<void(const MetricsRow&)>;

/// Meta-trains per `cfg` into cfg.run.output_dir, writing config.yaml,
/// metrics.csv and checkpoint.json (every run.save_every iterations and at
/// the end). θ⁰ and all task sampling come from Rng(run.seed). With a
/// non-empty `resume_from`, training continues from that checkpoint up to
/// algorithm.iterations; its config digest must match.
TrainResult train(const ExperimentConfig& cfg, const std::string& resume_from = "",
                  const RowCallback& on_row = {});

/// θ⁰ for a seed: the starting point of training and of CPO from scratch.
Vector initial_theta(const ExperimentConfig& cfg, std::uint64_t seed);

struct MetaTestOptions {
  double cost_limit = 10.0;
  int shots = 5;
  int n_tasks = 10;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Draw tasks from the train ranges instead of the test ranges.
  bool train_ranges = false;
};

/// Adapts θ with `shots` local CPO steps on tasks drawn from
/// Rng::stream(seed, {kMetaTestStream}).
EvalReport run_meta_test(const ExperimentConfig& cfg, const Vector& theta, const MetaTestOptions& opt);

inline constexpr std::uint64_t kMetaTestStream = 0x7e57;

/// Columns task, cost_limit, shot, return, cost; one row per task and shot.
void write_meta_test_csv(const std::string& path, const EvalReport& report);

}  // namespace metacpo

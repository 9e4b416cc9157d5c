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

#include "metacpo/train.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "metacpo/policy_task.hpp"

namespace metacpo {

Vector initial_theta(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return init_params(policy_arch(cfg), rng).values;
}

TrainResult train(const ExperimentConfig& cfg, const std::string& resume_from,
                  const RowCallback& on_row) {
  validate(cfg);
  namespace fs = std::filesystem;
  const fs::path dir(cfg.run.output_dir);
  fs::create_directories(dir);
  const PolicyArch arch = policy_arch(cfg);
  const std::string digest = config_digest(cfg);

  Rng rng(cfg.run.seed);
  Vector theta = init_params(arch, rng).values;
  int start = 0;
  if (!resume_from.empty()) {
    const Checkpoint ck = load_checkpoint(resume_from);
    require_config_digest(ck, digest);
    if (!(ck.arch == arch)) throw CheckpointError("checkpoint architecture does not match the config");
    theta = ck.params;
    rng.set_state(ck.rng_state);
    start = ck.iteration;
  }

  {
    std::ofstream out(dir / "config.yaml", std::ios::trunc);
    out << dump_config(cfg);
    if (!out.flush()) throw std::runtime_error("train: cannot write config.yaml");
  }
  TrainResult result;
  result.metrics_path = (dir / "metrics.csv").string();
  result.checkpoint_path = (dir / "checkpoint.json").string();
  MetricsWriter writer(result.metrics_path, start);

  auto save = [&](int iteration) {
    Checkpoint ck;
    ck.arch = arch;
    ck.params = theta;
    ck.iteration = iteration;
    ck.rng_state = rng.state();
    ck.config_digest = digest;
    save_checkpoint(result.checkpoint_path, ck);
  };

  const PolicyTaskFamily family(train_distribution(cfg), arch, policy_task_config(cfg));
  const MetaConfig mcfg = meta_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  int it = start;
  for (; it < cfg.algorithm.iterations; ++it) {
    const MetaIteration r = meta_iteration(family, theta, mcfg, rng);
    theta = r.theta;
    const double wall =
        cfg.run.record_wall_time
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
            : 0.0;
    const MetricsRow row = metrics_row(it, r, wall);
    writer.write(row);
    if (on_row) on_row(row);
    if ((it + 1) % cfg.run.save_every == 0) save(it + 1);
  }
  save(it);
  result.theta = theta;
  result.iterations = it;
  return result;
}

EvalReport run_meta_test(const ExperimentConfig& cfg, const Vector& theta, const MetaTestOptions& opt) {
  if (opt.n_tasks < 1 || opt.shots < 0) throw std::invalid_argument("meta-test: bad task or shot count");
  if (!(opt.cost_limit > 0.0)) throw std::invalid_argument("meta-test: cost limit must be > 0");
  TaskDistribution dist = opt.train_ranges ? train_distribution(cfg) : test_distribution(cfg, opt.cost_limit);
  dist.cost_limit = opt.cost_limit;
  const PolicyTaskFamily family(dist, policy_arch(cfg), policy_task_config(cfg));
  AdaptConfig adapt = meta_config(cfg).adapt;
  adapt.local_steps = opt.shots;
  Rng rng = Rng::stream(opt.seed, {kMetaTestStream});
  return meta_test(family, theta, adapt, opt.n_tasks, rng, opt.workers);
}

void write_meta_test_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("meta-test: cannot write '" + path + "'");
  out << "task,cost_limit,shot,return,cost\n";
  for (std::size_t i = 0; i < report.tasks.size(); ++i) {
    const TaskReport& t = report.tasks[i];
    for (std::size_t k = 0; k < t.returns.size(); ++k) {
      out << fmt::format("{},{:.17g},{},{:.17g},{:.17g}\n", i, t.cost_limit, k, t.returns[k], t.costs[k]);
    }
  }
  if (!out.flush()) throw std::runtime_error("meta-test: write failed for '" + path + "'");
}

}  // namespace metacpo

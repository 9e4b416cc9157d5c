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

// metacpo: train, meta-test, gradcheck and plot entry points.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "metacpo/checkpoint.hpp"
#include "metacpo/config.hpp"
#include "metacpo/gradcheck_suite.hpp"
#include "metacpo/plot.hpp"
#include "metacpo/train.hpp"

namespace fs = std::filesystem;
using namespace metacpo;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  std::string checkpoint;
  std::optional<double> cost_limit;
  std::optional<int> shots;
  std::string mode;
};

ExperimentConfig resolve_config(const Common& c) {
  std::string path = c.config;
  if (path.empty() && !c.checkpoint.empty()) {
    path = (fs::path(c.checkpoint).parent_path() / "config.yaml").string();
    if (!fs::exists(path)) throw ConfigError("no --config given and no config.yaml next to the checkpoint");
  }
  if (path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_config(path);
  if (c.seed) cfg.run.seed = *c.seed;
  if (!c.out.empty()) cfg.run.output_dir = c.out;
  if (c.workers) cfg.run.workers = *c.workers;
  if (!c.mode.empty()) cfg.algorithm.mode = gradient_mode_from_string(c.mode);
  validate(cfg);
  return cfg;
}

int cmd_train(const Common& c) {
  ExperimentConfig cfg = resolve_config(c);
  if (c.cost_limit) cfg.algorithm.cost_limit = *c.cost_limit;
  validate(cfg);
  const TrainResult r = train(cfg, c.checkpoint, [](const MetricsRow& row) {
    fmt::print("iter {:4d}  return {:9.3f}  cost {:8.3f} (h {:g})  zero-shot {:9.3f}  step {} bt {}\n",
               row.iteration, row.mean_return_adapted, row.mean_cost_adapted, row.cost_limit,
               row.mean_return_zero_shot, row.meta_step_case, row.backtracks);
    std::fflush(stdout);
  });
  fmt::print("wrote {} and {}\n", r.metrics_path, r.checkpoint_path);
  return 0;
}

int cmd_meta_test(const Common& c, bool scratch, const std::string& ranges, int tasks) {
  if (c.checkpoint.empty() && !scratch) throw ConfigError("meta-test needs --checkpoint (or --scratch)");
  const ExperimentConfig cfg = resolve_config(c);
  Vector theta;
  if (scratch) {
    theta = initial_theta(cfg, cfg.run.seed);
  } else {
    const Checkpoint ck = load_checkpoint(c.checkpoint);
    if (!(ck.arch == policy_arch(cfg))) {
      throw CheckpointError("checkpoint architecture does not match the config");
    }
    theta = ck.params;
  }
  if (ranges != "test" && ranges != "train") throw ConfigError("--ranges must be 'test' or 'train'");
  MetaTestOptions opt;
  opt.cost_limit = c.cost_limit.value_or(cfg.algorithm.test_cost_limit);
  opt.shots = c.shots.value_or(cfg.algorithm.shots);
  opt.n_tasks = tasks > 0 ? tasks : cfg.algorithm.test_tasks;
  opt.seed = cfg.run.seed;
  opt.workers = cfg.run.workers;
  opt.train_ranges = ranges == "train";
  const EvalReport report = run_meta_test(cfg, theta, opt);
  fs::create_directories(cfg.run.output_dir);
  const std::string path = (fs::path(cfg.run.output_dir) / "meta_test.csv").string();
  write_meta_test_csv(path, report);
  fmt::print("{} tasks, cost limit {:g}\n", report.tasks.size(), opt.cost_limit);
  fmt::print("{:>4}  {:>10}  {:>10}\n", "shot", "return", "cost");
  for (int k = 0; k <= opt.shots; ++k) {
    fmt::print("{:>4}  {:>10.3f}  {:>10.3f}\n", k, report.mean_return(k), report.mean_cost(k));
  }
  fmt::print("wrote {}\n", path);
  return 0;
}

int cmd_gradcheck(const Common& c) {
  const auto rows = run_gradcheck_suite(c.seed.value_or(0));
  fmt::print("{}", format_gradcheck_table(rows));
  for (const auto& r : rows) {
    if (!r.passed) return 1;
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::vector<std::string>& labels,
             const std::string& out) {
  if (!labels.empty() && labels.size() != inputs.size()) {
    throw ConfigError("--label must be given once per metrics file");
  }
  std::vector<Series> series;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string label = labels.empty() ? fs::path(inputs[i]).parent_path().filename().string() : labels[i];
    if (label.empty()) label = fs::path(inputs[i]).stem().string();
    series.push_back({label, read_metrics(inputs[i])});
  }
  for (const auto& p : write_plots(series, out.empty() ? "." : out)) fmt::print("wrote {}\n", p);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained meta-RL with differentiable trust-region CPO steps"};
  app.require_subcommand(1);
  Common c;
  bool scratch = false;
  std::string ranges = "test";
  int tasks = 0;
  std::vector<std::string> inputs, labels;

  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", c.config, "experiment YAML");
    s->add_option("--seed", c.seed, "run seed");
    s->add_option("--out", c.out, "output directory");
    s->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  };

  CLI::App* train_cmd = app.add_subcommand("train", "meta-train and write metrics.csv and checkpoints");
  add_config(train_cmd);
  train_cmd->add_option("--checkpoint", c.checkpoint, "resume from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--cost-limit", c.cost_limit, "training cost limit h");
  train_cmd->add_option("--mode", c.mode, "meta-gradient mode")->check(CLI::IsMember({"full", "first_order"}));

  CLI::App* test_cmd = app.add_subcommand("meta-test", "adapt a meta-policy on unseen tasks");
  add_config(test_cmd);
  test_cmd->add_option("--checkpoint", c.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  test_cmd->add_option("--cost-limit", c.cost_limit, "cost limit of the test tasks");
  test_cmd->add_option("--shots", c.shots, "local CPO steps per task")->check(CLI::NonNegativeNumber);
  test_cmd->add_option("--tasks", tasks, "number of test tasks")->check(CLI::PositiveNumber);
  test_cmd->add_option("--ranges", ranges, "task ranges: test or train")->check(CLI::IsMember({"test", "train"}));
  test_cmd->add_flag("--scratch", scratch, "start from the untrained initialization instead");

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks of every backward pass");
  grad_cmd->add_option("--seed", c.seed, "problem seed");

  CLI::App* plot_cmd = app.add_subcommand("plot", "render metrics CSVs to return.svg and cost.svg");
  plot_cmd->add_option("metrics", inputs, "metrics.csv files")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--label", labels, "series label per file");
  plot_cmd->add_option("--out", c.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "metacpo: error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*train_cmd) return cmd_train(c);
    if (*test_cmd) return cmd_meta_test(c, scratch, ranges, tasks);
    if (*grad_cmd) return cmd_gradcheck(c);
    if (*plot_cmd) return cmd_plot(inputs, labels, c.out);
  } catch (const std::exception& e) {
    std::cerr << "metacpo: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

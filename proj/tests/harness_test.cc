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

#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "metacpo/checkpoint.hpp"
#include "metacpo/config.hpp"
#include "metacpo/gradcheck_suite.hpp"
#include "metacpo/metrics.hpp"
#include "metacpo/plot.hpp"
#include "metacpo/train.hpp"

namespace metacpo {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metacpo_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small enough to train in about a second.
const char* kTinyConfig = R"(
env:
  kind: gridhazard
  horizon: 12
  grid_size: 3
  train:
    n_hazards: [1, 2]
    slip: [0.0, 0.1]
  test:
    n_hazards: [1, 2]
    slip: [0.1, 0.2]
algorithm:
  cost_limit: 1.0
  gamma: 0.9
  local_steps: 2
  meta_batch: 2
  iterations: 4
  shots: 2
  test_tasks: 3
  episodes: 4
  hidden: [8]
run:
  seed: 11
  save_every: 2
)";

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg = parse_config(kTinyConfig);
  cfg.run.output_dir = out.string();
  return cfg;
}

// ---- config ----------------------------------------------------------------

TEST(Config, EmptyTextGivesDefaults) {
  const ExperimentConfig cfg = parse_config("");
  EXPECT_EQ(cfg.env.kind, EnvKind::kPointCircle);
  EXPECT_EQ(cfg.algorithm.local_steps, 5);
  EXPECT_EQ(cfg.algorithm.meta_batch, 5);
  EXPECT_DOUBLE_EQ(cfg.algorithm.delta, 0.01);
  EXPECT_DOUBLE_EQ(cfg.env.test.circle_radius.lo, 2.0);
  EXPECT_EQ(cfg.algorithm.mode, GradientMode::kFull);
}

TEST(Config, TestCostLimitFollowsCostLimitUnlessSet) {
  EXPECT_DOUBLE_EQ(parse_config("algorithm: {cost_limit: 7}").algorithm.test_cost_limit, 7.0);
  EXPECT_DOUBLE_EQ(parse_config("algorithm: {cost_limit: 7, test_cost_limit: 3}").algorithm.test_cost_limit,
                   3.0);
}

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
  EXPECT_THROW(parse_config("extra: 1"), ConfigError);
  EXPECT_THROW(parse_config("algorithm: {deltaa: 0.1}"), ConfigError);
  EXPECT_THROW(parse_config("env: {train: {radius: [1, 2]}}"), ConfigError);
  try {
    parse_config("run: {sead: 3}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.sead"), std::string::npos);
  }
}

TEST(Config, RejectsMalformedAndInvalidValues) {
  EXPECT_THROW(parse_config("algorithm: {local_steps: many}"), ConfigError);
  EXPECT_THROW(parse_config("algorithm: {local_steps: 0}"), ConfigError);
  EXPECT_THROW(parse_config("algorithm: {cost_limit: -1}"), ConfigError);
  EXPECT_THROW(parse_config("env: {train: {circle_radius: [2, 1]}}"), ConfigError);
  EXPECT_THROW(parse_config("env: {train: {circle_radius: [1, 2, 3]}}"), ConfigError);
  EXPECT_THROW(parse_config("env: {kind: mujoco}"), ConfigError);
  EXPECT_THROW(parse_config("algorithm: {mode: second_order}"), ConfigError);
  EXPECT_THROW(parse_config("algorithm: [1, 2]"), ConfigError);
  EXPECT_THROW(parse_config("algorithm: {delta: 0.1"), ConfigError);
}

TEST(Config, FisherMetricIsRejectedWithReason) {
  try {
    parse_config("algorithm: {metric: fisher}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fisher"), std::string::npos);
  }
}

TEST(Config, OverridesApplyBeforeValidation) {
  const auto cfg = parse_config("algorithm: {delta: 0.02}", {{"algorithm.delta", "0.005"},
                                                              {"env.train.circle_radius", "[1.1, 1.2]"},
                                                              {"run.seed", "42"}});
  EXPECT_DOUBLE_EQ(cfg.algorithm.delta, 0.005);
  EXPECT_DOUBLE_EQ(cfg.env.train.circle_radius.hi, 1.2);
  EXPECT_EQ(cfg.run.seed, 42u);
  EXPECT_THROW(parse_config("", {{"algorithm.nope", "1"}}), ConfigError);
  EXPECT_THROW(parse_config("", {{"algorithm.delta", "-1"}}), ConfigError);
}

TEST(Config, EnvironmentVariablesBecomeOverrides) {
  ::setenv("METACPO_ALGORITHM__META_DELTA", "0.003", 1);
  ::setenv("METACPO_ENV__TEST__WALL_SCALE", "[0.5, 0.6]", 1);
  const auto o = env_overrides();
  ::unsetenv("METACPO_ALGORITHM__META_DELTA");
  ::unsetenv("METACPO_ENV__TEST__WALL_SCALE");
  ASSERT_EQ(o.count("algorithm.meta_delta"), 1u);
  EXPECT_EQ(o.at("algorithm.meta_delta"), "0.003");
  const auto cfg = parse_config("", o);
  EXPECT_DOUBLE_EQ(cfg.algorithm.meta_delta, 0.003);
  EXPECT_DOUBLE_EQ(cfg.env.test.wall_scale.lo, 0.5);
}

TEST(Config, DumpRoundTrips) {
  const ExperimentConfig cfg = parse_config(kTinyConfig, {{"algorithm.delta", "0.1234567890123"}});
  const std::string text = dump_config(cfg);
  EXPECT_EQ(dump_config(parse_config(text)), text);
  EXPECT_EQ(config_digest(parse_config(text)), config_digest(cfg));
}

TEST(Config, DigestTracksOnlyTrajectoryFields) {
  const ExperimentConfig base = parse_config(kTinyConfig);
  const std::string d = config_digest(base);
  EXPECT_EQ(d.size(), 64u);
  ExperimentConfig c = base;
  c.run.output_dir = "elsewhere";
  c.run.workers = 3;
  c.run.save_every = 7;
  c.run.record_wall_time = true;
  c.algorithm.iterations = 1000;
  EXPECT_EQ(config_digest(c), d);
  c = base;
  c.algorithm.delta *= 2;
  EXPECT_NE(config_digest(c), d);
  c = base;
  c.run.seed += 1;
  EXPECT_NE(config_digest(c), d);
  c = base;
  c.env.train.slip.hi = 0.2;
  EXPECT_NE(config_digest(c), d);
}

TEST(Config, DerivedSettingsFollowTheFile) {
  const ExperimentConfig cfg = parse_config(kTinyConfig);
  const MetaConfig m = meta_config(cfg);
  EXPECT_EQ(m.adapt.local_steps, 2);
  EXPECT_EQ(m.meta_batch, 2);
  const TaskDistribution train = train_distribution(cfg);
  EXPECT_EQ(train.kind, EnvKind::kGridHazard);
  EXPECT_DOUBLE_EQ(train.gamma, 0.9);
  EXPECT_DOUBLE_EQ(test_distribution(cfg, 0.5).cost_limit, 0.5);
  EXPECT_DOUBLE_EQ(test_distribution(cfg, 0.5).slip.lo, 0.1);
  const PolicyArch arch = policy_arch(cfg);
  EXPECT_EQ(arch.num_actions, 5);
  EXPECT_EQ(arch.obs_dim, 9);
  EXPECT_TRUE(policy_task_config(cfg).kl_trust);
}

TEST(Config, ShippedConfigsLoad) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(METACPO_CONFIG_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    SCOPED_TRACE(entry.path().string());
    ExperimentConfig cfg;
    EXPECT_NO_THROW(cfg = load_config(entry.path().string()));
    EXPECT_NO_THROW(train_distribution(cfg));
    ++n;
  }
  EXPECT_GE(n, 3);
}

// ---- rng cursor --------------------------------------------------------------

TEST(RngState, RoundTripResumesTheStream) {
  Rng a(5);
  for (int i = 0; i < 17; ++i) a.next_u64();
  Rng b(999);
  b.set_state(a.state());
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_THROW(b.set_state("not an engine"), std::invalid_argument);
}

// ---- checkpoint ----------------------------------------------------------------

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.arch = PolicyArch{3, 2, {4}, -0.5, 0};
  Rng rng(1);
  ck.params = init_params(ck.arch, rng).values;
  ck.params[0] = -0.0;
  ck.params[1] = std::numeric_limits<double>::denorm_min();
  ck.params[2] = 0.1 + 0.2;
  ck.params[3] = std::numeric_limits<double>::max();
  ck.iteration = 12;
  Rng cursor(3);
  cursor.next_u64();
  ck.rng_state = cursor.state();
  ck.config_digest = std::string(64, 'a');
  return ck;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const fs::path dir = scratch_dir("ck_roundtrip");
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint((dir / "c.json").string(), ck);
  EXPECT_FALSE(fs::exists(dir / "c.json.tmp"));
  const Checkpoint back = load_checkpoint((dir / "c.json").string());
  ASSERT_EQ(back.params.size(), ck.params.size());
  EXPECT_EQ(std::memcmp(back.params.data(), ck.params.data(), sizeof(double) * ck.params.size()), 0);
  EXPECT_TRUE(back.arch == ck.arch);
  EXPECT_EQ(back.iteration, 12);
  EXPECT_EQ(back.rng_state, ck.rng_state);
  EXPECT_EQ(back.config_digest, ck.config_digest);
}

TEST(Checkpoint, TruncatedFileIsACleanError) {
  const fs::path dir = scratch_dir("ck_trunc");
  save_checkpoint((dir / "c.json").string(), sample_checkpoint());
  const std::string text = slurp(dir / "c.json");
  for (std::size_t keep : {std::size_t{0}, text.size() / 3, text.size() - 5}) {
    std::ofstream(dir / "t.json", std::ios::trunc) << text.substr(0, keep);
    EXPECT_THROW(load_checkpoint((dir / "t.json").string()), CheckpointError) << keep;
  }
  EXPECT_THROW(load_checkpoint((dir / "missing.json").string()), CheckpointError);
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
  const fs::path dir = scratch_dir("ck_version");
  Checkpoint ck = sample_checkpoint();
  ck.version = kCheckpointVersion + 1;
  save_checkpoint((dir / "c.json").string(), ck);
  try {
    load_checkpoint((dir / "c.json").string());
    FAIL();
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion + 1)), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(kCheckpointVersion)), std::string::npos) << msg;
  }
}

TEST(Checkpoint, TamperedPayloadFailsIntegrityCheck) {
  const fs::path dir = scratch_dir("ck_tamper");
  save_checkpoint((dir / "c.json").string(), sample_checkpoint());
  std::string text = slurp(dir / "c.json");
  const auto pos = text.find("\"iteration\": 12");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 15, "\"iteration\": 13");
  std::ofstream(dir / "c.json", std::ios::trunc) << text;
  EXPECT_THROW(load_checkpoint((dir / "c.json").string()), CheckpointError);
}

TEST(Checkpoint, DigestMismatchIsRefused) {
  const Checkpoint ck = sample_checkpoint();
  EXPECT_NO_THROW(require_config_digest(ck, ck.config_digest));
  EXPECT_THROW(require_config_digest(ck, std::string(64, 'b')), CheckpointError);
}

// ---- metrics and plots ------------------------------------------------------

MetricsRow sample_row(int i) {
  MetricsRow r;
  r.iteration = i;
  r.mean_return_adapted = 1.0 / 3.0 + i;
  r.mean_cost_adapted = 10.0 - 0.1 * i;
  r.cost_limit = 10.0;
  r.mean_return_zero_shot = 0.5 * i;
  r.mean_cost_zero_shot = 11.0;
  r.meta_step_case = i % 2 ? "feasible" : "recovery";
  r.backtracks = i % 3;
  r.dF_norm = 1e-17 * i;
  r.dG_norm = 3.0;
  return r;
}

TEST(Metrics, ZeroRowsLeaveOnlyTheHeader) {
  const fs::path dir = scratch_dir("metrics_empty");
  { MetricsWriter w((dir / "m.csv").string()); }
  EXPECT_EQ(slurp(dir / "m.csv"),
            "iteration,mean_return_adapted,mean_cost_adapted,cost_limit,mean_return_zero_shot,"
            "mean_cost_zero_shot,meta_step_case,backtracks,dF_norm,dG_norm,wall_time_s\n");
  EXPECT_TRUE(read_metrics((dir / "m.csv").string()).empty());
}

TEST(Metrics, RowsRoundTripExactly) {
  const fs::path dir = scratch_dir("metrics_rt");
  {
    MetricsWriter w((dir / "m.csv").string());
    for (int i = 0; i < 5; ++i) w.write(sample_row(i));
  }
  const auto rows = read_metrics((dir / "m.csv").string());
  ASSERT_EQ(rows.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(format_metrics_row(rows[i]), format_metrics_row(sample_row(i)));
    EXPECT_EQ(rows[i].mean_return_adapted, sample_row(i).mean_return_adapted);
    EXPECT_EQ(rows[i].dF_norm, sample_row(i).dF_norm);
  }
}

TEST(Metrics, ReopeningKeepsEarlierRowsOnly) {
  const fs::path dir = scratch_dir("metrics_resume");
  const std::string path = (dir / "m.csv").string();
  {
    MetricsWriter w(path);
    for (int i = 0; i < 6; ++i) w.write(sample_row(i));
  }
  {
    MetricsWriter w(path, 4);
    w.write(sample_row(4));
  }
  const auto rows = read_metrics(path);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows.back().iteration, 4);
  { MetricsWriter w(path); }
  EXPECT_TRUE(read_metrics(path).empty());
}

TEST(Metrics, ForeignHeaderIsRejected) {
  const fs::path dir = scratch_dir("metrics_bad");
  std::ofstream(dir / "m.csv") << "a,b,c\n1,2,3\n";
  EXPECT_THROW(read_metrics((dir / "m.csv").string()), std::runtime_error);
  EXPECT_THROW(MetricsWriter((dir / "m.csv").string(), 3), std::runtime_error);
  std::ofstream(dir / "n.csv") << "iteration,mean_return_adapted,mean_cost_adapted,cost_limit,"
                                  "mean_return_zero_shot,mean_cost_zero_shot,meta_step_case,"
                                  "backtracks,dF_norm,dG_norm,wall_time_s\n1,x\n";
  EXPECT_THROW(read_metrics((dir / "n.csv").string()), std::runtime_error);
}

TEST(Plot, HundredRowsGiveOneSvgPerPanel) {
  const fs::path dir = scratch_dir("plot");
  {
    MetricsWriter w((dir / "m.csv").string());
    for (int i = 0; i < 100; ++i) w.write(sample_row(i));
  }
  const std::vector<Series> series{{"run", read_metrics((dir / "m.csv").string())}};
  const auto paths = write_plots(series, (dir / "svg").string());
  ASSERT_EQ(paths.size(), 2u);
  const std::string ret = slurp(paths[0]);
  const std::string cost = slurp(paths[1]);
  EXPECT_EQ(ret.rfind("<svg", 0), 0u);
  EXPECT_NE(ret.find("</svg>"), std::string::npos);
  EXPECT_NE(ret.find("Average return"), std::string::npos);
  EXPECT_NE(cost.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(cost.find("cost-limit"), std::string::npos);
  EXPECT_EQ(ret.find("cost-limit"), std::string::npos);
}

TEST(Plot, EmptyAndConstantSeriesStillRender) {
  EXPECT_NE(render_panel({}, Panel::kCost).find("</svg>"), std::string::npos);
  MetricsRow r;
  const std::string s = render_panel({{"flat<&>", {r, r}}}, Panel::kReturn);
  EXPECT_EQ(s.find("nan"), std::string::npos);
  EXPECT_NE(s.find("flat&lt;&amp;&gt;"), std::string::npos);
}

// ---- train / meta-test -------------------------------------------------------

TEST(Train, SameConfigAndSeedGiveIdenticalFiles) {
  const fs::path a = scratch_dir("train_a"), b = scratch_dir("train_b");
  train(tiny_config(a));
  train(tiny_config(b));
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));
  EXPECT_EQ(read_metrics((a / "metrics.csv").string()).size(), 4u);
  EXPECT_EQ(load_checkpoint((a / "checkpoint.json").string()).iteration, 4);
}

TEST(Train, WorkerCountDoesNotChangeResults) {
  const fs::path a = scratch_dir("train_w1"), b = scratch_dir("train_w2");
  train(tiny_config(a));
  ExperimentConfig cfg = tiny_config(b);
  cfg.run.workers = 2;
  train(cfg);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
}

TEST(Train, ResumeMatchesAnUninterruptedRun) {
  const fs::path full = scratch_dir("train_full"), part = scratch_dir("train_part");
  train(tiny_config(full));
  ExperimentConfig cfg = tiny_config(part);
  cfg.algorithm.iterations = 2;
  train(cfg);
  const std::string ck = (part / "checkpoint.json").string();
  ASSERT_EQ(load_checkpoint(ck).iteration, 2);
  fs::copy_file(ck, part / "resume.json");
  cfg.algorithm.iterations = 4;
  train(cfg, (part / "resume.json").string());
  EXPECT_EQ(slurp(full / "metrics.csv"), slurp(part / "metrics.csv"));
  EXPECT_EQ(slurp(full / "checkpoint.json"), slurp(part / "checkpoint.json"));
}

TEST(Train, ResumeUnderAnotherConfigIsRefused) {
  const fs::path dir = scratch_dir("train_digest");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.algorithm.iterations = 1;
  train(cfg);
  fs::copy_file(dir / "checkpoint.json", dir / "resume.json");
  cfg.algorithm.delta = 0.02;
  cfg.algorithm.iterations = 2;
  EXPECT_THROW(train(cfg, (dir / "resume.json").string()), CheckpointError);
}

TEST(Train, RowsSummarizeTheMetaIteration) {
  const fs::path dir = scratch_dir("train_rows");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.algorithm.iterations = 1;
  std::vector<MetricsRow> seen;
  train(cfg, "", [&](const MetricsRow& r) { seen.push_back(r); });
  ASSERT_EQ(seen.size(), 1u);

  // Recompute the first iteration directly.
  Rng rng(cfg.run.seed);
  const PolicyArch arch = policy_arch(cfg);
  const Vector theta = init_params(arch, rng).values;
  const PolicyTaskFamily family(train_distribution(cfg), arch, policy_task_config(cfg));
  const MetaIteration it = meta_iteration(family, theta, meta_config(cfg), rng);
  EXPECT_EQ(seen[0].mean_cost_adapted, it.mean_cost_adapted);
  EXPECT_EQ(seen[0].mean_return_adapted, it.mean_return_adapted);
  EXPECT_EQ(seen[0].mean_cost_zero_shot, it.mean_cost_zero_shot);
  EXPECT_EQ(seen[0].cost_limit, 1.0);
  EXPECT_EQ(seen[0].dF_norm, it.grad.dF.norm());
  EXPECT_EQ(seen[0].wall_time_s, 0.0);
  EXPECT_EQ(format_metrics_row(read_metrics((dir / "metrics.csv").string()).at(0)),
            format_metrics_row(seen[0]));
}

TEST(MetaTest, ReportUsesTheRequestedLimitAndAlignsWithCsv) {
  const fs::path dir = scratch_dir("metatest");
  const ExperimentConfig cfg = tiny_config(dir);
  MetaTestOptions opt;
  opt.cost_limit = 0.5;
  opt.shots = 2;
  opt.n_tasks = 3;
  opt.seed = 4;
  const EvalReport rep = run_meta_test(cfg, initial_theta(cfg, 1), opt);
  ASSERT_EQ(rep.tasks.size(), 3u);
  for (const auto& t : rep.tasks) {
    EXPECT_EQ(t.cost_limit, 0.5);
    EXPECT_EQ(t.costs.size(), 3u);
  }
  write_meta_test_csv((dir / "mt.csv").string(), rep);
  std::ifstream in(dir / "mt.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "task,cost_limit,shot,return,cost");
  double sum_last = 0.0;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f) std::getline(ss, x, ',');
    EXPECT_EQ(std::stod(f[1]), 0.5);
    if (f[2] == "2") sum_last += std::stod(f[4]);
  }
  EXPECT_EQ(rows, 9);
  EXPECT_NEAR(sum_last / 3.0, rep.mean_cost(2), 1e-12);

  const EvalReport again = run_meta_test(cfg, initial_theta(cfg, 1), opt);
  EXPECT_EQ(again.mean_cost(2), rep.mean_cost(2));
}

// ---- gradcheck ---------------------------------------------------------------

TEST(GradcheckSuite, EveryShippedCheckPasses) {
  const auto rows = run_gradcheck_suite();
  EXPECT_GE(rows.size(), 30u);
  for (const auto& r : rows) EXPECT_TRUE(r.passed) << r.name << " " << r.rel_error << " " << r.note;
  const std::string table = format_gradcheck_table(rows);
  EXPECT_NE(table.find("0 failed"), std::string::npos);
}

}  // namespace
}  // namespace metacpo

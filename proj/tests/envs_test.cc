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

#include "metacpo/envs.hpp"

#include <gtest/gtest.h>

namespace metacpo {
namespace {

TaskSpec circle_spec() {
  TaskSpec s;
  s.kind = EnvKind::kPointCircle;
  s.circle_radius = 1.2;
  s.wall_scale = 0.7;
  s.n_hazards = 4;
  s.spawn_range = 1.5;
  s.seed = 17;
  return s;
}

TaskSpec grid_spec(double slip, int hazards = 4) {
  TaskSpec s;
  s.kind = EnvKind::kGridHazard;
  s.grid_size = 5;
  s.slip = slip;
  s.n_hazards = hazards;
  s.gamma = 0.9;
  s.horizon = 200;
  s.seed = 3;
  return s;
}

TEST(SampleTask, DrawsInsideIntervals) {
  TaskDistribution dist;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const TaskSpec t = sample_task(dist, rng);
    EXPECT_GE(t.circle_radius, 1.0);
    EXPECT_LE(t.circle_radius, 1.5);
    EXPECT_GE(t.wall_scale, 0.65);
    EXPECT_LE(t.wall_scale, 0.75);
  }
}

TEST(SampleTask, PointMassInterval) {
  TaskDistribution dist;
  dist.circle_radius = {2.0, 2.0};
  Rng rng(2);
  EXPECT_EQ(sample_task(dist, rng).circle_radius, 2.0);
}

TEST(SampleTask, UniformMean) {
  TaskDistribution dist;
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += sample_task(dist, rng).circle_radius;
  EXPECT_NEAR(sum / 10000, 1.25, 0.01);
}

TEST(SampleTask, IntegerHazardCountsCoverRange) {
  TaskDistribution dist;
  dist.n_hazards = {3, 7};
  Rng rng(4);
  std::vector<int> seen(8, 0);
  for (int i = 0; i < 500; ++i) ++seen[static_cast<std::size_t>(sample_task(dist, rng).n_hazards)];
  for (int k = 3; k <= 7; ++k) EXPECT_GT(seen[static_cast<std::size_t>(k)], 0);
  EXPECT_EQ(seen[2], 0);
}

TEST(SampleTask, EmptyIntervalIsAnError) {
  TaskDistribution dist;
  dist.wall_scale = {0.8, 0.7};
  Rng rng(5);
  EXPECT_THROW(sample_task(dist, rng), std::invalid_argument);
}

TEST(SampleTask, ReproducibleFromSeed) {
  TaskDistribution dist;
  Rng a(9), b(9);
  for (int i = 0; i < 5; ++i) {
    const TaskSpec x = sample_task(dist, a), y = sample_task(dist, b);
    EXPECT_EQ(x.circle_radius, y.circle_radius);
    EXPECT_EQ(x.seed, y.seed);
  }
}

TEST(TaskSpecValidation, RejectsBadDiscountAndHorizon) {
  TaskSpec s = circle_spec();
  s.gamma = 1.0;
  EXPECT_THROW(validate(s), std::invalid_argument);
  s.gamma = 0.99;
  s.horizon = 0;
  EXPECT_THROW(validate(s), std::invalid_argument);
}

TEST(PointCircle, RestAtOriginIsNeutral) {
  TaskSpec s = circle_spec();
  s.n_hazards = 0;
  PointCircle env(s);
  Rng rng(0);
  const StepOutcome out = env.step(Vector::Zero(4), Vector::Zero(2), rng);
  EXPECT_EQ(out.transition.reward, 0.0);
  EXPECT_EQ(out.transition.cost, 0.0);
  EXPECT_FALSE(out.clamped);
}

TEST(PointCircle, OutsideWallsCosts) {
  PointCircle env(circle_spec());
  Rng rng(0);
  Vector st = Vector::Zero(4);
  st[0] = 0.7 * 1.2 + 0.1;
  for (const Vector& a : {Vector(Vector::Zero(2)), Vector(Vector::Constant(2, -1.0))}) {
    EXPECT_EQ(env.step(st, a, rng).transition.cost, 1.0);
  }
}

TEST(PointCircle, CounterClockwiseMotionOnCircleIsRewarded) {
  PointCircle env(circle_spec());
  Vector st(4);
  st << 1.2, 0.0, 0.0, 0.5;
  EXPECT_NEAR(env.reward_at(st), 0.6, 1e-12);
  st[3] = -0.5;
  EXPECT_LT(env.reward_at(st), 0.0);
}

TEST(PointCircle, ClampsOutOfBoxActions) {
  PointCircle env(circle_spec());
  Rng rng(0);
  Vector a(2);
  a << 5.0, -0.5;
  const StepOutcome out = env.step(Vector::Zero(4), a, rng);
  EXPECT_TRUE(out.clamped);
  EXPECT_EQ(out.transition.action[0], 1.0);
  EXPECT_EQ(out.transition.action[1], -0.5);
}

TEST(PointCircle, SpeedIsClamped) {
  PointCircle env(circle_spec());
  Rng rng(0);
  Vector st = Vector::Zero(4);
  for (int i = 0; i < 50; ++i) st = env.step(st, Vector::Ones(2), rng).next_state;
  EXPECT_LE(std::hypot(st[2], st[3]), PointCircle::kMaxSpeed + 1e-12);
}

TEST(PointCircle, HazardsWithinSpawnRangeAndObserved) {
  PointCircle env(circle_spec());
  ASSERT_EQ(env.hazards().size(), 4u);
  for (const auto& h : env.hazards()) EXPECT_LE(h.norm(), 1.5);
  const Vector o = env.observe(Vector::Zero(4));
  EXPECT_EQ(o.size(), env.obs_dim());
  EXPECT_EQ(o[4], 1.2);
  EXPECT_NEAR(o[5], 0.84, 1e-12);
  // Offsets are sorted by distance.
  EXPECT_LE(o.segment(6, 2).norm(), o.segment(8, 2).norm());
  EXPECT_LE(o.segment(8, 2).norm(), o.segment(10, 2).norm());
  // Standing on a hazard costs.
  Vector on = Vector::Zero(4);
  on.head(2) = env.hazards()[0];
  EXPECT_EQ(env.cost_at(on), 1.0);
}

TEST(PointCircle, IdenticalSeedGivesIdenticalTrajectory) {
  const auto run = [] {
    PointCircle env(circle_spec());
    Rng rng(42);
    Vector st = env.reset(rng);
    std::vector<double> out;
    for (int t = 0; t < 30; ++t) {
      Vector a(2);
      a << rng.normal(), rng.normal();
      const StepOutcome o = env.step(st, a, rng);
      out.push_back(o.transition.reward);
      st = o.next_state;
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(GridHazard, DeterministicMoveRight) {
  GridHazard env(grid_spec(0.0, 0));
  Rng rng(0);
  const StepOutcome out = env.step(Vector::Zero(1), Vector::Constant(1, 1.0), rng);
  EXPECT_EQ(out.next_state[0], env.cell(1, 0));
}

TEST(GridHazard, WallsBlockAndGoalAbsorbs) {
  GridHazard env(grid_spec(0.0, 0));
  EXPECT_EQ(env.move(env.cell(0, 0), 2), env.cell(0, 0));
  EXPECT_EQ(env.move(env.cell(0, 0), 4), env.cell(0, 0));
  for (int a = 0; a < 5; ++a) EXPECT_EQ(env.move(env.goal(), a), env.goal());
}

TEST(GridHazard, HazardsAvoidStartAndGoal) {
  GridHazard env(grid_spec(0.1, 10));
  int count = 0;
  for (int s = 0; s < env.num_states(); ++s) count += env.is_hazard(s);
  EXPECT_EQ(count, 10);
  EXPECT_FALSE(env.is_hazard(0));
  EXPECT_FALSE(env.is_hazard(env.goal()));
}

TEST(GridHazard, InvalidActionIndexIsClamped) {
  GridHazard env(grid_spec(0.0, 0));
  Rng rng(0);
  EXPECT_TRUE(env.step(Vector::Zero(1), Vector::Constant(1, 7.0), rng).clamped);
}

TEST(TabularModel, GridModelIsValid) {
  GridHazard env(grid_spec(0.2));
  EXPECT_NO_THROW(validate(tabular_model(env)));
}

TEST(TabularModel, RejectsBadRows) {
  GridHazard env(grid_spec(0.2));
  TabularModel m = tabular_model(env);
  m.P(0, 0) += 1e-9;
  EXPECT_THROW(validate(m), std::invalid_argument);
}

TEST(ExactPolicyEval, SingleStateGeometricSeries) {
  TabularModel m;
  m.num_states = 1;
  m.num_actions = 1;
  m.P = Matrix::Ones(1, 1);
  m.R = Matrix::Ones(1, 1);
  m.C = Matrix::Zero(1, 1);
  m.mu = Vector::Ones(1);
  const PolicyEvaluation ev = exact_policy_eval(m, Matrix::Ones(1, 1), 0.9);
  EXPECT_NEAR(ev.J_R, 10.0, 1e-12);
  EXPECT_EQ(ev.J_C, 0.0);
  EXPECT_THROW(exact_policy_eval(m, Matrix::Ones(1, 1), 1.0), std::invalid_argument);
}

TEST(ExactPolicyEval, MatchesValueIteration) {
  // Two states, two actions.
  TabularModel m;
  m.num_states = 2;
  m.num_actions = 2;
  m.P.resize(4, 2);
  m.P << 0.7, 0.3,  //
      0.1, 0.9,     //
      0.5, 0.5,     //
      0.0, 1.0;
  m.R.resize(2, 2);
  m.R << 1.0, 0.0, 0.5, 2.0;
  m.C.resize(2, 2);
  m.C << 0.0, 1.0, 1.0, 0.0;
  m.mu = Vector::Constant(2, 0.5);
  Matrix pi(2, 2);
  pi << 0.4, 0.6, 0.8, 0.2;
  const double gamma = 0.95;
  const PolicyEvaluation ev = exact_policy_eval(m, pi, gamma);

  Vector v = Vector::Zero(2);
  for (int it = 0; it < 5000; ++it) {
    Vector next(2);
    for (int s = 0; s < 2; ++s) {
      next[s] = 0.0;
      for (int a = 0; a < 2; ++a) {
        next[s] += pi(s, a) * (m.R(s, a) + gamma * m.P.row(s * 2 + a).dot(v));
      }
    }
    v = next;
  }
  EXPECT_NEAR(ev.V_R[0], v[0], 1e-12);
  EXPECT_NEAR(ev.V_R[1], v[1], 1e-12);
  EXPECT_NEAR(ev.J_R, m.mu.dot(v), 1e-12);
}

TEST(ExactPolicyEval, AdvantageHasZeroMeanUnderPolicy) {
  GridHazard env(grid_spec(0.2));
  const TabularModel m = tabular_model(env);
  Rng rng(8);
  Matrix pi(m.num_states, m.num_actions);
  for (Eigen::Index i = 0; i < pi.size(); ++i) pi.data()[i] = rng.uniform(0.1, 1.0);
  pi = pi.array().colwise() / pi.rowwise().sum().array();
  const PolicyEvaluation ev = exact_policy_eval(m, pi, 0.95);
  EXPECT_LE(pi.cwiseProduct(ev.A_R).rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(pi.cwiseProduct(ev.A_C).rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(ev.occupancy.sum(), 1.0 / (1.0 - 0.95), 1e-9);
}

TEST(GridHazard, MonteCarloMatchesExactEvaluation) {
  const TaskSpec spec = grid_spec(0.2, 5);
  GridHazard env(spec);
  const TabularModel m = tabular_model(env);
  // Mildly goal-directed fixed policy.
  Matrix pi = Matrix::Constant(m.num_states, m.num_actions, 0.1);
  pi.col(1).array() += 0.25;
  pi.col(3).array() += 0.25;
  const PolicyEvaluation ev = exact_policy_eval(m, pi, spec.gamma);

  Rng rng(123);
  const int episodes = 10000;
  double sum_r = 0, sum_r2 = 0, sum_c = 0, sum_c2 = 0;
  for (int e = 0; e < episodes; ++e) {
    Vector st = env.reset(rng);
    double ret = 0, cost = 0, disc = 1;
    for (int t = 0; t < spec.horizon; ++t) {
      const int s = static_cast<int>(st[0]);
      double u = rng.uniform();
      int a = 0;
      while (a < 4 && u >= pi(s, a)) u -= pi(s, a++);
      const StepOutcome o = env.step(st, Vector::Constant(1, a), rng);
      ret += disc * o.transition.reward;
      cost += disc * o.transition.cost;
      disc *= spec.gamma;
      st = o.next_state;
    }
    sum_r += ret;
    sum_r2 += ret * ret;
    sum_c += cost;
    sum_c2 += cost * cost;
  }
  const double mr = sum_r / episodes, mc = sum_c / episodes;
  const double se_r = std::sqrt((sum_r2 / episodes - mr * mr) / episodes);
  const double se_c = std::sqrt((sum_c2 / episodes - mc * mc) / episodes);
  EXPECT_LE(std::abs(mr - ev.J_R), 3 * se_r);
  EXPECT_LE(std::abs(mc - ev.J_C), 3 * se_c);
}

TEST(GridHazard, EpisodeCostCountsViolatingSteps) {
  GridHazard env(grid_spec(0.3, 8));
  Rng rng(5);
  Vector st = env.reset(rng);
  int violations = 0;
  double cost = 0;
  for (int t = 0; t < 100; ++t) {
    violations += env.is_hazard(static_cast<int>(st[0]));
    const StepOutcome o = env.step(st, Vector::Constant(1, rng.uniform_int(0, 4)), rng);
    cost += o.transition.cost;
    st = o.next_state;
  }
  EXPECT_EQ(cost, violations);
}

}  // namespace
}  // namespace metacpo

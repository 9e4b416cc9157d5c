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

#include "metacpo/trust_region.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace metacpo {
namespace {

using testing::random_vector;

SurrogateData euclidean(Vector g, Vector a, double b, double delta) {
  SurrogateData d;
  d.g = std::move(g);
  d.a = std::move(a);
  d.b_slack = b;
  d.delta = delta;
  return d;
}

TEST(TrustRegion, CostInactiveGivesScaledGradient) {
  const SurrogateData d = euclidean(Vector::Unit(2, 0), Vector::Unit(2, 1), -1.0, 0.5);
  const StepResult r = solve_trust_region_subproblem(d);
  EXPECT_EQ(r.step_case, StepCase::kUnconstrained);
  EXPECT_NEAR(r.step[0], 1.0, 1e-14);
  EXPECT_NEAR(r.step[1], 0.0, 1e-14);
  EXPECT_NEAR(r.trust_dual, 1.0, 1e-14);
  EXPECT_EQ(r.cost_dual, 0.0);
}

TEST(TrustRegion, BothConstraintsActive) {
  // maximize s₀ + s₁ on ‖s‖² ≤ 1 with s₁ ≤ 0.1.
  const SurrogateData d = euclidean(Vector::Ones(2), Vector::Unit(2, 1), -0.1, 0.5);
  const StepResult r = solve_trust_region_subproblem(d);
  EXPECT_EQ(r.step_case, StepCase::kFeasible);
  EXPECT_NEAR(r.step[1], 0.1, 1e-12);
  EXPECT_NEAR(r.step[0], std::sqrt(1.0 - 0.01), 1e-12);
  EXPECT_GT(r.cost_dual, 0.0);
}

TEST(TrustRegion, InfeasibleFallsBackToRecovery) {
  const SurrogateData d = euclidean(Vector::Ones(2), Vector::Unit(2, 1), 2.0, 0.5);
  ASSERT_EQ(check_feasibility(d), Feasibility::kInfeasible);
  const StepResult r = solve_trust_region_subproblem(d);
  EXPECT_EQ(r.step_case, StepCase::kRecovery);
  EXPECT_NEAR(r.step[0], 0.0, 1e-14);
  EXPECT_NEAR(r.step[1], -1.0, 1e-14);
}

TEST(TrustRegion, FeasibilityBoundaryCountsAsFeasible) {
  // b²/(aᵀa) = 1 = 2δ exactly.
  EXPECT_EQ(check_feasibility(euclidean(Vector::Ones(2), Vector::Unit(2, 0), 1.0, 0.5)),
            Feasibility::kFeasible);
  EXPECT_EQ(check_feasibility(euclidean(Vector::Ones(2), Vector::Unit(2, 0), 1.001, 0.5)),
            Feasibility::kInfeasible);
  EXPECT_EQ(check_feasibility(euclidean(Vector::Ones(2), Vector::Zero(2), 0.1, 0.5)),
            Feasibility::kInfeasible);
  EXPECT_EQ(check_feasibility(euclidean(Vector::Ones(2), Vector::Zero(2), -0.1, 0.5)),
            Feasibility::kFeasible);
}

TEST(TrustRegion, ZeroGradientsAreDegenerate) {
  const StepResult r = solve_trust_region_subproblem(euclidean(Vector::Zero(3), Vector::Zero(3), -1.0, 0.1));
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.step.norm(), 0.0);
}

TEST(TrustRegion, ParallelGradientsAreDegenerateButFinite) {
  const StepResult r = solve_trust_region_subproblem(euclidean(Vector::Ones(2), Vector::Ones(2), 0.1, 0.5));
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(r.step.allFinite());
  EXPECT_NEAR(0.1 + r.step.sum(), 0.0, 1e-12);
}

TEST(TrustRegion, AnalyticMatchesQpRouteOnRandomInstances) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    SurrogateData d;
    d.g = random_vector(rng, n);
    d.a = random_vector(rng, n);
    d.b_slack = rng.uniform(-0.5, 0.5);
    d.delta = rng.uniform(0.005, 0.1);
    d.metric = Metric::dense(testing::random_spd(rng, n, 0.2));
    const StepResult analytic = solve_trust_region_subproblem(d);
    // In one dimension g ∥ a always; those steps are covered above.
    if (analytic.degenerate) continue;
    const StepResult qp = solve_trust_region_by_qp(d);
    EXPECT_EQ(analytic.step_case, qp.step_case) << "trial " << trial;
    const double f_analytic = analytic.step_case == StepCase::kRecovery ? d.a.dot(analytic.step)
                                                                         : d.g.dot(analytic.step);
    const double f_qp = analytic.step_case == StepCase::kRecovery ? d.a.dot(qp.step) : d.g.dot(qp.step);
    EXPECT_LE(std::abs(f_analytic - f_qp), 1e-8 * std::max(1.0, std::abs(f_qp))) << "trial " << trial;
    EXPECT_LE(0.5 * d.metric.quad(analytic.step), d.delta * (1 + 1e-10));
    if (analytic.step_case != StepCase::kRecovery) {
      EXPECT_LE(d.b_slack + d.a.dot(analytic.step), 1e-10);
    }
  }
}

TEST(TrustRegion, QpReplayReproducesStep) {
  Rng rng(5);
  SurrogateData d;
  d.g = random_vector(rng, 4);
  d.a = random_vector(rng, 4);
  d.b_slack = 0.05;
  d.delta = 0.02;
  const StepResult r = solve_trust_region_subproblem(d);
  const QPSolution replay = solve_qp(trust_region_qp(d, r));
  ASSERT_EQ(replay.status, QPStatus::kOptimal);
  EXPECT_LE((replay.z - r.step).lpNorm<Eigen::Infinity>(), 1e-9);
  const QPSolution stored = trust_region_qp_solution(d, r);
  EXPECT_LE(kkt_residuals(trust_region_qp(d, r), stored).max(), 1e-9);
}

TEST(TrustRegion, FeasibilityAgreesWithRejectionSampling) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    SurrogateData d;
    d.g = random_vector(rng, n);
    d.a = random_vector(rng, n);
    const Matrix h = testing::random_spd(rng, n, 0.3);
    d.metric = Metric::dense(h);
    d.delta = 0.5;
    // Place b at a ratio b²/(2δ aᵀH⁻¹a) well away from 1 on either side.
    const double s = d.a.dot(h.ldlt().solve(d.a));
    const double ratio = trial % 2 == 0 ? rng.uniform(0.3, 0.8) : rng.uniform(1.2, 2.0);
    d.b_slack = std::sqrt(ratio * 2 * d.delta * s);
    // Uniform samples in the ellipsoid ½sᵀHs ≤ δ via s = L⁻ᵀ u √(2δ).
    const Matrix l = Eigen::LLT<Matrix>(h).matrixU();
    bool found = false;
    for (int k = 0; k < 100000 && !found; ++k) {
      Vector u = random_vector(rng, n);
      u *= std::pow(rng.uniform(), 1.0 / n) / u.norm();
      const Vector pt = l.triangularView<Eigen::Upper>().solve(u * std::sqrt(2 * d.delta));
      found = d.b_slack + d.a.dot(pt) <= 0.0;
    }
    EXPECT_EQ(check_feasibility(d) == Feasibility::kFeasible, found) << "trial " << trial;
  }
}

TEST(Metric, FisherSolveUsesDampedConjugateGradient) {
  Rng rng(1);
  const Matrix f = testing::random_spd(rng, 5, 0.0);
  const Metric m = Metric::fisher([&](const Vector& v) { return Vector(f * v); }, 0.1, 50);
  const Vector b = random_vector(rng, 5);
  const Vector x = m.solve(b);
  EXPECT_LE((f * x + 0.1 * x - b).norm(), 1e-8);
  EXPECT_LE((m.to_dense(5) - (f + 0.1 * Matrix::Identity(5, 5))).norm(), 1e-12);
}

TEST(Validate, RejectsBadSurrogates) {
  SurrogateData d = euclidean(Vector::Ones(2), Vector::Ones(2), 0.0, 0.01);
  EXPECT_NO_THROW(validate(d));
  d.delta = 0.0;
  EXPECT_THROW(validate(d), std::invalid_argument);
  d.delta = 0.01;
  d.g[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(validate(d), std::invalid_argument);
  d.g[0] = 1.0;
  d.a = Vector::Ones(3);
  EXPECT_THROW(validate(d), std::invalid_argument);
  SurrogateData neg = euclidean(Vector::Ones(2), Vector::Ones(2), 0.0, 0.01);
  neg.metric = Metric::fisher([](const Vector& v) { return Vector(-2.0 * v); }, 0.1);
  EXPECT_THROW(validate(neg), std::invalid_argument);
}

}  // namespace
}  // namespace metacpo

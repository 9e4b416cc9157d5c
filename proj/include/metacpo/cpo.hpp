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

#include <functional>

#include "metacpo/trust_region.hpp"

namespace metacpo {

/// Measured quantities at a candidate step, as reported by the caller's
/// evaluator (a surrogate on frozen samples, fresh rollouts, or an exact
/// model). `trust` is compared against δ: ½‖s‖² in parameter space or a
/// measured KL divergence.
struct Measurement {
  double objective = 0.0;
  double cost = 0.0;
  double trust = 0.0;
};

using StepEvaluator = std::function<Measurement(const Vector& step)>;

struct CpoConfig {
  double cost_limit = 10.0;
  /// Accepted candidates may exceed h by this fraction of |h|.
  double cost_tolerance = 0.1;
  double backtrack_coeff = 0.5;
  int max_backtracks = 10;
};

struct StepInfo {
  StepCase step_case = StepCase::kUnconstrained;
  bool accepted = false;
  int backtracks = 0;
  /// gᵀs of the full (unscaled) subproblem step.
  double predicted_improve = 0.0;
  /// Measurement of the accepted candidate, or of the current point when
  /// every candidate was rejected.
  double measured_objective = 0.0;
  double measured_cost = 0.0;
  double kl_or_dist = 0.0;
  bool degenerate = false;
};

struct CpoStep {
  /// Accepted displacement (zero when rejected).
  Vector step;
  /// Unscaled subproblem solution.
  StepResult solution;
  StepInfo info;
};

/// Solves the trust-region subproblem for `d` and backtracks along the
/// solution, s ← coeff·s, until a candidate passes:
///   current cost ≤ h, not recovery: objective ≥ current.objective and
///     cost ≤ h(1+tol)
///   current cost > h, or recovery: cost ≤ h(1+tol) or cost ≤ current.cost
/// and, in every case, trust ≤ δ(1 + 1e-8). Candidates with non-finite
/// measurements are rejected.
CpoStep cpo_step(const SurrogateData& d, const Measurement& current, const StepEvaluator& evaluate,
                 const CpoConfig& cfg);

}  // namespace metacpo

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
#include <optional>
#include <string>

#include "metacpo/qp.hpp"

namespace metacpo {

/// Symmetric positive-definite metric H of the trust region ½ sᵀHs ≤ δ.
///
/// Euclidean (H = I), a dense matrix, or a matrix-free Fisher operator whose
/// inverse is applied with damped conjugate gradients.
class Metric {
 public:
  enum class Kind { kEuclidean, kDense, kFisher };

  Metric() = default;
  static Metric euclidean();
  static Metric dense(Matrix h);
  /// `fvp(v)` returns Hv; solves use `cg_iters` CG iterations on (H + damping·I).
  static Metric fisher(std::function<Vector(const Vector&)> fvp, double damping = 0.1,
                       int cg_iters = 10);

  Kind kind() const { return kind_; }
  Vector apply(const Vector& v) const;
  Vector solve(const Vector& v) const;
  double quad(const Vector& v) const { return v.dot(apply(v)); }
  /// Dense H for an n-dimensional space (for small problems and tests).
  Matrix to_dense(int n) const;

 private:
  Kind kind_ = Kind::kEuclidean;
  Matrix dense_;
  Eigen::LLT<Matrix> dense_llt_;
  std::function<Vector(const Vector&)> fvp_;
  double damping_ = 0.0;
  int cg_iters_ = 0;
};

/// Conjugate gradients for H x = b with H given as an operator.
Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b,
                          int iterations, double residual_tol = 1e-10);

/// Local linearization of a constrained policy update at the current point:
///   maximize gᵀs  s.t.  ½ sᵀHs ≤ δ,  b_slack + aᵀs ≤ 0.
struct SurrogateData {
  Vector g;              // reward-advantage gradient
  Vector a;              // cost-advantage gradient
  double b_slack = 0.0;  // J_C − h
  Metric metric;
  double delta = 0.01;
};

/// Throws std::invalid_argument on non-finite gradients, δ ≤ 0, mismatched
/// sizes or a metric failing vᵀHv > 0 on ten random probes.
void validate(const SurrogateData& d, std::uint64_t probe_seed = 0x5eed);

enum class StepCase { kFeasible, kRecovery, kUnconstrained };

std::string to_string(StepCase c);

struct StepResult {
  Vector step;               // θ − θᵏ
  double trust_dual = 0.0;   // multiplier of the trust-region constraint
  double cost_dual = 0.0;    // multiplier of the linearized cost constraint
  StepCase step_case = StepCase::kUnconstrained;
  /// Zero step because the problem carries no direction (g = a = 0 etc).
  bool degenerate = false;
};

enum class Feasibility { kFeasible, kInfeasible };

/// Whether {b + aᵀs ≤ 0} meets {½ sᵀHs ≤ δ}: infeasible iff b > 0 and
/// b² / (aᵀH⁻¹a) > 2δ. The boundary counts as feasible; a = 0 with b > 0 is
/// infeasible.
Feasibility check_feasibility(const SurrogateData& d);

/// Closed-form solution through the two-multiplier dual. Falls back to the
/// pure cost-decreasing step when the linearized problem is infeasible.
StepResult solve_trust_region_subproblem(const SurrogateData& d);

/// The QP whose minimizer is the step once the trust multiplier is fixed:
///   min ½ μ sᵀHs − gᵀs  s.t.  aᵀs ≤ −b      (feasible / unconstrained)
///   min ½ μ sᵀHs + aᵀs                     (recovery)
/// H is materialized densely, so this is meant for replay and checking.
QPProblem trust_region_qp(const SurrogateData& d, const StepResult& r);

/// Multipliers of trust_region_qp's inequality rows as a QPSolution.
QPSolution trust_region_qp_solution(const SurrogateData& d, const StepResult& r);

/// Independent route: bisection on the trust multiplier μ, each trial solved
/// by solve_qp, until ½ sᵀHs = δ. Dense H; intended for small n.
StepResult solve_trust_region_by_qp(const SurrogateData& d, const SolverSettings& settings = {});

}  // namespace metacpo

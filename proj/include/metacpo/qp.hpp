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

#include <string>

#include "metacpo/types.hpp"

namespace metacpo {

/// Convex quadratic program
///
///   minimize    ½ zᵀQz + qᵀz
///   subject to  Az = b,  Gz ≤ h
///
/// A/b and G/h may have zero rows.
struct QPProblem {
  Matrix Q;
  Vector q;
  Matrix A;
  Vector b;
  Matrix G;
  Vector h;

  int num_variables() const { return static_cast<int>(q.size()); }
  int num_equalities() const { return static_cast<int>(b.size()); }
  int num_inequalities() const { return static_cast<int>(h.size()); }

  /// Unconstrained problem with empty constraint blocks of matching width.
  static QPProblem unconstrained(Matrix Q, Vector q);
};

/// Throws std::invalid_argument when dimensions disagree, entries are not
/// finite, Q is asymmetric beyond 1e-10 or n < 1.
void validate(const QPProblem& p);

enum class QPStatus { kOptimal, kInfeasible, kMaxIter };

std::string to_string(QPStatus s);

struct QPSolution {
  Vector z;       // primal optimum
  Vector lambda;  // inequality duals, ≥ 0
  Vector nu;      // equality duals
  QPStatus status = QPStatus::kMaxIter;
  int iterations = 0;
  /// For kInfeasible: lower bound on the largest constraint violation any
  /// point must incur, derived from the normalized dual ray. Zero otherwise.
  double infeasibility_bound = 0.0;
};

struct SolverSettings {
  double tol = 1e-10;
  int max_iter = 100;
  double regularization = 1e-9;
  /// Re-solve the equality-constrained KKT system on the identified active set
  /// once the interior-point iteration has converged.
  bool polish = true;
};

/// ∞-norms of the three KKT blocks.
struct KKTResiduals {
  double stationarity = 0.0;    // ‖Qz + q + Aᵀν + Gᵀλ‖∞
  double primal = 0.0;          // max(‖Az − b‖∞, ‖max(Gz − h, 0)‖∞)
  double complementarity = 0.0; // ‖λ ⊙ (Gz − h)‖∞

  double max() const;
};

/// Primal-dual interior point method with Mehrotra predictor-corrector.
/// Throws std::invalid_argument if the problem is malformed or Q is not PSD.
QPSolution solve_qp(const QPProblem& p, const SolverSettings& settings = {});

KKTResiduals kkt_residuals(const QPProblem& p, const QPSolution& sol);

double qp_objective(const QPProblem& p, const Vector& z);

}  // namespace metacpo

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

#include <stdexcept>
#include <string>
#include <vector>

#include "metacpo/qp.hpp"
#include "metacpo/trust_region.hpp"

namespace metacpo {

/// Raised when the KKT system at a solution is singular: a weakly active
/// constraint (zero multiplier and zero slack) or linearly dependent active
/// rows. No pseudo-inverse gradient is produced in that case.
class DegenerateKKTError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Constraints whose slack and multiplier are both below this are weakly
/// active and make the backward pass degenerate.
inline constexpr double kStrictComplementarityTol = 1e-8;

/// Gradient of a scalar loss ℓ(z*) with respect to every block of QP data.
struct QPGradients {
  Matrix dQ;  // symmetrized
  Vector dq;
  Matrix dA;
  Vector db;
  Matrix dG;
  Vector dh;
};

/// Implicit differentiation of the KKT conditions at an optimal solution.
///
/// Solves the transposed KKT system
///   [Q       GᵀD(λ*)    Aᵀ] [d_z]   [−∂ℓ/∂z*]
///   [G       D(Gz*−h)   0 ] [d_λ] = [   0   ]
///   [A       0          0 ] [d_ν]   [   0   ]
/// with one LU factorization and assembles
///   dq = d_z,  dQ = ½(d_z z*ᵀ + z* d_zᵀ),  db = −d_ν,  dA = d_ν z*ᵀ + ν* d_zᵀ,
///   dh = −D(λ*) d_λ,  dG = D(λ*) d_λ z*ᵀ + λ* d_zᵀ.
/// Throws DegenerateKKTError on degenerate active sets and
/// std::invalid_argument if the solution is not optimal.
QPGradients qp_backward(const QPProblem& p, const QPSolution& sol, const Vector& dl_dz);

struct GradcheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  int entries = 0;
};

struct GradcheckReport {
  std::vector<GradcheckBlock> blocks;
  double max_rel_error = 0.0;
  /// Finite-difference re-solves that did not reach optimality; those entries
  /// are left out of the maxima.
  int failed_resolves = 0;
  /// Set when the analytic backward pass itself failed (e.g. degeneracy).
  std::string error;
  bool passed = false;
};

/// Compares qp_backward with central differences of ℓ = dl_dzᵀ z*(p) for every
/// entry of every block. Errors are measured as ‖analytic − fd‖∞ / max(1, ‖fd‖∞)
/// per block. Passes iff the largest error is ≤ `threshold`.
GradcheckReport gradcheck_qp(const QPProblem& p, const Vector& dl_dz, double eps = 1e-6,
                             double threshold = 1e-4, const SolverSettings& settings = {});

/// Gradient of ℓ(step) with respect to the trust-region subproblem data.
struct SurrogateGradients {
  Vector dg;
  Vector da;
  double db = 0.0;
};

/// Backward pass through solve_trust_region_subproblem. The quadratic trust
/// constraint enters the same transposed KKT system as a QP row with
/// gradient Hs; the metric-weighted (1,1) block is eliminated through a 2×2
/// Schur complement, so only H⁻¹ products are needed.
/// Throws DegenerateKKTError for degenerate steps, a vanishing trust
/// multiplier or a weakly active cost constraint.
SurrogateGradients trust_region_backward(const SurrogateData& d, const StepResult& r,
                                         const Vector& dl_dstep);

}  // namespace metacpo

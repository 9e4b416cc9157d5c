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

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "metacpo/qp.hpp"
#include "metacpo/rng.hpp"

namespace metacpo::testing {

inline Vector random_vector(Rng& rng, int n, double scale = 1.0) {
  Vector v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// SPD matrix with eigenvalues ≥ `floor`.
inline Matrix random_spd(Rng& rng, int n, double floor = 0.1) {
  const Matrix b = random_matrix(rng, n, n);
  return b * b.transpose() / n + floor * Matrix::Identity(n, n);
}

/// Feasible strictly convex QP; roughly half of the inequalities are active
/// at the generating point (not necessarily at the optimum).
inline QPProblem random_strictly_convex_qp(Rng& rng, int n, int m, int p) {
  QPProblem qp;
  qp.Q = random_spd(rng, n);
  qp.q = random_vector(rng, n);
  qp.A = random_matrix(rng, p, n);
  qp.G = random_matrix(rng, m, n);
  const Vector z0 = random_vector(rng, n);
  qp.b = qp.A * z0;
  qp.h = qp.G * z0;
  int tight = 0;
  for (int i = 0; i < m; ++i) {
    if (tight < n - p && rng.uniform() < 0.5) {
      ++tight;
    } else {
      qp.h[i] += rng.uniform(0.1, 1.0);
    }
  }
  return qp;
}

/// Strictly convex QP built around a known KKT point: an active set of at
/// most n − p rows with multipliers in [0.2, 1] and the remaining rows with
/// slack in [0.2, 1], so strict complementarity holds with margin.
struct PlantedQP {
  QPProblem qp;
  Vector z, lambda, nu;
};

inline PlantedQP planted_qp(Rng& rng, int n, int m, int p) {
  PlantedQP out;
  QPProblem& qp = out.qp;
  qp.Q = random_spd(rng, n);
  qp.A = random_matrix(rng, p, n);
  qp.G = random_matrix(rng, m, n);
  out.z = random_vector(rng, n);
  out.nu = random_vector(rng, p);
  out.lambda = Vector::Zero(m);
  qp.b = qp.A * out.z;
  qp.h = qp.G * out.z;
  int active = 0;
  for (int i = 0; i < m; ++i) {
    if (active < n - p && rng.uniform() < 0.5) {
      ++active;
      out.lambda[i] = rng.uniform(0.2, 1.0);
    } else {
      qp.h[i] += rng.uniform(0.2, 1.0);
    }
  }
  qp.q = -(qp.Q * out.z + qp.A.transpose() * out.nu + qp.G.transpose() * out.lambda);
  return out;
}

/// Accelerated projected gradient on the dual of a strictly convex QP:
///   max_{λ≥0, ν}  −½ wᵀQ⁻¹w − hᵀλ − bᵀν,   w = q + Gᵀλ + Aᵀν,
/// with the primal recovered as z = −Q⁻¹w. The only projection is λ ← max(λ, 0).
inline Vector dual_projected_gradient(const QPProblem& qp, int iterations = 400000,
                                      double tol = 1e-13) {
  const int m = qp.num_inequalities();
  const int p = qp.num_equalities();
  const Eigen::LLT<Matrix> llt(qp.Q);
  if (m + p == 0) return llt.solve(-qp.q);
  Matrix c(m + p, qp.num_variables());
  c << qp.G, qp.A;
  Vector d(m + p);
  d << qp.h, qp.b;
  const Matrix cqc = c * llt.solve(c.transpose());
  const double lipschitz = Eigen::SelfAdjointEigenSolver<Matrix>(cqc).eigenvalues().maxCoeff();
  const Vector cqq = c * llt.solve(qp.q);
  // Dual gradient of the (negated, to be minimized) dual objective:
  //   ∇ = C Q⁻¹ (q + Cᵀy) + d.
  Vector y = Vector::Zero(m + p), y_prev = y, x = y;
  double t = 1.0;
  for (int it = 0; it < iterations; ++it) {
    Vector grad = cqq + cqc * x + d;
    Vector y_next = x - grad / lipschitz;
    y_next.head(m) = y_next.head(m).cwiseMax(0.0);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    x = y_next + ((t - 1.0) / t_next) * (y_next - y);
    const double change = (y_next - y).lpNorm<Eigen::Infinity>();
    y_prev = y;
    y = y_next;
    t = t_next;
    if (change < tol && it > 10) break;
  }
  return llt.solve(-(qp.q + c.transpose() * y));
}

/// Relative error ‖a − b‖∞ / max(1, ‖b‖∞).
inline double rel_error(const Matrix& a, const Matrix& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

inline double central_difference(const std::function<double(double)>& f, double eps) {
  return (f(eps) - f(-eps)) / (2.0 * eps);
}

}  // namespace metacpo::testing

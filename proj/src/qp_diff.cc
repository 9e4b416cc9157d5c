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

#include "metacpo/qp_diff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/LU>

namespace metacpo {

namespace {

constexpr double kLuThreshold = 1e-11;

double block_error(const Matrix& analytic, const Matrix& fd, const Matrix& mask) {
  double num = 0.0, scale = 1.0;
  for (Eigen::Index i = 0; i < fd.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    num = std::max(num, std::abs(analytic.data()[i] - fd.data()[i]));
    scale = std::max(scale, std::abs(fd.data()[i]));
  }
  return num / scale;
}

}  // namespace

QPGradients qp_backward(const QPProblem& p, const QPSolution& sol, const Vector& dl_dz) {
  if (sol.status != QPStatus::kOptimal) {
    throw std::invalid_argument("qp_backward: solution is not optimal");
  }
  const int n = p.num_variables();
  const int m = p.num_inequalities();
  const int k = p.num_equalities();
  if (dl_dz.size() != n || sol.z.size() != n || sol.lambda.size() != m || sol.nu.size() != k) {
    throw std::invalid_argument("qp_backward: dimension mismatch");
  }

  // Active-set classification; cleaned multipliers and slacks make the
  // complementarity rows exact.
  Vector lam = Vector::Zero(m);
  Vector gap = Vector::Zero(m);
  if (m > 0) {
    const Vector raw_gap = p.G * sol.z - p.h;
    for (int i = 0; i < m; ++i) {
      const double slack = -raw_gap[i];
      if (sol.lambda[i] <= kStrictComplementarityTol && std::abs(slack) <= kStrictComplementarityTol) {
        throw DegenerateKKTError("qp_backward: inequality " + std::to_string(i) +
                                 " is weakly active");
      }
      if (sol.lambda[i] > slack) {
        lam[i] = sol.lambda[i];
      } else {
        gap[i] = raw_gap[i];
      }
    }
  }

  const int dim = n + m + k;
  Matrix kkt = Matrix::Zero(dim, dim);
  kkt.topLeftCorner(n, n) = p.Q;
  if (m > 0) {
    kkt.block(0, n, n, m) = p.G.transpose() * lam.asDiagonal();
    kkt.block(n, 0, m, n) = p.G;
    kkt.block(n, n, m, m) = gap.asDiagonal();
  }
  if (k > 0) {
    kkt.block(0, n + m, n, k) = p.A.transpose();
    kkt.block(n + m, 0, k, n) = p.A;
  }
  Eigen::FullPivLU<Matrix> lu(kkt);
  lu.setThreshold(kLuThreshold);
  if (!lu.isInvertible()) {
    throw DegenerateKKTError("qp_backward: KKT matrix is singular (dependent active constraints)");
  }
  Vector rhs = Vector::Zero(dim);
  rhs.head(n) = -dl_dz;
  const Vector d = lu.solve(rhs);
  const Vector dz = d.head(n);
  const Vector dlam = d.segment(n, m);
  const Vector dnu = d.segment(n + m, k);

  QPGradients out;
  out.dq = dz;
  out.dQ = 0.5 * (dz * sol.z.transpose() + sol.z * dz.transpose());
  out.db = -dnu;
  out.dA = dnu * sol.z.transpose() + sol.nu * dz.transpose();
  const Vector lam_dlam = lam.cwiseProduct(dlam);
  out.dh = -lam_dlam;
  out.dG = lam_dlam * sol.z.transpose() + lam * dz.transpose();
  return out;
}

GradcheckReport gradcheck_qp(const QPProblem& p, const Vector& dl_dz, double eps,
                             double threshold, const SolverSettings& settings) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradcheck_qp: eps must be positive");
  GradcheckReport report;
  const QPSolution sol = solve_qp(p, settings);
  if (sol.status != QPStatus::kOptimal) {
    report.error = "base problem not solved: " + to_string(sol.status);
    return report;
  }
  QPGradients grads;
  try {
    grads = qp_backward(p, sol, dl_dz);
  } catch (const DegenerateKKTError& e) {
    report.error = e.what();
    return report;
  }

  // ℓ at perturbed data, or NaN when the re-solve fails.
  const auto loss_at = [&](const QPProblem& perturbed) {
    const QPSolution s = solve_qp(perturbed, settings);
    if (s.status != QPStatus::kOptimal) return std::numeric_limits<double>::quiet_NaN();
    return dl_dz.dot(s.z);
  };

  // Central difference over one entry; `poke` applies ±eps to a copy.
  const auto central = [&](const std::function<void(QPProblem&, double)>& poke, double& out) {
    QPProblem plus = p, minus = p;
    poke(plus, eps);
    poke(minus, -eps);
    const double lp = loss_at(plus), lm = loss_at(minus);
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      ++report.failed_resolves;
      return false;
    }
    out = (lp - lm) / (2.0 * eps);
    return true;
  };

  const auto check_matrix = [&](const std::string& name, const Matrix& analytic,
                                const std::function<Matrix&(QPProblem&)>& field, bool symmetric) {
    Matrix fd = Matrix::Zero(analytic.rows(), analytic.cols());
    Matrix mask = Matrix::Zero(analytic.rows(), analytic.cols());
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
        if (symmetric && i > j) continue;
        double v = 0.0;
        const bool ok = central(
            [&](QPProblem& q, double e) {
              field(q)(i, j) += e;
              if (symmetric && i != j) field(q)(j, i) += e;
            },
            v);
        if (!ok) continue;
        if (symmetric && i != j) {
          fd(i, j) = fd(j, i) = 0.5 * v;
          mask(i, j) = mask(j, i) = 1.0;
        } else {
          fd(i, j) = v;
          mask(i, j) = 1.0;
        }
      }
    }
    GradcheckBlock block{name, block_error(analytic, fd, mask), static_cast<int>(mask.sum())};
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(block);
  };

  check_matrix("Q", grads.dQ, [](QPProblem& q) -> Matrix& { return q.Q; }, true);
  check_matrix("A", grads.dA, [](QPProblem& q) -> Matrix& { return q.A; }, false);
  check_matrix("G", grads.dG, [](QPProblem& q) -> Matrix& { return q.G; }, false);

  const auto check_vec = [&](const std::string& name, const Vector& analytic,
                             Vector QPProblem::*field) {
    Matrix fd = Matrix::Zero(analytic.size(), 1);
    Matrix mask = Matrix::Zero(analytic.size(), 1);
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      double v = 0.0;
      if (central([&](QPProblem& q, double e) { (q.*field)[i] += e; }, v)) {
        fd(i, 0) = v;
        mask(i, 0) = 1.0;
      }
    }
    GradcheckBlock block{name, block_error(analytic, fd, mask), static_cast<int>(mask.sum())};
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(block);
  };
  check_vec("q", grads.dq, &QPProblem::q);
  check_vec("b", grads.db, &QPProblem::b);
  check_vec("h", grads.dh, &QPProblem::h);

  report.passed = report.max_rel_error <= threshold;
  return report;
}

SurrogateGradients trust_region_backward(const SurrogateData& d, const StepResult& r,
                                         const Vector& dl_dstep) {
  if (r.degenerate) throw DegenerateKKTError("trust_region_backward: degenerate step");
  const double mu = r.trust_dual;
  if (!(mu > 1e-12) || !std::isfinite(mu)) {
    throw DegenerateKKTError("trust_region_backward: trust-region multiplier vanishes");
  }
  const auto n = d.g.size();
  const Vector& s = r.step;

  // Constraint rows: gradient, multiplier, cleaned constraint value.
  struct Row {
    Vector grad;
    double lambda;
    double value;
  };
  std::vector<Row> rows;
  rows.push_back({d.metric.apply(s), mu, 0.0});
  const bool recovery = r.step_case == StepCase::kRecovery;
  const bool has_cost_row = !recovery && d.a.squaredNorm() > 0.0;
  if (has_cost_row) {
    const double value = d.b_slack + d.a.dot(s);
    const double slack = -value;
    const double nu = r.cost_dual;
    if (nu <= kStrictComplementarityTol && std::abs(slack) <= kStrictComplementarityTol) {
      throw DegenerateKKTError("trust_region_backward: cost constraint is weakly active");
    }
    if (nu > slack) {
      rows.push_back({d.a, nu, 0.0});
    } else {
      rows.push_back({d.a, 0.0, value});
    }
  }

  // Kᵀ [x; y] = [−∂ℓ/∂s; 0] with (1,1) block μH eliminated.
  const Vector rhs = -dl_dstep;
  const Vector minv_r = d.metric.solve(rhs) / mu;
  const int m = static_cast<int>(rows.size());
  std::vector<Vector> minv_jt;
  for (const Row& row : rows) minv_jt.push_back(d.metric.solve(row.grad) / mu);
  Matrix schur(m, m);
  Vector schur_rhs(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      schur(i, j) = rows[i].grad.dot(minv_jt[j]) * rows[j].lambda - (i == j ? rows[i].value : 0.0);
    }
    schur_rhs[i] = rows[i].grad.dot(minv_r);
  }
  Eigen::FullPivLU<Matrix> lu(schur);
  lu.setThreshold(kLuThreshold);
  if (!lu.isInvertible()) {
    throw DegenerateKKTError("trust_region_backward: singular KKT system");
  }
  const Vector y = lu.solve(schur_rhs);
  Vector x = minv_r;
  for (int j = 0; j < m; ++j) x -= minv_jt[j] * (rows[j].lambda * y[j]);

  SurrogateGradients out;
  out.dg = Vector::Zero(n);
  out.da = Vector::Zero(n);
  if (recovery) {
    out.da = x;
  } else {
    out.dg = -x;
    if (has_cost_row) {
      const double nu = rows[1].lambda;
      out.da = nu * (x + y[1] * s);
      out.db = nu * y[1];
    }
  }
  return out;
}

}  // namespace metacpo

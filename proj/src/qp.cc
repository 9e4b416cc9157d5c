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

#include "metacpo/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace metacpo {

namespace {

constexpr double kDivergence = 1e8;
constexpr double kStepFraction = 0.99;

bool all_finite(const Matrix& m) { return m.allFinite(); }

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Largest α ∈ (0, 1] with x + α·dx ≥ 0.
double max_step(const Vector& x, const Vector& dx) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
  }
  return alpha;
}

// Reduced Newton system of the interior-point iteration. Eliminating the slack
// and inequality-dual directions leaves
//   [Q + GᵀWG  Aᵀ] [Δz]   [rhs]
//   [A         0 ] [Δν] = [−rₑ],   W = diag(λ/s),
// solved by Cholesky on the (1,1) block and a Schur complement for Δν.
class NewtonSystem {
 public:
  NewtonSystem(const QPProblem& p, const Vector& s, const Vector& lambda, double regularization)
      : p_(p), s_(s), lambda_(lambda) {
    const int n = p.num_variables();
    const Vector w = lambda.cwiseQuotient(s);
    Matrix k = p.Q;
    if (p.num_inequalities() > 0) k.noalias() += p.G.transpose() * w.asDiagonal() * p.G;
    double reg = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      llt_.compute(reg > 0.0 ? Matrix(k + reg * Matrix::Identity(n, n)) : k);
      if (llt_.info() == Eigen::Success) break;
      reg = reg == 0.0 ? regularization : reg * 10.0;
    }
    if (llt_.info() != Eigen::Success) {
      throw std::runtime_error("solve_qp: Newton system could not be factorized");
    }
    if (p.num_equalities() > 0) {
      k_inv_at_ = llt_.solve(p.A.transpose());
      schur_.compute(p.A * k_inv_at_);
    }
  }

  struct Direction {
    Vector dz, dnu, dlambda, ds;
  };

  Direction solve(const Vector& rd, const Vector& re, const Vector& ri, const Vector& rc) const {
    Direction d;
    const bool has_ineq = p_.num_inequalities() > 0;
    Vector t;  // S⁻¹(Λ rᵢ − r_c)
    Vector rhs = -rd;
    if (has_ineq) {
      t = (lambda_.cwiseProduct(ri) - rc).cwiseQuotient(s_);
      rhs.noalias() -= p_.G.transpose() * t;
    }
    Vector k_inv_rhs = llt_.solve(rhs);
    if (p_.num_equalities() > 0) {
      d.dnu = schur_.solve(p_.A * k_inv_rhs + re);
      d.dz = k_inv_rhs - k_inv_at_ * d.dnu;
    } else {
      d.dnu = Vector(0);
      d.dz = std::move(k_inv_rhs);
    }
    if (has_ineq) {
      const Vector g_dz = p_.G * d.dz;
      d.dlambda = lambda_.cwiseQuotient(s_).cwiseProduct(g_dz) + t;
      d.ds = -ri - g_dz;
    } else {
      d.dlambda = Vector(0);
      d.ds = Vector(0);
    }
    return d;
  }

 private:
  const QPProblem& p_;
  const Vector& s_;
  const Vector& lambda_;
  Eigen::LLT<Matrix> llt_;
  Matrix k_inv_at_;
  Eigen::LDLT<Matrix> schur_;
};

void check_psd(const Matrix& q) {
  const int n = static_cast<int>(q.rows());
  if (n == 0) return;
  Eigen::LLT<Matrix> llt(q + 1e-12 * Matrix::Identity(n, n));
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw std::invalid_argument("solve_qp: Q is not positive semidefinite");
  }
}

// Solves the equality-constrained QP on the active set guessed from the
// interior iterate. Returns nothing if the guess does not yield a valid KKT
// point.
std::optional<QPSolution> polish(const QPProblem& p, const QPSolution& ip, const Vector& slack,
                                 double tol) {
  const int n = p.num_variables();
  const int me = p.num_equalities();
  std::vector<int> active;
  for (int i = 0; i < p.num_inequalities(); ++i) {
    if (ip.lambda[i] > slack[i]) active.push_back(i);
  }
  const int na = static_cast<int>(active.size());
  const int dim = n + me + na;
  Matrix kkt = Matrix::Zero(dim, dim);
  Vector rhs(dim);
  kkt.topLeftCorner(n, n) = p.Q;
  rhs.head(n) = -p.q;
  if (me > 0) {
    kkt.block(n, 0, me, n) = p.A;
    kkt.block(0, n, n, me) = p.A.transpose();
    rhs.segment(n, me) = p.b;
  }
  for (int j = 0; j < na; ++j) {
    kkt.block(n + me + j, 0, 1, n) = p.G.row(active[j]);
    kkt.block(0, n + me + j, n, 1) = p.G.row(active[j]).transpose();
    rhs[n + me + j] = p.h[active[j]];
  }
  Eigen::FullPivLU<Matrix> lu(kkt);
  if (!lu.isInvertible()) return std::nullopt;
  const Vector x = lu.solve(rhs);
  if (!x.allFinite()) return std::nullopt;

  QPSolution out = ip;
  out.z = x.head(n);
  out.nu = x.segment(n, me);
  out.lambda = Vector::Zero(p.num_inequalities());
  for (int j = 0; j < na; ++j) {
    if (x[n + me + j] < -tol) return std::nullopt;
    out.lambda[active[j]] = std::max(0.0, x[n + me + j]);
  }
  const KKTResiduals before = kkt_residuals(p, ip);
  const KKTResiduals after = kkt_residuals(p, out);
  if (after.max() > std::max(before.max(), tol)) return std::nullopt;
  return out;
}

}  // namespace

QPProblem QPProblem::unconstrained(Matrix Q, Vector q) {
  const auto n = q.size();
  return QPProblem{std::move(Q), std::move(q), Matrix(0, n), Vector(0), Matrix(0, n), Vector(0)};
}

std::string to_string(QPStatus s) {
  switch (s) {
    case QPStatus::kOptimal:
      return "optimal";
    case QPStatus::kInfeasible:
      return "infeasible";
    case QPStatus::kMaxIter:
      return "max_iter";
  }
  return "unknown";
}

double KKTResiduals::max() const { return std::max({stationarity, primal, complementarity}); }

void validate(const QPProblem& p) {
  const auto n = p.q.size();
  if (n < 1) throw std::invalid_argument("QPProblem: need at least one variable");
  if (p.Q.rows() != n || p.Q.cols() != n) throw std::invalid_argument("QPProblem: Q must be n×n");
  if (p.A.cols() != n || p.A.rows() != p.b.size()) {
    throw std::invalid_argument("QPProblem: A must be p×n with b of length p");
  }
  if (p.G.cols() != n || p.G.rows() != p.h.size()) {
    throw std::invalid_argument("QPProblem: G must be m×n with h of length m");
  }
  if (!all_finite(p.Q) || !p.q.allFinite() || !all_finite(p.A) || !p.b.allFinite() ||
      !all_finite(p.G) || !p.h.allFinite()) {
    throw std::invalid_argument("QPProblem: non-finite entry");
  }
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("QPProblem: Q is not symmetric");
  }
}

double qp_objective(const QPProblem& p, const Vector& z) { return 0.5 * z.dot(p.Q * z) + p.q.dot(z); }

KKTResiduals kkt_residuals(const QPProblem& p, const QPSolution& sol) {
  KKTResiduals r;
  Vector stat = p.Q * sol.z + p.q;
  if (p.num_equalities() > 0) stat.noalias() += p.A.transpose() * sol.nu;
  if (p.num_inequalities() > 0) stat.noalias() += p.G.transpose() * sol.lambda;
  r.stationarity = inf_norm(stat);
  if (p.num_equalities() > 0) r.primal = inf_norm(p.A * sol.z - p.b);
  if (p.num_inequalities() > 0) {
    const Vector gap = p.G * sol.z - p.h;
    r.primal = std::max(r.primal, inf_norm(gap.cwiseMax(0.0)));
    r.complementarity = inf_norm(sol.lambda.cwiseProduct(gap));
  }
  return r;
}

QPSolution solve_qp(const QPProblem& p, const SolverSettings& settings) {
  validate(p);
  if (settings.tol <= 0.0 || settings.max_iter < 1) {
    throw std::invalid_argument("SolverSettings: need tol > 0 and max_iter ≥ 1");
  }
  check_psd(p.Q);

  const int n = p.num_variables();
  const int me = p.num_equalities();
  const int mi = p.num_inequalities();

  QPSolution sol;
  sol.z = Vector::Zero(n);
  sol.nu = Vector::Zero(me);
  sol.lambda = Vector::Ones(mi);
  Vector s = mi > 0 ? Vector((p.h - p.G * sol.z).cwiseMax(1.0)) : Vector(0);
  // Multipliers scale with the objective data; divergence is judged relative to it.
  const double divergence =
      kDivergence * std::max({1.0, p.Q.cwiseAbs().maxCoeff(), inf_norm(p.q)});

  for (int it = 0; it < settings.max_iter; ++it) {
    sol.iterations = it;
    Vector rd = p.Q * sol.z + p.q;
    if (me > 0) rd.noalias() += p.A.transpose() * sol.nu;
    if (mi > 0) rd.noalias() += p.G.transpose() * sol.lambda;
    const Vector re = me > 0 ? Vector(p.A * sol.z - p.b) : Vector(0);
    const Vector ri = mi > 0 ? Vector(p.G * sol.z + s - p.h) : Vector(0);
    const double mu = mi > 0 ? s.dot(sol.lambda) / mi : 0.0;

    const double res = std::max({inf_norm(rd), inf_norm(re), inf_norm(ri),
                                 mi > 0 ? inf_norm(s.cwiseProduct(sol.lambda)) : 0.0});
    if (res <= settings.tol) {
      sol.status = QPStatus::kOptimal;
      if (settings.polish) {
        if (auto polished = polish(p, sol, s, settings.tol)) sol = std::move(*polished);
      }
      return sol;
    }

    const double dual_size = std::max(inf_norm(sol.lambda), inf_norm(sol.nu));
    if (dual_size > divergence) {
      // Normalized dual ray: y = (λ, ν)/‖(λ, ν)‖₁. For a Farkas certificate
      // Gᵀλ + Aᵀν = 0 every x violates some constraint by ≥ −(hᵀλ + bᵀν).
      const double l1 = sol.lambda.lpNorm<1>() + sol.nu.lpNorm<1>();
      const Vector lam = sol.lambda / l1;
      const Vector nu = sol.nu / l1;
      double bound = 0.0;
      if (mi > 0) bound -= p.h.dot(lam);
      if (me > 0) bound -= p.b.dot(nu);
      sol.infeasibility_bound = std::max(0.0, bound);
      sol.status = bound > 0.0 ? QPStatus::kInfeasible : QPStatus::kMaxIter;
      return sol;
    }
    if (!sol.z.allFinite() || inf_norm(sol.z) > 1e12) break;

    NewtonSystem system(p, s, sol.lambda, settings.regularization);

    // Predictor (affine scaling).
    const Vector rc_aff = mi > 0 ? Vector(s.cwiseProduct(sol.lambda)) : Vector(0);
    auto aff = system.solve(rd, re, ri, rc_aff);
    double sigma = 0.0;
    Vector rc = rc_aff;
    if (mi > 0) {
      const double alpha_aff = std::min(max_step(s, aff.ds), max_step(sol.lambda, aff.dlambda));
      const double mu_aff =
          (s + alpha_aff * aff.ds).dot(sol.lambda + alpha_aff * aff.dlambda) / mi;
      sigma = std::pow(mu_aff / mu, 3);
      // Corrector with centering.
      rc = rc_aff + aff.ds.cwiseProduct(aff.dlambda) - Vector::Constant(mi, sigma * mu);
    }
    auto dir = mi > 0 ? system.solve(rd, re, ri, rc) : std::move(aff);

    double alpha = 1.0;
    if (mi > 0) {
      alpha = std::min(1.0, kStepFraction * std::min(max_step(s, dir.ds),
                                                     max_step(sol.lambda, dir.dlambda)));
    }
    sol.z += alpha * dir.dz;
    if (me > 0) sol.nu += alpha * dir.dnu;
    if (mi > 0) {
      sol.lambda += alpha * dir.dlambda;
      s += alpha * dir.ds;
    }
  }
  sol.iterations = settings.max_iter;
  sol.status = QPStatus::kMaxIter;
  return sol;
}

}  // namespace metacpo

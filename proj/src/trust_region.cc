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

#include <cmath>
#include <limits>
#include <stdexcept>

#include "metacpo/rng.hpp"

namespace metacpo {

namespace {

// Squared norms below this are treated as an exactly-zero direction.
constexpr double kZero = 1e-24;

}  // namespace

Metric Metric::euclidean() { return Metric{}; }

Metric Metric::dense(Matrix h) {
  Metric m;
  m.kind_ = Kind::kDense;
  m.dense_ = std::move(h);
  m.dense_llt_.compute(m.dense_);
  if (m.dense_llt_.info() != Eigen::Success) {
    throw std::invalid_argument("Metric::dense: matrix is not positive definite");
  }
  return m;
}

Metric Metric::fisher(std::function<Vector(const Vector&)> fvp, double damping, int cg_iters) {
  if (damping < 0.0 || cg_iters < 1) throw std::invalid_argument("Metric::fisher: bad settings");
  Metric m;
  m.kind_ = Kind::kFisher;
  m.fvp_ = std::move(fvp);
  m.damping_ = damping;
  m.cg_iters_ = cg_iters;
  return m;
}

Vector Metric::apply(const Vector& v) const {
  switch (kind_) {
    case Kind::kEuclidean:
      return v;
    case Kind::kDense:
      return dense_ * v;
    case Kind::kFisher:
      return fvp_(v) + damping_ * v;
  }
  return v;
}

Vector Metric::solve(const Vector& v) const {
  switch (kind_) {
    case Kind::kEuclidean:
      return v;
    case Kind::kDense:
      return dense_llt_.solve(v);
    case Kind::kFisher:
      return conjugate_gradient([this](const Vector& x) { return apply(x); }, v, cg_iters_);
  }
  return v;
}

Matrix Metric::to_dense(int n) const {
  if (kind_ == Kind::kEuclidean) return Matrix::Identity(n, n);
  if (kind_ == Kind::kDense) return dense_;
  Matrix h(n, n);
  for (int j = 0; j < n; ++j) h.col(j) = apply(Vector::Unit(n, j));
  return 0.5 * (h + h.transpose());
}

Vector conjugate_gradient(const std::function<Vector(const Vector&)>& apply, const Vector& b,
                          int iterations, double residual_tol) {
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int i = 0; i < iterations && rr > residual_tol; ++i) {
    const Vector hp = apply(p);
    const double alpha = rr / p.dot(hp);
    x += alpha * p;
    r -= alpha * hp;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return x;
}

std::string to_string(StepCase c) {
  switch (c) {
    case StepCase::kFeasible:
      return "feasible";
    case StepCase::kRecovery:
      return "recovery";
    case StepCase::kUnconstrained:
      return "unconstrained";
  }
  return "unknown";
}

void validate(const SurrogateData& d, std::uint64_t probe_seed) {
  if (d.g.size() == 0 || d.g.size() != d.a.size()) {
    throw std::invalid_argument("SurrogateData: g and a must be non-empty and of equal size");
  }
  if (!d.g.allFinite() || !d.a.allFinite() || !std::isfinite(d.b_slack)) {
    throw std::invalid_argument("SurrogateData: non-finite entry");
  }
  if (!(d.delta > 0.0)) throw std::invalid_argument("SurrogateData: delta must be positive");
  Rng rng(probe_seed);
  for (int k = 0; k < 10; ++k) {
    Vector v(d.g.size());
    for (auto& x : v) x = rng.normal();
    if (!(d.metric.quad(v) > 0.0)) {
      throw std::invalid_argument("SurrogateData: metric is not positive definite");
    }
  }
}

Feasibility check_feasibility(const SurrogateData& d) {
  if (d.b_slack <= 0.0) return Feasibility::kFeasible;
  const double s = d.a.dot(d.metric.solve(d.a));
  if (s <= kZero) return Feasibility::kInfeasible;
  const double b2 = d.b_slack * d.b_slack;
  return b2 > 2.0 * d.delta * s * (1.0 + 1e-12) ? Feasibility::kInfeasible
                                                 : Feasibility::kFeasible;
}

StepResult solve_trust_region_subproblem(const SurrogateData& d) {
  if (d.g.size() != d.a.size() || !(d.delta > 0.0)) {
    throw std::invalid_argument("solve_trust_region_subproblem: malformed surrogate data");
  }
  const auto n = d.g.size();
  const Vector hg = d.metric.solve(d.g);
  const Vector ha = d.metric.solve(d.a);
  const double q = d.g.dot(hg);
  const double r = d.g.dot(ha);
  const double s = d.a.dot(ha);
  const double c = d.b_slack;
  const double delta = d.delta;

  StepResult out;
  out.step = Vector::Zero(n);
  const bool g_zero = q <= kZero;
  const bool a_zero = s <= kZero;

  const auto recovery = [&] {
    out.step_case = StepCase::kRecovery;
    if (a_zero) {
      out.degenerate = true;
      return out;
    }
    out.trust_dual = std::sqrt(s / (2.0 * delta));
    out.step = -std::sqrt(2.0 * delta / s) * ha;
    return out;
  };

  if (check_feasibility(d) == Feasibility::kInfeasible) return recovery();
  if (g_zero) {
    // Nothing to gain; decrease cost if currently violating, else stay.
    if (c > 0.0) return recovery();
    out.step_case = StepCase::kUnconstrained;
    out.degenerate = true;
    return out;
  }

  // Trust region alone.
  const double mu_u = std::sqrt(q / (2.0 * delta));
  const Vector step_u = hg / mu_u;
  if (a_zero || c + d.a.dot(step_u) <= 0.0) {
    out.step_case = StepCase::kUnconstrained;
    out.trust_dual = mu_u;
    out.step = step_u;
    return out;
  }

  // Both constraints active: for fixed μ the optimal ν is (μc + r)/s, which
  // leaves the one-dimensional dual
  //   min_μ  (q − r²/s)/(2μ) + μ(δ − c²/(2s)) − rc/s.
  out.step_case = StepCase::kFeasible;
  const double num = q - r * r / s;
  const double den = 2.0 * delta - c * c / s;
  if (num <= 1e-14 * q || den <= 1e-14 * 2.0 * delta) {
    // g ∥ a or the half-space only touches the trust region: the optimum is
    // the H-closest point of the hyperplane.
    out.degenerate = true;
    out.step = -(c / s) * ha;
    return out;
  }
  const double mu = std::sqrt(num / den);
  const double nu = std::max(0.0, (mu * c + r) / s);
  out.trust_dual = mu;
  out.cost_dual = nu;
  out.step = (hg - nu * ha) / mu;
  return out;
}

QPProblem trust_region_qp(const SurrogateData& d, const StepResult& r) {
  const int n = static_cast<int>(d.g.size());
  const double mu = r.trust_dual > 0.0 ? r.trust_dual : 1.0;
  Matrix h = d.metric.to_dense(n);
  if (r.step_case == StepCase::kRecovery) {
    return QPProblem::unconstrained(mu * h, r.degenerate ? Vector(Vector::Zero(n)) : d.a);
  }
  QPProblem p = QPProblem::unconstrained(mu * h, r.degenerate ? Vector(Vector::Zero(n)) : -d.g);
  p.G = d.a.transpose();
  p.h = Vector::Constant(1, -d.b_slack);
  return p;
}

QPSolution trust_region_qp_solution(const SurrogateData&, const StepResult& r) {
  QPSolution sol;
  sol.z = r.step;
  sol.nu = Vector(0);
  sol.status = QPStatus::kOptimal;
  if (r.step_case == StepCase::kRecovery) {
    sol.lambda = Vector(0);
  } else {
    sol.lambda = Vector::Constant(1, r.cost_dual);
  }
  return sol;
}

StepResult solve_trust_region_by_qp(const SurrogateData& d, const SolverSettings& settings) {
  const Matrix h = d.metric.to_dense(static_cast<int>(d.g.size()));

  // Trials solve min ½ sᵀHs − (g/μ)ᵀs, the same minimizer as the μ-scaled
  // problem but with data of unit scale; the cost multiplier is μλ.
  bool recovery = false;
  const auto trial = [&](double mu) {
    QPProblem p = QPProblem::unconstrained(h, recovery ? Vector(d.a / mu) : Vector(-d.g / mu));
    if (!recovery) {
      p.G = d.a.transpose();
      p.h = Vector::Constant(1, -d.b_slack);
    }
    QPSolution sol = solve_qp(p, settings);
    if (sol.status != QPStatus::kOptimal) {
      throw std::runtime_error("solve_trust_region_by_qp: trial QP failed (" +
                               to_string(sol.status) + ")");
    }
    return sol;
  };
  const auto radius = [&](const QPSolution& sol) { return 0.5 * sol.z.dot(h * sol.z); };

  // As μ → ∞ the reward-seeking trial converges to the H-projection of 0 onto
  // the half-space; if even that leaves the trust region the problem is
  // infeasible.
  if (d.b_slack > 0.0 && radius(trial(std::numeric_limits<double>::infinity())) > d.delta) {
    recovery = true;
  }

  double lo = 1.0, hi = 1.0;
  while (radius(trial(hi)) > d.delta) hi *= 2.0;
  lo = hi;
  while (radius(trial(lo)) < d.delta && lo > 1e-12) lo *= 0.5;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (radius(trial(mid)) > d.delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const QPSolution sol = trial(hi);
  StepResult out;
  out.step = sol.z;
  out.trust_dual = hi;
  out.step_case = recovery ? StepCase::kRecovery : StepCase::kFeasible;
  if (!recovery) {
    out.cost_dual = hi * sol.lambda[0];
    if (out.cost_dual <= 1e-12) out.step_case = StepCase::kUnconstrained;
  }
  return out;
}

}  // namespace metacpo

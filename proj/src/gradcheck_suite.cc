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

#include "metacpo/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "metacpo/meta_cpo.hpp"
#include "metacpo/qp_diff.hpp"
#include "metacpo/synthetic_task.hpp"

namespace metacpo {

namespace {

Vector normal_vector(Rng& rng, int n) {
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Matrix normal_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix spd(Rng& rng, int n, double floor) {
  const Matrix b = normal_matrix(rng, n, n);
  return b * b.transpose() / n + floor * Matrix::Identity(n, n);
}

// Strictly convex QP with a known KKT point: active rows carry multipliers in
// [0.2, 1], inactive rows slack in [0.2, 1].
QPProblem planted_qp(Rng& rng, int n, int m, int p) {
  QPProblem qp;
  qp.Q = spd(rng, n, 0.1);
  qp.A = normal_matrix(rng, p, n);
  qp.G = normal_matrix(rng, m, n);
  const Vector z = normal_vector(rng, n);
  const Vector nu = normal_vector(rng, p);
  Vector lambda = Vector::Zero(m);
  qp.b = qp.A * z;
  qp.h = qp.G * z;
  int active = 0;
  for (int i = 0; i < m; ++i) {
    if (active < n - p && rng.uniform() < 0.5) {
      ++active;
      lambda[i] = rng.uniform(0.2, 1.0);
    } else {
      qp.h[i] += rng.uniform(0.2, 1.0);
    }
  }
  qp.q = -(qp.Q * z + qp.A.transpose() * nu + qp.G.transpose() * lambda);
  return qp;
}

double rel_error(const Vector& analytic, const Vector& fd) {
  return (analytic - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, fd.lpNorm<Eigen::Infinity>());
}

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double eps) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    out[i] = (f(xp) - f(xm)) / (2.0 * eps);
  }
  return out;
}

GradcheckRow finish(std::string name, double err, double threshold, std::string note = {}) {
  return {std::move(name), err, threshold, std::isfinite(err) && err <= threshold, std::move(note)};
}

void qp_rows(Rng& rng, double threshold, double eps, std::vector<GradcheckRow>& rows) {
  for (int i = 0; i < 20; ++i) {
    const int n = static_cast<int>(rng.uniform_int(2, 10));
    const int p = static_cast<int>(rng.uniform_int(0, std::min(3, n - 1)));
    const int m = static_cast<int>(rng.uniform_int(1, 5));
    const QPProblem qp = planted_qp(rng, n, m, p);
    const Vector dl = normal_vector(rng, n);
    const GradcheckReport rep = gradcheck_qp(qp, dl, eps, threshold);
    const std::string name = fmt::format("qp/{:02d} n={} m={} p={}", i, n, m, p);
    if (!rep.error.empty()) {
      rows.push_back({name, std::nan(""), threshold, false, rep.error});
    } else {
      rows.push_back(finish(name, rep.max_rel_error, threshold,
                            rep.failed_resolves ? fmt::format("{} failed re-solves", rep.failed_resolves)
                                                : std::string{}));
    }
  }
}

double trust_rel_error(const SurrogateData& d, const StepResult& r, const Vector& dl, double eps) {
  const SurrogateGradients an = trust_region_backward(d, r, dl);
  auto loss = [&](const Vector& g, const Vector& a, double b) {
    SurrogateData e = d;
    e.g = g;
    e.a = a;
    e.b_slack = b;
    return dl.dot(solve_trust_region_subproblem(e).step);
  };
  const Vector fd_g = central_difference([&](const Vector& g) { return loss(g, d.a, d.b_slack); }, d.g, eps);
  const Vector fd_a = central_difference([&](const Vector& a) { return loss(d.g, a, d.b_slack); }, d.a, eps);
  const double fd_b = (loss(d.g, d.a, d.b_slack + eps) - loss(d.g, d.a, d.b_slack - eps)) / (2.0 * eps);
  return std::max({rel_error(an.dg, fd_g), rel_error(an.da, fd_a),
                   std::abs(an.db - fd_b) / std::max(1.0, std::abs(fd_b))});
}

void trust_rows(Rng& rng, double threshold, double eps, std::vector<GradcheckRow>& rows) {
  int found[3] = {0, 0, 0};
  for (int trial = 0; trial < 400 && (found[0] < 2 || found[1] < 2 || found[2] < 2); ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    SurrogateData d;
    d.g = normal_vector(rng, n);
    d.a = normal_vector(rng, n);
    d.b_slack = rng.uniform(-0.5, 0.8);
    d.delta = 0.05;
    d.metric = trial % 2 ? Metric::dense(spd(rng, n, 0.5)) : Metric::euclidean();
    const StepResult r = solve_trust_region_subproblem(d);
    if (r.degenerate) continue;
    // Stay clear of case boundaries, where one-sided differences disagree.
    if (r.step_case == StepCase::kUnconstrained && d.b_slack + d.a.dot(r.step) > -1e-3) continue;
    if (r.step_case == StepCase::kFeasible && r.cost_dual < 1e-3) continue;
    if (r.step_case == StepCase::kRecovery &&
        d.b_slack * d.b_slack / d.a.dot(d.metric.solve(d.a)) < 2.0 * d.delta * 1.01) {
      continue;
    }
    int& k = found[static_cast<int>(r.step_case)];
    if (k >= 2) continue;
    ++k;
    const Vector dl = normal_vector(rng, n);
    rows.push_back(finish(fmt::format("trust/{} #{} n={} {}", to_string(r.step_case), k, n,
                                      d.metric.kind() == Metric::Kind::kDense ? "dense" : "euclidean"),
                          trust_rel_error(d, r, dl, eps), threshold));
  }
}

std::vector<SyntheticTask> synthetic_tasks() {
  const Vector u = (Vector(3) << 1.0, 0.5, 0.0).finished();
  return {
      SyntheticTask((Vector(3) << 1.0, 0.2, -0.3).finished(), u, 0.0, 0.6),
      SyntheticTask((Vector(3) << -0.4, 0.9, 0.5).finished(), u, 0.1, 0.6),
      SyntheticTask((Vector(3) << 0.7, -0.8, 0.6).finished(), u, -0.2, 0.6),
  };
}

void meta_rows(double threshold, double eps, std::vector<GradcheckRow>& rows) {
  const auto tasks = synthetic_tasks();
  // Task 0 starts just inside its limit, so the cost row is active; no local
  // step here sits near a line-search acceptance threshold.
  const Vector theta = (Vector(3) << 0.37, 0.40, 0.07).finished();
  for (int K : {0, 1, 2}) {
    AdaptConfig cfg;
    cfg.local_steps = K;
    cfg.delta = 0.05;
    auto adapt_all = [&](const Vector& th) {
      std::vector<AdaptTrace> out;
      for (std::size_t i = 0; i < tasks.size(); ++i) out.push_back(local_adapt(tasks[i], th, cfg, 7, i));
      return out;
    };
    auto objective = [&](const Vector& th, bool cost) {
      const auto traces = adapt_all(th);
      double s = 0.0;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        s += cost ? tasks[i].cost(traces[i].phi_final) : tasks[i].reward(traces[i].phi_final);
      }
      return s / static_cast<double>(tasks.size());
    };
    const MetaGradient mg = meta_gradients(adapt_all(theta), GradientMode::kFull);
    const Vector fd_F = central_difference([&](const Vector& th) { return objective(th, false); }, theta, eps);
    const Vector fd_G = central_difference([&](const Vector& th) { return objective(th, true); }, theta, eps);
    rows.push_back(finish(fmt::format("meta/dF K={}", K), rel_error(mg.dF, fd_F), threshold));
    rows.push_back(finish(fmt::format("meta/dG K={}", K), rel_error(mg.dG, fd_G), threshold));
  }
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck_suite(std::uint64_t seed, double threshold, double eps) {
  std::vector<GradcheckRow> rows;
  Rng rng = Rng::stream(seed, {0});
  qp_rows(rng, threshold, eps, rows);
  Rng trng = Rng::stream(seed, {1});
  trust_rows(trng, threshold, eps, rows);
  meta_rows(threshold, eps, rows);
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::string out = fmt::format("{:<{}}  {:>10}  {:>9}  {}\n", "check", width, "rel_err", "threshold", "result");
  int failed = 0;
  for (const auto& r : rows) {
    failed += !r.passed;
    out += fmt::format("{:<{}}  {:>10.3e}  {:>9.1e}  {}{}\n", r.name, width, r.rel_error, r.threshold,
                       r.passed ? "PASS" : "FAIL", r.note.empty() ? "" : "  (" + r.note + ")");
  }
  out += fmt::format("{} checks, {} failed\n", rows.size(), failed);
  return out;
}

}  // namespace metacpo

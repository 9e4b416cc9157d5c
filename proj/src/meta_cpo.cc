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

#include "metacpo/meta_cpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "metacpo/qp_diff.hpp"

namespace metacpo {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

QPProblem LocalStep::qp() const { return trust_region_qp(data, cpo.solution); }

QPSolution LocalStep::qp_solution() const { return trust_region_qp_solution(data, cpo.solution); }

std::vector<double> AdaptTrace::returns() const {
  std::vector<double> out;
  for (const auto& s : steps) out.push_back(s.model->return_estimate());
  out.push_back(validation->return_estimate());
  return out;
}

std::vector<double> AdaptTrace::costs() const {
  std::vector<double> out;
  for (const auto& s : steps) out.push_back(s.model->cost_estimate());
  out.push_back(validation->cost_estimate());
  return out;
}

namespace {

// Rescales d.delta so that the subproblem step lands at trust ≈ delta under a
// measure whose ratio to ½‖s‖² along s is curvature(s). The calibrated radius
// is a constant for the backward pass.
void calibrate_radius(SurrogateData& d, double delta, const TrustCurvature& curvature) {
  d.delta = delta;
  for (int round = 0; round < 2; ++round) {
    const StepResult probe = solve_trust_region_subproblem(d);
    if (probe.degenerate) return;
    const double c = curvature(probe.step);
    if (!(std::isfinite(c) && c > 0.0)) return;
    d.delta = delta / c;
  }
}

// cpo_step with d.delta calibrated from `delta`: the line search sees trust in
// units of the calibrated radius, and kl_or_dist is reported in the original
// ones.
CpoStep scaled_cpo_step(const SurrogateData& d, double delta, const Measurement& current,
                        const StepEvaluator& evaluate, const CpoConfig& cfg) {
  const double units = d.delta / delta;
  CpoStep out = cpo_step(d, current,
                         [&](const Vector& s) {
                           Measurement m = evaluate(s);
                           m.trust *= units;
                           return m;
                         },
                         cfg);
  out.info.kl_or_dist /= units;
  return out;
}

}  // namespace

AdaptTrace local_adapt(const Task& task, const Vector& theta, const AdaptConfig& cfg,
                       std::uint64_t stream_seed, std::uint64_t task_id) {
  if (cfg.local_steps < 0) throw std::invalid_argument("local_adapt: local_steps must be >= 0");
  if (!(cfg.delta > 0.0)) throw std::invalid_argument("local_adapt: delta must be positive");
  if (theta.size() != task.dim()) throw std::invalid_argument("local_adapt: wrong θ dimension");
  AdaptTrace trace;
  trace.task_id = task_id;
  trace.stream_seed = stream_seed;
  trace.cost_limit = task.cost_limit();
  CpoConfig cc = cfg.cpo;
  cc.cost_limit = task.cost_limit();

  Vector phi = theta;
  for (int k = 0; k < cfg.local_steps; ++k) {
    Rng rng = Rng::stream(stream_seed, {0, static_cast<std::uint64_t>(k)});
    LocalStep st;
    st.phi = phi;
    st.model = task.linearize(phi, rng);
    st.data = st.model->surrogate();
    st.data.metric = Metric::euclidean();
    const LocalModel& model = *st.model;
    calibrate_radius(st.data, cfg.delta, [&model](const Vector& s) { return model.trust_curvature(s); });
    st.cpo = scaled_cpo_step(st.data, cfg.delta, model.current(),
                             [&model](const Vector& s) { return model.measure(s); }, cc);
    if (st.cpo.info.accepted) {
      st.scale = 1.0;
      for (int b = 0; b < st.cpo.info.backtracks; ++b) st.scale *= cc.backtrack_coeff;
      phi += st.cpo.step;
    }
    trace.steps.push_back(std::move(st));
  }
  trace.phi_final = phi;
  Rng rng = Rng::stream(stream_seed, {1});
  trace.validation = task.linearize(phi, rng);
  return trace;
}

AdaptTrace local_adapt(const Task& task, const Vector& theta, const AdaptConfig& cfg, Rng& rng) {
  return local_adapt(task, theta, cfg, rng.next_u64());
}

double replay_trace(const AdaptTrace& trace, const SolverSettings& settings) {
  double worst = 0.0;
  for (const auto& st : trace.steps) {
    if (st.cpo.solution.degenerate) continue;
    const QPSolution sol = solve_qp(st.qp(), settings);
    if (sol.status != QPStatus::kOptimal) {
      throw std::runtime_error("replay_trace: stored QP did not re-solve: " +
                               to_string(sol.status));
    }
    worst = std::max(worst, (sol.z - st.cpo.solution.step).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::string to_string(GradientMode m) {
  return m == GradientMode::kFull ? "full" : "first_order";
}

GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "full") return GradientMode::kFull;
  if (s == "first_order") return GradientMode::kFirstOrder;
  throw std::invalid_argument("unknown gradient mode '" + s + "' (expected full or first_order)");
}

Vector backprop_trace(const AdaptTrace& trace, const Vector& seed) {
  Vector u = seed;
  for (auto it = trace.steps.rbegin(); it != trace.steps.rend(); ++it) {
    const LocalStep& st = *it;
    if (st.scale == 0.0 || st.cpo.solution.degenerate) continue;  // identity map
    const SurrogateGradients sg = trust_region_backward(st.data, st.cpo.solution, st.scale * u);
    u += st.model->reward_jacobian_t(sg.dg) + st.model->cost_jacobian_t(sg.da) +
         sg.db * st.model->slack_gradient();
  }
  return u;
}

MetaGradient meta_gradients(const std::vector<AdaptTrace>& traces, GradientMode mode) {
  if (traces.empty()) throw std::invalid_argument("meta_gradients: no traces");
  std::vector<std::size_t> order(traces.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return traces[a].task_id < traces[b].task_id;
  });

  const Eigen::Index n = traces.front().phi_final.size();
  MetaGradient mg;
  mg.dF = Vector::Zero(n);
  mg.dG = Vector::Zero(n);
  for (std::size_t i : order) {
    const AdaptTrace& tr = traces[i];
    if (!tr.validation) throw std::invalid_argument("meta_gradients: trace without validation");
    const SurrogateData& v = tr.validation->surrogate();
    mg.b_theta += v.b_slack;
    if (mode == GradientMode::kFirstOrder) {
      mg.dF += v.g;
      mg.dG += v.a;
      ++mg.tasks_used;
      continue;
    }
    try {
      const Vector f = backprop_trace(tr, v.g);
      const Vector g = backprop_trace(tr, v.a);
      mg.dF += f;
      mg.dG += g;
      ++mg.tasks_used;
    } catch (const DegenerateKKTError&) {
      ++mg.tasks_excluded;
    }
  }
  mg.b_theta /= static_cast<double>(traces.size());
  if (mg.tasks_used > 0) {
    mg.dF /= mg.tasks_used;
    mg.dG /= mg.tasks_used;
  }
  return mg;
}

CpoStep meta_step(const MetaGradient& mg, const Measurement& current,
                  const StepEvaluator& evaluate, double meta_delta, const CpoConfig& cfg,
                  const TrustCurvature& curvature) {
  if (!mg.dF.allFinite() || !mg.dG.allFinite() || !std::isfinite(mg.b_theta)) {
    throw std::invalid_argument("meta_step: non-finite meta gradient");
  }
  SurrogateData d;
  d.g = mg.dF;
  d.a = mg.dG;
  d.b_slack = mg.b_theta;
  d.metric = Metric::euclidean();
  d.delta = meta_delta;
  if (!curvature) return cpo_step(d, current, evaluate, cfg);
  calibrate_radius(d, meta_delta, curvature);
  return scaled_cpo_step(d, meta_delta, current, evaluate, cfg);
}

namespace {

struct Adapted {
  double ret = 0.0;
  double cost = 0.0;
};

Adapted mean_adapted(const std::vector<AdaptTrace>& traces) {
  Adapted a;
  for (const auto& t : traces) {
    a.ret += t.validation->return_estimate();
    a.cost += t.validation->cost_estimate();
  }
  a.ret /= static_cast<double>(traces.size());
  a.cost /= static_cast<double>(traces.size());
  return a;
}

}  // namespace

MetaIteration meta_iteration(const TaskFamily& family, const Vector& theta, const MetaConfig& cfg,
                             Rng& rng) {
  if (cfg.meta_batch < 1) throw std::invalid_argument("meta_iteration: meta_batch must be >= 1");
  const int M = cfg.meta_batch;
  std::vector<std::unique_ptr<Task>> tasks;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < M; ++i) {
    tasks.push_back(family.sample(rng));
    seeds.push_back(rng.next_u64());
  }
  auto adapt_all = [&](const Vector& th) {
    std::vector<AdaptTrace> traces(static_cast<std::size_t>(M));
    parallel_for(M, cfg.workers, [&](int i) {
      const auto u = static_cast<std::size_t>(i);
      traces[u] = local_adapt(*tasks[u], th, cfg.adapt, seeds[u], u);
    });
    return traces;
  };

  const std::vector<AdaptTrace> traces = adapt_all(theta);
  MetaIteration out;
  for (const auto& t : traces) {
    out.cost_limit += t.cost_limit;
    const auto r = t.returns();
    const auto c = t.costs();
    out.mean_return_zero_shot += r.front();
    out.mean_cost_zero_shot += c.front();
  }
  out.cost_limit /= M;
  out.mean_return_zero_shot /= M;
  out.mean_cost_zero_shot /= M;
  const Adapted now = mean_adapted(traces);
  out.mean_return_adapted = now.ret;
  out.mean_cost_adapted = now.cost;

  out.grad = meta_gradients(traces, cfg.mode);
  CpoConfig mc = cfg.meta_cpo;
  mc.cost_limit = out.cost_limit;
  // A meta step is measured by the mean trust of the tasks' first models, all
  // of which sit at θ. Candidates over the bound skip re-adaptation.
  auto at_theta = [](const AdaptTrace& t) -> const LocalModel& {
    return t.steps.empty() ? *t.validation : *t.steps.front().model;
  };
  auto mean_over_tasks = [&](auto&& f) {
    double v = 0.0;
    for (const auto& t : traces) v += f(at_theta(t));
    return v / M;
  };
  out.step = meta_step(
      out.grad, Measurement{now.ret, now.cost, 0.0},
      [&](const Vector& s) {
        const double trust = mean_over_tasks([&](const LocalModel& m) { return m.measure(s).trust; });
        if (!(trust <= cfg.meta_delta * (1.0 + 1e-8))) return Measurement{0.0, 0.0, trust};
        const Adapted a = mean_adapted(adapt_all(theta + s));
        return Measurement{a.ret, a.cost, trust};
      },
      cfg.meta_delta, mc,
      [&](const Vector& s) {
        return mean_over_tasks([&](const LocalModel& m) { return m.trust_curvature(s); });
      });
  out.theta = theta + out.step.step;
  return out;
}

Vector meta_train(const TaskFamily& family, Vector theta, const MetaConfig& cfg, int iterations,
                  Rng& rng, const IterationCallback& on_iteration, int first_iteration) {
  if (iterations < 0) throw std::invalid_argument("meta_train: iterations must be >= 0");
  for (int it = 0; it < iterations; ++it) {
    MetaIteration r = meta_iteration(family, theta, cfg, rng);
    theta = r.theta;
    if (on_iteration) on_iteration(first_iteration + it, r);
  }
  return theta;
}

double EvalReport::mean_return(int shot) const {
  double s = 0.0;
  for (const auto& t : tasks) s += t.returns.at(static_cast<std::size_t>(shot));
  return tasks.empty() ? 0.0 : s / static_cast<double>(tasks.size());
}

double EvalReport::mean_cost(int shot) const {
  double s = 0.0;
  for (const auto& t : tasks) s += t.costs.at(static_cast<std::size_t>(shot));
  return tasks.empty() ? 0.0 : s / static_cast<double>(tasks.size());
}

EvalReport meta_test(const TaskFamily& family, const Vector& theta, const AdaptConfig& cfg,
                     int n_tasks, Rng& rng, int workers) {
  if (n_tasks < 1) throw std::invalid_argument("meta_test: n_tasks must be >= 1");
  std::vector<std::unique_ptr<Task>> tasks;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_tasks; ++i) {
    tasks.push_back(family.sample(rng));
    seeds.push_back(rng.next_u64());
  }
  EvalReport report;
  report.tasks.resize(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, workers, [&](int i) {
    const auto u = static_cast<std::size_t>(i);
    const AdaptTrace tr = local_adapt(*tasks[u], theta, cfg, seeds[u], u);
    report.tasks[u] = TaskReport{tr.cost_limit, tr.returns(), tr.costs()};
  });
  return report;
}

}  // namespace metacpo

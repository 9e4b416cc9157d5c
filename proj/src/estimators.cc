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

#include "metacpo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace metacpo {

std::string to_string(StateWeighting w) {
  return w == StateWeighting::kDiscounted ? "discounted" : "uniform";
}

StateWeighting state_weighting_from_string(const std::string& s) {
  if (s == "uniform") return StateWeighting::kUniform;
  if (s == "discounted") return StateWeighting::kDiscounted;
  throw std::invalid_argument("unknown state weighting '" + s + "'");
}

PolicyArch arch_for(const TaskSpec& spec, std::vector<int> hidden, double log_std_init) {
  const auto env = make_environment(spec);
  PolicyArch arch;
  arch.obs_dim = env->obs_dim();
  arch.act_dim = env->act_dim();
  arch.num_actions = env->num_actions();
  arch.hidden = std::move(hidden);
  arch.log_std_init = log_std_init;
  return arch;
}

int Batch::num_steps() const {
  int n = 0;
  for (const auto& tr : trajectories) n += static_cast<int>(tr.steps.size());
  return n;
}

namespace {

Trajectory rollout(const Environment& env, const PolicyArch& arch, const ParamVector& params,
                   Rng& rng) {
  Trajectory tr;
  const int horizon = env.spec().horizon;
  tr.steps.reserve(static_cast<std::size_t>(horizon));
  tr.logprobs.reserve(static_cast<std::size_t>(horizon));
  Vector state = env.reset(rng);
  for (int t = 0; t < horizon; ++t) {
    const Vector obs = env.observe(state);
    ActResult a = act(arch, params, obs, rng);
    StepOutcome out = env.step(state, a.action, rng);
    // Keep the sampled action: log-probabilities refer to it, not to the
    // clamped action the environment applied.
    out.transition.action = std::move(a.action);
    tr.logprobs.push_back(a.logprob);
    const bool done = out.transition.done;
    tr.steps.push_back(std::move(out.transition));
    state = std::move(out.next_state);
    if (done) {
      tr.terminated = true;
      break;
    }
  }
  tr.final_obs = env.observe(state);
  return tr;
}

}  // namespace

Batch collect_batch(const TaskSpec& spec, const PolicyArch& arch, const ParamVector& params,
                    int n_episodes, Rng& rng, int workers) {
  validate(spec);
  if (n_episodes < 1) throw std::invalid_argument("collect_batch: n_episodes must be >= 1");
  if (params.size() != arch.num_params()) {
    throw std::invalid_argument("collect_batch: parameter size does not match architecture");
  }
  const auto env = make_environment(spec);
  if (env->obs_dim() != arch.obs_dim || env->act_dim() != arch.act_dim ||
      env->num_actions() != arch.num_actions) {
    throw std::invalid_argument("collect_batch: policy architecture does not match the task");
  }

  Batch batch;
  batch.gamma = spec.gamma;
  batch.cost_gamma = spec.discounted_cost ? spec.gamma : 1.0;
  batch.trajectories.resize(static_cast<std::size_t>(n_episodes));
  const std::uint64_t base = rng.next_u64();

  auto run = [&](int first, int stride) {
    for (int e = first; e < n_episodes; e += stride) {
      Rng ep = Rng::stream(base, {static_cast<std::uint64_t>(e)});
      batch.trajectories[static_cast<std::size_t>(e)] = rollout(*env, arch, params, ep);
    }
  };
  workers = std::clamp(workers, 1, n_episodes);
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
    for (auto& t : pool) t.join();
  }

  for (const auto& tr : batch.trajectories) {
    double dr = 1.0, dc = 1.0;
    for (const auto& s : tr.steps) {
      batch.J_R += dr * s.reward;
      batch.J_C += dc * s.cost;
      dr *= batch.gamma;
      dc *= batch.cost_gamma;
    }
  }
  batch.J_R /= n_episodes;
  batch.J_C /= n_episodes;
  return batch;
}

namespace {

constexpr double kObsClip = 10.0;

Vector features(const Vector& obs, int t, int horizon) {
  const Eigen::Index d = obs.size();
  Vector f(2 * d + 4);
  const Vector o = obs.cwiseMax(-kObsClip).cwiseMin(kObsClip);
  const double u = static_cast<double>(t) / horizon;
  f.head(d) = o;
  f.segment(d, d) = o.cwiseProduct(o);
  f(2 * d) = u;
  f(2 * d + 1) = u * u;
  f(2 * d + 2) = u * u * u;
  f(2 * d + 3) = 1.0;
  return f;
}

Vector ridge_solve(const Matrix& X, const Vector& y, double ridge) {
  Matrix A = X.transpose() * X;
  const double scale = std::max(1.0, A.diagonal().mean());
  A.diagonal().array() += ridge * scale;
  return A.ldlt().solve(X.transpose() * y);
}

}  // namespace

void ValueBaseline::fit(const Batch& batch, int horizon) {
  const int n = batch.num_steps();
  if (n == 0) throw std::invalid_argument("ValueBaseline::fit: empty batch");
  const Eigen::Index d = batch.trajectories.front().steps.front().state.size();
  Matrix X(n, 2 * d + 4);
  Vector yR(n), yC(n);
  int row = 0;
  for (const auto& tr : batch.trajectories) {
    const int L = static_cast<int>(tr.steps.size());
    double gR = 0.0, gC = 0.0;
    for (int t = L - 1; t >= 0; --t) {
      const auto& s = tr.steps[static_cast<std::size_t>(t)];
      gR = s.reward + batch.gamma * gR;
      gC = s.cost + batch.cost_gamma * gC;
      X.row(row + t) = features(s.state, t, horizon).transpose();
      yR(row + t) = gR;
      yC(row + t) = gC;
    }
    row += L;
  }
  w_R_ = ridge_solve(X, yR, ridge_);
  w_C_ = ridge_solve(X, yC, ridge_);
}

double ValueBaseline::value_R(const Vector& obs, int t, int horizon) const {
  return fitted() ? features(obs, t, horizon).dot(w_R_) : 0.0;
}

double ValueBaseline::value_C(const Vector& obs, int t, int horizon) const {
  return fitted() ? features(obs, t, horizon).dot(w_C_) : 0.0;
}

void estimate_advantages(Batch& batch, const ValueBaseline& vb, double lambda, int horizon,
                         bool normalize_reward) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("estimate_advantages: lambda must lie in [0, 1]");
  }
  const int n = batch.num_steps();
  if (n == 0) throw std::invalid_argument("estimate_advantages: empty batch");
  batch.adv_R.resize(n);
  batch.adv_C.resize(n);
  const double gR = batch.gamma, gC = batch.cost_gamma;
  int row = 0;
  for (const auto& tr : batch.trajectories) {
    const int L = static_cast<int>(tr.steps.size());
    double nextR = tr.terminated ? 0.0 : vb.value_R(tr.final_obs, L, horizon);
    double nextC = tr.terminated ? 0.0 : vb.value_C(tr.final_obs, L, horizon);
    double aR = 0.0, aC = 0.0;
    for (int t = L - 1; t >= 0; --t) {
      const auto& s = tr.steps[static_cast<std::size_t>(t)];
      const double vR = vb.value_R(s.state, t, horizon);
      const double vC = vb.value_C(s.state, t, horizon);
      aR = s.reward + gR * nextR - vR + gR * lambda * aR;
      aC = s.cost + gC * nextC - vC + gC * lambda * aC;
      batch.adv_R(row + t) = aR;
      batch.adv_C(row + t) = aC;
      nextR = vR;
      nextC = vC;
    }
    row += L;
  }
  batch.normalization_skipped = false;
  if (normalize_reward) {
    const double mean = batch.adv_R.mean();
    const double var = (batch.adv_R.array() - mean).square().mean();
    if (var > 1e-16) {
      batch.adv_R = (batch.adv_R.array() - mean) / std::sqrt(var);
    } else {
      batch.normalization_skipped = true;
    }
  }
}

Vector step_weights(const Batch& batch, StateWeighting weighting, bool cost) {
  const int n = batch.num_steps();
  Vector w(n);
  if (weighting == StateWeighting::kUniform) {
    w.setConstant(1.0 / n);
    return w;
  }
  const double gamma = cost ? batch.cost_gamma : batch.gamma;
  const double inv_ep = 1.0 / batch.episodes();
  int row = 0;
  for (const auto& tr : batch.trajectories) {
    double disc = inv_ep;
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      w(row++) = disc;
      disc *= gamma;
    }
  }
  return w;
}

StateActions state_actions(const Batch& batch) {
  const int n = batch.num_steps();
  if (n == 0) return {};
  const auto& first = batch.trajectories.front().steps.front();
  StateActions sa{Matrix(n, first.state.size()), Matrix(n, first.action.size())};
  int row = 0;
  for (const auto& tr : batch.trajectories) {
    for (const auto& s : tr.steps) {
      sa.obs.row(row) = s.state.transpose();
      sa.actions.row(row) = s.action.transpose();
      ++row;
    }
  }
  return sa;
}

namespace {

void check_ready(const Batch& batch, const char* who) {
  const int n = batch.num_steps();
  if (n == 0) throw std::invalid_argument(std::string(who) + ": empty batch");
  if (batch.adv_R.size() != n || batch.adv_C.size() != n) {
    throw std::invalid_argument(std::string(who) + ": advantages have not been estimated");
  }
}

}  // namespace

SurrogateData surrogate_grads(const PolicyArch& arch, const ParamVector& params, const Batch& batch,
                              double cost_limit, StateWeighting weighting) {
  check_ready(batch, "surrogate_grads");
  const StateActions sa = state_actions(batch);
  const Vector cR = step_weights(batch, weighting, false).cwiseProduct(batch.adv_R);
  const Vector cC = step_weights(batch, weighting, true).cwiseProduct(batch.adv_C);
  SurrogateData d;
  d.g = weighted_logprob_grad(arch, params, sa, cR);
  d.a = weighted_logprob_grad(arch, params, sa, cC);
  d.b_slack = batch.J_C - cost_limit;
  return d;
}

SurrogateEstimate estimate_at(const PolicyArch& arch, const ParamVector& params_old,
                              const ParamVector& candidate, const Batch& batch,
                              StateWeighting weighting) {
  check_ready(batch, "estimate_at");
  const StateActions sa = state_actions(batch);
  const Vector wR = step_weights(batch, weighting, false);
  const Vector wC = step_weights(batch, StateWeighting::kDiscounted, true);
  SurrogateEstimate est;
  est.cost = batch.J_C;
  int row = 0;
  for (const auto& tr : batch.trajectories) {
    for (std::size_t t = 0; t < tr.steps.size(); ++t, ++row) {
      const double lp = logprob(arch, candidate, sa.obs.row(row).transpose(),
                                sa.actions.row(row).transpose());
      const double rho_m1 = std::expm1(lp - tr.logprobs[t]);
      est.objective += wR(row) * rho_m1 * batch.adv_R(row);
      est.cost += wC(row) * rho_m1 * batch.adv_C(row);
    }
  }
  est.kl = mean_kl(arch, params_old, candidate, sa);
  return est;
}

Matrix tabular_policy(const PolicyArch& arch, const ParamVector& params, const GridHazard& env) {
  if (arch.num_actions != GridHazard::kNumActions || arch.obs_dim != env.num_states()) {
    throw std::invalid_argument("tabular_policy: architecture does not match the grid");
  }
  const int S = env.num_states();
  Matrix pi(S, arch.num_actions);
  for (int s = 0; s < S; ++s) {
    const Vector z = policy_output(arch, params, env.observe(Vector::Constant(1, s)));
    const Vector e = (z.array() - z.maxCoeff()).exp();
    pi.row(s) = (e / e.sum()).transpose();
  }
  return pi;
}

SurrogateData exact_surrogate_grads(const PolicyArch& arch, const ParamVector& params,
                                    const GridHazard& env, double cost_limit) {
  const TabularModel m = tabular_model(env);
  const Matrix pi = tabular_policy(arch, params, env);
  const PolicyEvaluation ev = exact_policy_eval(m, pi, env.spec().gamma);
  const int S = m.num_states, A = m.num_actions;
  StateActions sa{Matrix(S * A, arch.obs_dim), Matrix(S * A, 1)};
  Vector wR(S * A), wC(S * A);
  for (int s = 0; s < S; ++s) {
    const Vector obs = env.observe(Vector::Constant(1, s));
    for (int a = 0; a < A; ++a) {
      const int row = s * A + a;
      sa.obs.row(row) = obs.transpose();
      sa.actions(row, 0) = a;
      const double w = ev.occupancy(s) * pi(s, a);
      wR(row) = w * ev.A_R(s, a);
      wC(row) = w * ev.A_C(s, a);
    }
  }
  SurrogateData d;
  d.g = weighted_logprob_grad(arch, params, sa, wR);
  d.a = weighted_logprob_grad(arch, params, sa, wC);
  d.b_slack = ev.J_C - cost_limit;
  return d;
}

}  // namespace metacpo

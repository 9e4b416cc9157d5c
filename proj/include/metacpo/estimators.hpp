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
#include <vector>

#include "metacpo/envs.hpp"
#include "metacpo/policy.hpp"
#include "metacpo/trust_region.hpp"

namespace metacpo {

/// Policy architecture matching a task's observation and action spaces.
PolicyArch arch_for(const TaskSpec& spec, std::vector<int> hidden = {32, 16},
                    double log_std_init = -0.5);

struct Trajectory {
  std::vector<Transition> steps;
  std::vector<double> logprobs;  // log π_old(a_t|s_t) at collection time
  Vector final_obs;              // observation after the last step
  bool terminated = false;       // ended by `done`, not by the horizon
};

/// Rollouts from one (params, task) pair plus the estimates derived from them.
struct Batch {
  std::vector<Trajectory> trajectories;
  double gamma = 0.99;
  /// Discount applied to costs: γ, or 1 for the undiscounted constraint.
  double cost_gamma = 0.99;
  double J_R = 0.0;  // mean discounted episode return
  double J_C = 0.0;  // mean (discounted) episode cost
  /// Per-step advantages in trajectory-major order; filled by estimate_advantages.
  Vector adv_R;
  Vector adv_C;
  bool normalization_skipped = false;

  int episodes() const { return static_cast<int>(trajectories.size()); }
  int num_steps() const;
};

/// Rolls out `n_episodes` episodes truncated at spec.horizon. Episode e uses
/// its own stream keyed by (draw from rng, e), so the result does not depend
/// on `workers`.
Batch collect_batch(const TaskSpec& spec, const PolicyArch& arch, const ParamVector& params,
                    int n_episodes, Rng& rng, int workers = 1);

/// Linear-feature value functions for reward and cost, fitted by ridge least
/// squares on discounted returns-to-go. Features: clipped obs, obs², t/T,
/// (t/T)², (t/T)³, 1. An unfitted baseline predicts 0.
class ValueBaseline {
 public:
  explicit ValueBaseline(double ridge = 1e-5) : ridge_(ridge) {}

  void fit(const Batch& batch, int horizon);
  bool fitted() const { return w_R_.size() > 0; }
  double value_R(const Vector& obs, int t, int horizon) const;
  double value_C(const Vector& obs, int t, int horizon) const;

 private:
  double ridge_;
  Vector w_R_, w_C_;
};

/// GAE(γ, λ) advantages for reward and cost, bootstrapping with the baseline
/// at truncation. Reward advantages are normalized to zero mean and unit
/// variance (skipped, with batch.normalization_skipped set, when the variance
/// is zero); cost advantages keep their scale.
void estimate_advantages(Batch& batch, const ValueBaseline& vb, double lambda, int horizon,
                         bool normalize_reward = true);

/// How per-step terms are averaged into g and a.
enum class StateWeighting {
  /// mean over all collected steps (empirical state visitation)
  kUniform,
  /// (1/N_ep) Σ_ep Σ_t γᵗ (·): the score-function gradient of Ĵ itself
  kDiscounted,
};

std::string to_string(StateWeighting w);
/// "uniform" or "discounted"; throws std::invalid_argument otherwise.
StateWeighting state_weighting_from_string(const std::string& s);

/// Per-step weights w_t such that g = Σ_t w_t Â_R,t ∇log π(a_t|s_t).
Vector step_weights(const Batch& batch, StateWeighting weighting, bool cost);

StateActions state_actions(const Batch& batch);

/// g, a and b_slack = Ĵ_C − h with a Euclidean metric and δ = 0.01; callers
/// replace the metric/δ as needed. Throws std::invalid_argument on an empty
/// batch or missing advantages.
SurrogateData surrogate_grads(const PolicyArch& arch, const ParamVector& params, const Batch& batch,
                              double cost_limit, StateWeighting weighting = StateWeighting::kUniform);

/// Importance-sampled estimates at a candidate θ' from a batch collected at θ:
///   objective = Σ_t w_t (ρ_t − 1) Â_R,t
///   cost      = Ĵ_C + (1/N_ep) Σ_ep Σ_t γ_cᵗ (ρ_t − 1) Â_C,t
///   kl        = mean KL(π_θ ‖ π_θ') over batch states
/// with ρ_t = π_θ'(a_t|s_t) / π_θ(a_t|s_t).
struct SurrogateEstimate {
  double objective = 0.0;
  double cost = 0.0;
  double kl = 0.0;
};

SurrogateEstimate estimate_at(const PolicyArch& arch, const ParamVector& params_old,
                              const ParamVector& candidate, const Batch& batch,
                              StateWeighting weighting);

/// π(·|s) for every cell of a gridhazard task under a categorical policy.
Matrix tabular_policy(const PolicyArch& arch, const ParamVector& params, const GridHazard& env);

/// Exact policy gradients from tabular evaluation:
///   g = Σ_s d(s) Σ_a π(a|s) A_R(s,a) ∇log π(a|s)
/// with d the discounted occupancy, likewise a with A_C, and b = J_C − h.
SurrogateData exact_surrogate_grads(const PolicyArch& arch, const ParamVector& params,
                                    const GridHazard& env, double cost_limit);

}  // namespace metacpo

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

#include "metacpo/policy_task.hpp"

#include <stdexcept>

namespace metacpo {

namespace {

class PolicyModel : public LocalModel {
 public:
  PolicyModel(const PolicyArch& arch, ParamVector params, Batch batch, double cost_limit,
              StateWeighting weighting, bool kl_trust)
      : arch_(arch),
        params_(std::move(params)),
        batch_(std::move(batch)),
        weighting_(weighting),
        kl_trust_(kl_trust) {
    d_ = surrogate_grads(arch_, params_, batch_, cost_limit, weighting_);
    sa_ = state_actions(batch_);
    cR_ = step_weights(batch_, weighting_, false).cwiseProduct(batch_.adv_R);
    cC_ = step_weights(batch_, weighting_, true).cwiseProduct(batch_.adv_C);
  }

  const SurrogateData& surrogate() const override { return d_; }
  double return_estimate() const override { return batch_.J_R; }
  double cost_estimate() const override { return batch_.J_C; }
  Measurement current() const override { return {0.0, batch_.J_C, 0.0}; }
  Measurement measure(const Vector& step) const override {
    const SurrogateEstimate e =
        estimate_at(arch_, params_, params_.with_values(params_.values + step), batch_, weighting_);
    return {e.objective, e.cost, kl_trust_ ? e.kl : 0.5 * step.squaredNorm()};
  }
  Vector reward_jacobian_t(const Vector& v) const override {
    return surrogate_hvp(arch_, params_, sa_, cR_, v);
  }
  Vector cost_jacobian_t(const Vector& v) const override {
    return surrogate_hvp(arch_, params_, sa_, cC_, v);
  }
  // Frozen-sample estimate of ∂Ĵ_C/∂φ.
  Vector slack_gradient() const override { return d_.a; }
  double trust_curvature(const Vector& step) const override {
    const double half_sq = 0.5 * step.squaredNorm();
    if (!kl_trust_ || half_sq == 0.0) return 1.0;
    return measure(step).trust / half_sq;
  }

 private:
  PolicyArch arch_;
  ParamVector params_;
  Batch batch_;
  StateWeighting weighting_;
  bool kl_trust_;
  SurrogateData d_;
  StateActions sa_;
  Vector cR_, cC_;
};

}  // namespace

PolicyTask::PolicyTask(TaskSpec spec, PolicyArch arch, PolicyTaskConfig cfg)
    : spec_(std::move(spec)), arch_(std::move(arch)), cfg_(cfg) {
  validate(spec_);
  validate(arch_);
  if (cfg_.episodes < 1) throw std::invalid_argument("PolicyTask: episodes must be >= 1");
  layout_ = ParamVector::zeros(arch_);
}

std::unique_ptr<LocalModel> PolicyTask::linearize(const Vector& phi, Rng& rng) const {
  if (phi.size() != layout_.size()) throw std::invalid_argument("PolicyTask: wrong φ dimension");
  ParamVector params = layout_.with_values(phi);
  Batch batch = collect_batch(spec_, arch_, params, cfg_.episodes, rng, cfg_.workers);
  ValueBaseline vb;
  vb.fit(batch, spec_.horizon);
  estimate_advantages(batch, vb, cfg_.lambda, spec_.horizon, cfg_.normalize_advantages);
  return std::make_unique<PolicyModel>(arch_, std::move(params), std::move(batch),
                                       spec_.cost_limit, cfg_.weighting, cfg_.kl_trust);
}

PolicyTaskFamily::PolicyTaskFamily(TaskDistribution dist, PolicyArch arch, PolicyTaskConfig cfg)
    : dist_(std::move(dist)), arch_(std::move(arch)), cfg_(cfg) {
  validate(arch_);
}

std::unique_ptr<Task> PolicyTaskFamily::sample(Rng& rng) const {
  return std::make_unique<PolicyTask>(sample_task(dist_, rng), arch_, cfg_);
}

}  // namespace metacpo

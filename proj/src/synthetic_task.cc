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

#include "metacpo/synthetic_task.hpp"

#include <stdexcept>

namespace metacpo {

namespace {

class SyntheticModel : public LocalModel {
 public:
  SyntheticModel(const SyntheticTask& task, Vector phi) : task_(task), phi_(std::move(phi)) {
    d_.g = task.center() - phi_;
    d_.a = task.cost_dir();
    d_.b_slack = task.cost(phi_) - task.cost_limit();
  }

  const SurrogateData& surrogate() const override { return d_; }
  double return_estimate() const override { return task_.reward(phi_); }
  double cost_estimate() const override { return task_.cost(phi_); }
  Measurement current() const override { return {task_.reward(phi_), task_.cost(phi_), 0.0}; }
  Measurement measure(const Vector& step) const override {
    const Vector p = phi_ + step;
    return {task_.reward(p), task_.cost(p), 0.5 * step.squaredNorm()};
  }
  Vector reward_jacobian_t(const Vector& v) const override { return -v; }
  Vector cost_jacobian_t(const Vector& v) const override { return Vector::Zero(v.size()); }
  Vector slack_gradient() const override { return d_.a; }

 private:
  SyntheticTask task_;  // copied so traces may outlive the task
  Vector phi_;
  SurrogateData d_;
};

}  // namespace

SyntheticTask::SyntheticTask(Vector center, Vector cost_dir, double cost_offset, double cost_limit)
    : c_(std::move(center)), u_(std::move(cost_dir)), e_(cost_offset), h_(cost_limit) {
  if (c_.size() == 0 || c_.size() != u_.size()) {
    throw std::invalid_argument("SyntheticTask: center and cost direction sizes differ");
  }
}

std::unique_ptr<LocalModel> SyntheticTask::linearize(const Vector& phi, Rng& /*rng*/) const {
  if (phi.size() != c_.size()) throw std::invalid_argument("SyntheticTask: wrong φ dimension");
  return std::make_unique<SyntheticModel>(*this, phi);
}

SyntheticFamily::SyntheticFamily(SyntheticFamilyConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.mean_center.size() == 0 || cfg_.mean_center.size() != cfg_.cost_dir.size()) {
    throw std::invalid_argument("SyntheticFamily: center and cost direction sizes differ");
  }
  if (cfg_.spread < 0.0) throw std::invalid_argument("SyntheticFamily: negative spread");
}

std::unique_ptr<Task> SyntheticFamily::sample(Rng& rng) const {
  Vector c = cfg_.mean_center;
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) += cfg_.spread * rng.normal();
  return std::make_unique<SyntheticTask>(c, cfg_.cost_dir, cfg_.cost_offset, cfg_.cost_limit);
}

}  // namespace metacpo

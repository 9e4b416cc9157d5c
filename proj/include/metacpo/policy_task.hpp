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

#include "metacpo/estimators.hpp"
#include "metacpo/meta_cpo.hpp"

namespace metacpo {

struct PolicyTaskConfig {
  int episodes = 10;  // per local batch
  double lambda = 0.95;
  bool normalize_advantages = true;
  StateWeighting weighting = StateWeighting::kDiscounted;
  /// Line-search trust measure: mean KL(π_φ ‖ π_φ+s) over the batch states
  /// instead of ½‖s‖². The step itself still comes from the Euclidean
  /// subproblem; the KL check only shortens it.
  bool kl_trust = false;
  /// Threads per batch collection.
  int workers = 1;
};

/// An environment task seen through its sampled policy-gradient estimates.
/// θ is the flat parameter vector of `arch`.
class PolicyTask : public Task {
 public:
  PolicyTask(TaskSpec spec, PolicyArch arch, PolicyTaskConfig cfg);

  int dim() const override { return arch_.num_params(); }
  double cost_limit() const override { return spec_.cost_limit; }
  std::unique_ptr<LocalModel> linearize(const Vector& phi, Rng& rng) const override;
  const TaskSpec& spec() const { return spec_; }

 private:
  TaskSpec spec_;
  PolicyArch arch_;
  ParamVector layout_;
  PolicyTaskConfig cfg_;
};

class PolicyTaskFamily : public TaskFamily {
 public:
  PolicyTaskFamily(TaskDistribution dist, PolicyArch arch, PolicyTaskConfig cfg);
  int dim() const override { return arch_.num_params(); }
  std::unique_ptr<Task> sample(Rng& rng) const override;
  const PolicyArch& arch() const { return arch_; }

 private:
  TaskDistribution dist_;
  PolicyArch arch_;
  PolicyTaskConfig cfg_;
};

}  // namespace metacpo

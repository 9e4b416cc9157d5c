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

#include "metacpo/meta_cpo.hpp"

namespace metacpo {

/// Deterministic quadratic task: J_R(φ) = −½‖φ − c‖², J_C(φ) = uᵀφ + e,
/// so g = c − φ, a = u and b = uᵀφ + e − h. No sampling noise.
class SyntheticTask : public Task {
 public:
  SyntheticTask(Vector center, Vector cost_dir, double cost_offset, double cost_limit);

  int dim() const override { return static_cast<int>(c_.size()); }
  double cost_limit() const override { return h_; }
  std::unique_ptr<LocalModel> linearize(const Vector& phi, Rng& rng) const override;

  double reward(const Vector& phi) const { return -0.5 * (phi - c_).squaredNorm(); }
  double cost(const Vector& phi) const { return u_.dot(phi) + e_; }
  const Vector& center() const { return c_; }
  const Vector& cost_dir() const { return u_; }

 private:
  Vector c_, u_;
  double e_, h_;
};

/// Centers c_i = c̄ + spread·N(0, I); shared cost direction u, offset e and
/// limit h.
struct SyntheticFamilyConfig {
  Vector mean_center;
  double spread = 0.5;
  Vector cost_dir;
  double cost_offset = 0.0;
  double cost_limit = 1.0;
};

class SyntheticFamily : public TaskFamily {
 public:
  explicit SyntheticFamily(SyntheticFamilyConfig cfg);
  int dim() const override { return static_cast<int>(cfg_.mean_center.size()); }
  std::unique_ptr<Task> sample(Rng& rng) const override;
  const SyntheticFamilyConfig& config() const { return cfg_; }

 private:
  SyntheticFamilyConfig cfg_;
};

}  // namespace metacpo

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

#include "metacpo/rng.hpp"
#include "metacpo/types.hpp"

namespace metacpo {

/// tanh MLP policy. Continuous heads are diagonal Gaussians with a global
/// (state-independent) log-std; categorical heads emit logits and store the
/// sampled index as a length-1 action vector.
struct PolicyArch {
  int obs_dim = 0;
  int act_dim = 0;  // Gaussian action dimension, or 1 for categorical
  std::vector<int> hidden{32, 16};
  double log_std_init = -0.5;
  /// Number of discrete actions; 0 selects the Gaussian head.
  int num_actions = 0;

  bool categorical() const { return num_actions > 0; }
  int output_dim() const { return categorical() ? num_actions : act_dim; }
  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int l) const { return l == 0 ? obs_dim : hidden[static_cast<std::size_t>(l - 1)]; }
  int layer_out(int l) const {
    return l + 1 == num_layers() ? output_dim() : hidden[static_cast<std::size_t>(l)];
  }
  int num_params() const;
};

bool operator==(const PolicyArch& a, const PolicyArch& b);

/// Throws std::invalid_argument on non-positive widths or dimensions.
void validate(const PolicyArch& arch);

struct ParamSlice {
  std::string name;
  int offset = 0;
  int rows = 0;
  int cols = 1;
  int size() const { return rows * cols; }
};

/// Flat parameters with named slices: per layer the weight matrix
/// (out×in, row-major) then the bias, and finally the log-std.
struct ParamVector {
  Vector values;
  std::vector<ParamSlice> layout;

  static ParamVector zeros(const PolicyArch& arch);
  int size() const { return static_cast<int>(values.size()); }
  const ParamSlice& slice(const std::string& name) const;
  Matrix get(const ParamSlice& s) const;
  void set(const ParamSlice& s, const Matrix& m);
  /// Same layout, different values.
  ParamVector with_values(Vector v) const;
};

/// Orthogonal hidden layers (gain 1), final layer scaled by 0.01, zero
/// biases and log_std = arch.log_std_init.
ParamVector init_params(const PolicyArch& arch, Rng& rng);

/// A set of (observation, action) pairs, one per row.
struct StateActions {
  Matrix obs;
  Matrix actions;
  int size() const { return static_cast<int>(obs.rows()); }
};

struct ActResult {
  Vector action;
  double logprob = 0.0;
};

/// Samples an action (or returns the mode when `deterministic`).
/// Throws std::invalid_argument on non-finite or wrongly sized observations.
ActResult act(const PolicyArch& arch, const ParamVector& params, const Vector& obs, Rng& rng,
              bool deterministic = false);

/// Network output: Gaussian mean or categorical logits.
Vector policy_output(const PolicyArch& arch, const ParamVector& params, const Vector& obs);

double logprob(const PolicyArch& arch, const ParamVector& params, const Vector& obs,
               const Vector& action);

/// ∇_θ log π_θ(a|s) by reverse-mode differentiation through the network.
Vector logprob_grad(const PolicyArch& arch, const ParamVector& params, const Vector& obs,
                    const Vector& action);

/// Σ_t w_t ∇_θ log π_θ(a_t|s_t).
Vector weighted_logprob_grad(const PolicyArch& arch, const ParamVector& params,
                             const StateActions& batch, const Vector& weights);

/// (∂/∂θ)[Σ_t w_t ∇_θ log π_θ(a_t|s_t)] · v, forward-over-reverse.
Vector surrogate_hvp(const PolicyArch& arch, const ParamVector& params, const StateActions& batch,
                     const Vector& weights, const Vector& v);

struct KLResult {
  double kl = 0.0;
  Vector fvp;
};

/// Mean over the batch states of KL(π_old(·|s) ‖ π(·|s)) and the product of
/// its Hessian (with respect to `params`) with v. At params = params_old the
/// Hessian is the Fisher information matrix.
KLResult mean_kl_and_fvp(const PolicyArch& arch, const ParamVector& params_old,
                         const ParamVector& params, const StateActions& batch, const Vector& v);

double mean_kl(const PolicyArch& arch, const ParamVector& params_old, const ParamVector& params,
               const StateActions& batch);

}  // namespace metacpo

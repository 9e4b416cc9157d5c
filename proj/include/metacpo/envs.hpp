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

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "metacpo/rng.hpp"
#include "metacpo/types.hpp"

namespace metacpo {

enum class EnvKind { kGridHazard, kPointCircle };

std::string to_string(EnvKind k);
/// Throws std::invalid_argument for unknown names.
EnvKind env_kind_from_string(const std::string& name);

/// One concrete task. pointcircle uses the circle/wall/hazard fields,
/// gridhazard uses grid_size, slip and n_hazards.
struct TaskSpec {
  EnvKind kind = EnvKind::kPointCircle;
  double circle_radius = 1.0;  // r_c
  double wall_scale = 0.7;     // s; walls at |x| = s·r_c
  int n_hazards = 0;
  double spawn_range = 1.5;    // hazards are placed within this radius
  double cost_limit = 10.0;    // h
  int horizon = 100;
  double gamma = 0.99;
  std::uint64_t seed = 0;      // hazard layout
  int grid_size = 5;
  double slip = 0.0;
  /// Constraint on discounted (default) or undiscounted episode cost.
  bool discounted_cost = true;
};

/// Throws std::invalid_argument on horizon < 1, γ ∉ (0,1) or bad geometry.
void validate(const TaskSpec& spec);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Uniform task distribution. Scalar fields are copied into every task.
struct TaskDistribution {
  EnvKind kind = EnvKind::kPointCircle;
  Interval circle_radius{1.0, 1.5};
  Interval wall_scale{0.65, 0.75};
  Interval n_hazards{0, 0};  // integer range, inclusive
  Interval spawn_range{1.5, 1.5};
  Interval slip{0.0, 0.0};
  int grid_size = 5;
  double cost_limit = 10.0;
  int horizon = 100;
  double gamma = 0.99;
  bool discounted_cost = true;
};

/// Each parameter independently uniform on its interval; the layout seed is
/// drawn from `rng` as well. Throws std::invalid_argument if any lo > hi.
TaskSpec sample_task(const TaskDistribution& dist, Rng& rng);

struct Transition {
  Vector state;  // observation before the action
  Vector action;
  double reward = 0.0;
  double cost = 0.0;  // 0 or 1
  bool done = false;
};

struct StepOutcome {
  Transition transition;
  Vector next_state;  // internal state
  /// The action was outside the box (or not a valid index) and was clamped.
  bool clamped = false;
};

/// An immutable task instance. Internal states are plain vectors so that
/// rollouts own them; all randomness comes from the caller's Rng.
class Environment {
 public:
  virtual ~Environment() = default;

  const TaskSpec& spec() const { return spec_; }
  virtual int obs_dim() const = 0;
  /// Continuous action dimension, or 1 for a categorical action index.
  virtual int act_dim() const = 0;
  /// Number of discrete actions; 0 for continuous control.
  virtual int num_actions() const { return 0; }

  virtual Vector reset(Rng& rng) const = 0;
  virtual Vector observe(const Vector& state) const = 0;
  virtual StepOutcome step(const Vector& state, const Vector& action, Rng& rng) const = 0;

 protected:
  explicit Environment(TaskSpec spec) : spec_(std::move(spec)) {}
  TaskSpec spec_;
};

std::unique_ptr<Environment> make_environment(const TaskSpec& spec);

/// Point mass with double-integrator dynamics rewarded for circling the
/// origin at radius r_c, with cost for leaving the walls or touching hazards.
class PointCircle : public Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kAccel = 2.0;
  static constexpr double kMaxSpeed = 1.0;
  static constexpr double kHazardRadius = 0.2;
  static constexpr int kObservedHazards = 3;

  explicit PointCircle(TaskSpec spec);

  int obs_dim() const override { return 6 + 2 * kObservedHazards; }
  int act_dim() const override { return 2; }

  /// State (x, y, v_x, v_y).
  Vector reset(Rng& rng) const override;
  Vector observe(const Vector& state) const override;
  StepOutcome step(const Vector& state, const Vector& action, Rng& rng) const override;

  const std::vector<Eigen::Vector2d>& hazards() const { return hazards_; }
  double reward_at(const Vector& state) const;
  double cost_at(const Vector& state) const;

 private:
  std::vector<Eigen::Vector2d> hazards_;
};

/// N×N gridworld. Actions: 0 stay, 1 right (+x), 2 left, 3 up (+y), 4 down.
/// With probability `slip` a uniformly random action replaces the chosen one.
/// Starts at (0,0); the goal (N−1,N−1) is absorbing and pays 1 per step;
/// hazard cells cost 1 per step spent on them.
class GridHazard : public Environment {
 public:
  static constexpr int kNumActions = 5;

  explicit GridHazard(TaskSpec spec);

  int obs_dim() const override { return n_ * n_; }
  int act_dim() const override { return 1; }
  int num_actions() const override { return kNumActions; }

  /// State is the cell index x + N·y stored in a length-1 vector.
  Vector reset(Rng& rng) const override;
  /// One-hot encoding of the cell.
  Vector observe(const Vector& state) const override;
  StepOutcome step(const Vector& state, const Vector& action, Rng& rng) const override;

  int num_states() const { return n_ * n_; }
  int cell(int x, int y) const { return x + n_ * y; }
  int goal() const { return cell(n_ - 1, n_ - 1); }
  bool is_hazard(int s) const { return hazard_[static_cast<std::size_t>(s)]; }
  /// Deterministic successor of `s` under action `a`.
  int move(int s, int a) const;

 private:
  int n_;
  std::vector<bool> hazard_;
};

/// Finite CMDP (S, A, P, R, C, µ). P is stored as |S|·|A| rows of length |S|
/// with row index s·|A| + a.
struct TabularModel {
  int num_states = 0;
  int num_actions = 0;
  Matrix P;
  Matrix R;  // |S|×|A|
  Matrix C;  // |S|×|A|
  Vector mu;
};

/// Throws std::invalid_argument if rows of P or µ do not sum to 1 within
/// 1e-12, entries are negative or C has entries outside {0,1}.
void validate(const TabularModel& m);

TabularModel tabular_model(const GridHazard& env);

struct PolicyEvaluation {
  double J_R = 0.0;
  double J_C = 0.0;
  Vector V_R, V_C;
  Matrix Q_R, Q_C;
  Matrix A_R, A_C;
  /// Discounted state occupancy Σ_t γᵗ Pr(s_t = s).
  Vector occupancy;
};

/// Direct linear solve of V = R_π + γ P_π V. `policy` is |S|×|A| with rows
/// summing to 1. Throws std::invalid_argument for γ ∉ (0,1) or a malformed
/// policy table.
PolicyEvaluation exact_policy_eval(const TabularModel& m, const Matrix& policy, double gamma);

}  // namespace metacpo

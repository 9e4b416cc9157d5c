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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "metacpo/cpo.hpp"
#include "metacpo/qp.hpp"
#include "metacpo/rng.hpp"

namespace metacpo {

/// Linearization of one task at a parameter point φ, built from samples that
/// stay frozen for both the forward step and the backward pass.
class LocalModel {
 public:
  virtual ~LocalModel() = default;

  /// g, a and b = Ĵ_C − h at φ. The metric and δ are set by the caller.
  virtual const SurrogateData& surrogate() const = 0;
  /// Estimated return and cost at φ (for reporting and meta line searches).
  virtual double return_estimate() const = 0;
  virtual double cost_estimate() const = 0;
  /// Baseline for `measure`: measure(0) must equal current().
  virtual Measurement current() const = 0;
  /// Line-search quantities at φ + step.
  virtual Measurement measure(const Vector& step) const = 0;
  /// (∂g/∂φ)ᵀ v and (∂a/∂φ)ᵀ v with the samples held fixed.
  virtual Vector reward_jacobian_t(const Vector& v) const = 0;
  virtual Vector cost_jacobian_t(const Vector& v) const = 0;
  /// ∂b/∂φ.
  virtual Vector slack_gradient() const = 0;
  /// measure(step).trust / ½‖step‖²; 1 when the trust measure is Euclidean.
  virtual double trust_curvature(const Vector& step) const {
    (void)step;
    return 1.0;
  }
};

class Task {
 public:
  virtual ~Task() = default;
  virtual int dim() const = 0;
  virtual double cost_limit() const = 0;
  /// Builds the local model at φ; all sampling draws from `rng`.
  virtual std::unique_ptr<LocalModel> linearize(const Vector& phi, Rng& rng) const = 0;
};

class TaskFamily {
 public:
  virtual ~TaskFamily() = default;
  virtual int dim() const = 0;
  virtual std::unique_ptr<Task> sample(Rng& rng) const = 0;
};

struct AdaptConfig {
  int local_steps = 5;  // K
  double delta = 0.01;  // local trust radius, ½‖s‖² ≤ δ
  /// Line-search settings; the cost limit is taken from each task.
  CpoConfig cpo;
};

struct LocalStep {
  Vector phi;  // φᵏ
  std::shared_ptr<const LocalModel> model;
  /// Subproblem data actually solved (Euclidean metric, δ from AdaptConfig).
  SurrogateData data;
  CpoStep cpo;
  /// Line-search multiplier of the accepted step, 0 when every candidate was
  /// rejected. φᵏ⁺¹ = φᵏ + scale · cpo.solution.step.
  double scale = 0.0;

  /// The QP form of the step and its primal-dual solution, for replay.
  QPProblem qp() const;
  QPSolution qp_solution() const;
};

struct AdaptTrace {
  std::uint64_t task_id = 0;
  std::uint64_t stream_seed = 0;
  double cost_limit = 0.0;
  std::vector<LocalStep> steps;
  Vector phi_final;
  /// Fresh batch collected under φᴷ.
  std::shared_ptr<const LocalModel> validation;

  /// Return/cost estimates at φ⁰ … φᴷ; the last entry comes from the
  /// validation model.
  std::vector<double> returns() const;
  std::vector<double> costs() const;
};

/// K local CPO updates from θ. Step k draws from Rng::stream(seed, {0, k}),
/// the validation batch from Rng::stream(seed, {1}).
AdaptTrace local_adapt(const Task& task, const Vector& theta, const AdaptConfig& cfg,
                       std::uint64_t stream_seed, std::uint64_t task_id = 0);

AdaptTrace local_adapt(const Task& task, const Vector& theta, const AdaptConfig& cfg, Rng& rng);

/// Largest |z − z_stored| after re-solving every stored step QP with solve_qp.
double replay_trace(const AdaptTrace& trace, const SolverSettings& settings = {});

enum class GradientMode { kFull, kFirstOrder };

std::string to_string(GradientMode m);
/// "full" or "first_order"; throws std::invalid_argument otherwise.
GradientMode gradient_mode_from_string(const std::string& s);

struct MetaGradient {
  Vector dF;
  Vector dG;
  double b_theta = 0.0;  // mean over tasks of Ĵ_C(φᴷ) − h
  int tasks_used = 0;
  int tasks_excluded = 0;  // degenerate backward passes
};

/// dF = (1/M) Σ_i (dφᴷ/dθ)ᵀ g_val,i and dG likewise with a_val,i. The full
/// mode chains transposed trust-region KKT solves through every local step;
/// first_order drops the chain. Traces are reduced in task_id order.
MetaGradient meta_gradients(const std::vector<AdaptTrace>& traces, GradientMode mode);

/// Backpropagates `seed` (a gradient at φᴷ) to θ through one trace. Throws
/// DegenerateKKTError when a step's backward pass is degenerate.
Vector backprop_trace(const AdaptTrace& trace, const Vector& seed);

struct MetaConfig {
  AdaptConfig adapt;
  int meta_batch = 5;  // M
  double meta_delta = 0.01;
  /// Outer line search; cost_limit is replaced by the mean task limit.
  CpoConfig meta_cpo;
  GradientMode mode = GradientMode::kFull;
  int workers = 1;
};

/// measure(s).trust / ½‖s‖² along a candidate step.
using TrustCurvature = std::function<double(const Vector&)>;

/// cpo_step on (dF, dG, b_θ) with a Euclidean trust region of radius δ_θ.
/// With `curvature`, the radius is rescaled so the step lands at trust ≈ δ_θ
/// under the evaluator's trust measure.
CpoStep meta_step(const MetaGradient& mg, const Measurement& current,
                  const StepEvaluator& evaluate, double meta_delta, const CpoConfig& cfg,
                  const TrustCurvature& curvature = {});

struct MetaIteration {
  Vector theta;  // after the step
  MetaGradient grad;
  CpoStep step;
  double cost_limit = 0.0;  // mean over the sampled tasks
  double mean_return_adapted = 0.0;
  double mean_cost_adapted = 0.0;
  double mean_return_zero_shot = 0.0;
  double mean_cost_zero_shot = 0.0;
};

/// Samples M tasks, adapts each from θ (concurrently with cfg.workers
/// threads), computes the meta gradient and takes one meta step whose line
/// search re-adapts the same tasks with the same random streams.
MetaIteration meta_iteration(const TaskFamily& family, const Vector& theta, const MetaConfig& cfg,
                             Rng& rng);

using IterationCallback = std::function<void(int iteration, const MetaIteration&)>;

/// `iterations` meta iterations starting from θ; returns the final θ.
Vector meta_train(const TaskFamily& family, Vector theta, const MetaConfig& cfg, int iterations,
                  Rng& rng, const IterationCallback& on_iteration = {},
                  int first_iteration = 0);

struct TaskReport {
  double cost_limit = 0.0;
  std::vector<double> returns;  // shots + 1 entries, index 0 is zero-shot
  std::vector<double> costs;
};

struct EvalReport {
  std::vector<TaskReport> tasks;
  double mean_return(int shot) const;
  double mean_cost(int shot) const;
};

/// Adapts θ with `shots` local steps on `n_tasks` tasks from `family`.
EvalReport meta_test(const TaskFamily& family, const Vector& theta, const AdaptConfig& cfg,
                     int n_tasks, Rng& rng, int workers = 1);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace metacpo

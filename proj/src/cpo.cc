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

#include "metacpo/cpo.hpp"

#include <cmath>
#include <stdexcept>

namespace metacpo {

namespace {

bool finite(const Measurement& m) {
  return std::isfinite(m.objective) && std::isfinite(m.cost) && std::isfinite(m.trust);
}

}  // namespace

CpoStep cpo_step(const SurrogateData& d, const Measurement& current, const StepEvaluator& evaluate,
                 const CpoConfig& cfg) {
  if (!(cfg.backtrack_coeff > 0.0 && cfg.backtrack_coeff < 1.0)) {
    throw std::invalid_argument("cpo_step: backtrack_coeff must lie in (0, 1)");
  }
  if (cfg.max_backtracks < 0 || cfg.cost_tolerance < 0.0) {
    throw std::invalid_argument("cpo_step: negative max_backtracks or cost_tolerance");
  }
  CpoStep out;
  out.solution = solve_trust_region_subproblem(d);
  const StepResult& sol = out.solution;
  out.info.step_case = sol.step_case;
  out.info.degenerate = sol.degenerate;
  out.info.predicted_improve = d.g.dot(sol.step);
  out.info.measured_objective = current.objective;
  out.info.measured_cost = current.cost;
  out.step = Vector::Zero(sol.step.size());
  if (sol.degenerate) return out;

  const double cost_cap = cfg.cost_limit + cfg.cost_tolerance * std::abs(cfg.cost_limit);
  const double trust_cap = d.delta * (1.0 + 1e-8);
  // From an infeasible point (or in recovery) any candidate that does not
  // raise the cost is acceptable; otherwise require improvement and the cap.
  const bool restoring = sol.step_case == StepCase::kRecovery || current.cost > cfg.cost_limit;
  double scale = 1.0;
  for (int k = 0; k <= cfg.max_backtracks; ++k, scale *= cfg.backtrack_coeff) {
    const Vector s = scale * sol.step;
    const Measurement m = evaluate(s);
    if (!finite(m) || m.trust > trust_cap) continue;
    const bool cost_ok = m.cost <= cost_cap;
    const bool ok = restoring ? (cost_ok || m.cost <= current.cost)
                              : (cost_ok && m.objective >= current.objective);
    if (!ok) continue;
    out.step = s;
    out.info.accepted = true;
    out.info.backtracks = k;
    out.info.measured_objective = m.objective;
    out.info.measured_cost = m.cost;
    out.info.kl_or_dist = m.trust;
    return out;
  }
  out.info.backtracks = cfg.max_backtracks;
  return out;
}

}  // namespace metacpo

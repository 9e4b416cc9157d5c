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

#include "metacpo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

namespace metacpo {

namespace {

// Stream key for layout draws, distinct from anything the rollouts use.
constexpr std::uint64_t kLayoutKey = 0x1a7047;

void check_interval(const Interval& iv, const char* name) {
  if (!(iv.lo <= iv.hi)) {
    throw std::invalid_argument(std::string("task distribution: empty interval for ") + name);
  }
}

}  // namespace

std::string to_string(EnvKind k) {
  return k == EnvKind::kGridHazard ? "gridhazard" : "pointcircle";
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "gridhazard") return EnvKind::kGridHazard;
  if (name == "pointcircle") return EnvKind::kPointCircle;
  throw std::invalid_argument("unknown environment kind '" + name + "'");
}

void validate(const TaskSpec& spec) {
  if (spec.horizon < 1) throw std::invalid_argument("TaskSpec: horizon must be ≥ 1");
  if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) {
    throw std::invalid_argument("TaskSpec: gamma must lie in (0, 1)");
  }
  if (spec.n_hazards < 0) throw std::invalid_argument("TaskSpec: negative hazard count");
  if (spec.kind == EnvKind::kPointCircle) {
    if (!(spec.circle_radius > 0.0) || !(spec.wall_scale > 0.0) || !(spec.spawn_range >= 0.0)) {
      throw std::invalid_argument("TaskSpec: circle radius and wall scale must be positive");
    }
  } else {
    if (spec.grid_size < 2) throw std::invalid_argument("TaskSpec: grid_size must be ≥ 2");
    if (!(spec.slip >= 0.0 && spec.slip <= 1.0)) {
      throw std::invalid_argument("TaskSpec: slip must lie in [0, 1]");
    }
    if (spec.n_hazards > spec.grid_size * spec.grid_size - 2) {
      throw std::invalid_argument("TaskSpec: more hazards than free cells");
    }
  }
}

TaskSpec sample_task(const TaskDistribution& dist, Rng& rng) {
  check_interval(dist.circle_radius, "circle_radius");
  check_interval(dist.wall_scale, "wall_scale");
  check_interval(dist.n_hazards, "n_hazards");
  check_interval(dist.spawn_range, "spawn_range");
  check_interval(dist.slip, "slip");
  TaskSpec spec;
  spec.kind = dist.kind;
  spec.circle_radius = rng.uniform(dist.circle_radius.lo, dist.circle_radius.hi);
  spec.wall_scale = rng.uniform(dist.wall_scale.lo, dist.wall_scale.hi);
  const auto nh_lo = static_cast<std::int64_t>(std::ceil(dist.n_hazards.lo));
  const auto nh_hi = static_cast<std::int64_t>(std::floor(dist.n_hazards.hi));
  if (nh_lo > nh_hi) throw std::invalid_argument("task distribution: no integer in n_hazards");
  spec.n_hazards = static_cast<int>(rng.uniform_int(nh_lo, nh_hi));
  spec.spawn_range = rng.uniform(dist.spawn_range.lo, dist.spawn_range.hi);
  spec.slip = rng.uniform(dist.slip.lo, dist.slip.hi);
  spec.seed = rng.next_u64();
  spec.grid_size = dist.grid_size;
  spec.cost_limit = dist.cost_limit;
  spec.horizon = dist.horizon;
  spec.gamma = dist.gamma;
  spec.discounted_cost = dist.discounted_cost;
  validate(spec);
  return spec;
}

std::unique_ptr<Environment> make_environment(const TaskSpec& spec) {
  if (spec.kind == EnvKind::kGridHazard) return std::make_unique<GridHazard>(spec);
  return std::make_unique<PointCircle>(spec);
}

// ---------------------------------------------------------------------------
// PointCircle

PointCircle::PointCircle(TaskSpec spec) : Environment(std::move(spec)) {
  validate(spec_);
  Rng rng = Rng::stream(spec_.seed, {kLayoutKey});
  // Uniform in the disk of radius spawn_range, away from the start region.
  constexpr double kClearance = 0.3;
  if (spec_.n_hazards > 0 && spec_.spawn_range <= kClearance) {
    throw std::invalid_argument("PointCircle: spawn_range leaves no room for hazards");
  }
  while (static_cast<int>(hazards_.size()) < spec_.n_hazards) {
    const Eigen::Vector2d p(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (p.norm() > 1.0) continue;
    const Eigen::Vector2d h = spec_.spawn_range * p;
    if (h.norm() < kClearance) continue;
    hazards_.push_back(h);
  }
}

Vector PointCircle::reset(Rng& rng) const {
  Vector s = Vector::Zero(4);
  s[0] = rng.uniform(-0.1, 0.1);
  s[1] = rng.uniform(-0.1, 0.1);
  return s;
}

double PointCircle::reward_at(const Vector& s) const {
  const double radius = std::hypot(s[0], s[1]);
  return (s[0] * s[3] - s[1] * s[2]) / (1.0 + std::abs(radius - spec_.circle_radius));
}

double PointCircle::cost_at(const Vector& s) const {
  if (std::abs(s[0]) > spec_.wall_scale * spec_.circle_radius) return 1.0;
  const Eigen::Vector2d p(s[0], s[1]);
  for (const auto& h : hazards_) {
    if ((p - h).norm() <= kHazardRadius) return 1.0;
  }
  return 0.0;
}

Vector PointCircle::observe(const Vector& s) const {
  Vector o = Vector::Zero(obs_dim());
  o.head(4) = s.head(4);
  o[4] = spec_.circle_radius;
  o[5] = spec_.wall_scale * spec_.circle_radius;
  const Eigen::Vector2d p(s[0], s[1]);
  std::vector<Eigen::Vector2d> offsets;
  offsets.reserve(hazards_.size());
  for (const auto& h : hazards_) offsets.push_back(h - p);
  const auto k = std::min<std::size_t>(offsets.size(), kObservedHazards);
  std::partial_sort(offsets.begin(), offsets.begin() + static_cast<std::ptrdiff_t>(k), offsets.end(),
                    [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                      const double na = a.squaredNorm(), nb = b.squaredNorm();
                      if (na != nb) return na < nb;
                      return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
                    });
  for (std::size_t i = 0; i < k; ++i) {
    o[6 + 2 * static_cast<Eigen::Index>(i)] = offsets[i].x();
    o[7 + 2 * static_cast<Eigen::Index>(i)] = offsets[i].y();
  }
  return o;
}

StepOutcome PointCircle::step(const Vector& s, const Vector& action, Rng&) const {
  if (s.size() != 4 || action.size() != 2) {
    throw std::invalid_argument("PointCircle::step: bad state or action size");
  }
  StepOutcome out;
  Eigen::Vector2d a(action[0], action[1]);
  if (!a.allFinite()) throw std::invalid_argument("PointCircle::step: non-finite action");
  const Eigen::Vector2d clipped = a.cwiseMax(-1.0).cwiseMin(1.0);
  out.clamped = clipped != a;

  Eigen::Vector2d v(s[2], s[3]);
  v += kDt * kAccel * clipped;
  const double speed = v.norm();
  if (speed > kMaxSpeed) v *= kMaxSpeed / speed;
  Vector next(4);
  next << s[0] + kDt * v.x(), s[1] + kDt * v.y(), v.x(), v.y();

  out.transition.state = observe(s);
  out.transition.action = Vector(clipped);
  out.transition.reward = reward_at(next);
  out.transition.cost = cost_at(next);
  out.next_state = std::move(next);
  return out;
}

// ---------------------------------------------------------------------------
// GridHazard

GridHazard::GridHazard(TaskSpec spec) : Environment(std::move(spec)), n_(spec_.grid_size) {
  validate(spec_);
  hazard_.assign(static_cast<std::size_t>(n_ * n_), false);
  Rng rng = Rng::stream(spec_.seed, {kLayoutKey});
  int placed = 0;
  while (placed < spec_.n_hazards) {
    const int c = static_cast<int>(rng.uniform_int(0, n_ * n_ - 1));
    if (c == 0 || c == goal() || hazard_[static_cast<std::size_t>(c)]) continue;
    hazard_[static_cast<std::size_t>(c)] = true;
    ++placed;
  }
}

int GridHazard::move(int s, int a) const {
  if (s == goal()) return s;
  int x = s % n_, y = s / n_;
  switch (a) {
    case 1:
      x = std::min(x + 1, n_ - 1);
      break;
    case 2:
      x = std::max(x - 1, 0);
      break;
    case 3:
      y = std::min(y + 1, n_ - 1);
      break;
    case 4:
      y = std::max(y - 1, 0);
      break;
    default:
      break;
  }
  return cell(x, y);
}

Vector GridHazard::reset(Rng&) const { return Vector::Zero(1); }

Vector GridHazard::observe(const Vector& state) const {
  Vector o = Vector::Zero(n_ * n_);
  o[static_cast<Eigen::Index>(state[0])] = 1.0;
  return o;
}

StepOutcome GridHazard::step(const Vector& state, const Vector& action, Rng& rng) const {
  if (state.size() != 1 || action.size() != 1) {
    throw std::invalid_argument("GridHazard::step: bad state or action size");
  }
  if (!std::isfinite(action[0])) throw std::invalid_argument("GridHazard::step: non-finite action");
  StepOutcome out;
  const int s = static_cast<int>(state[0]);
  int a = static_cast<int>(std::lround(action[0]));
  if (a < 0 || a >= kNumActions || static_cast<double>(a) != action[0]) {
    a = std::clamp(a, 0, kNumActions - 1);
    out.clamped = true;
  }
  // The slip draw happens on every step so the stream does not depend on
  // the action taken.
  const double u = rng.uniform();
  const auto random_action = static_cast<int>(rng.uniform_int(0, kNumActions - 1));
  const int executed = u < spec_.slip ? random_action : a;

  out.transition.state = observe(state);
  out.transition.action = Vector::Constant(1, static_cast<double>(a));
  out.transition.reward = s == goal() ? 1.0 : 0.0;
  out.transition.cost = is_hazard(s) ? 1.0 : 0.0;
  out.next_state = Vector::Constant(1, static_cast<double>(move(s, executed)));
  return out;
}

TabularModel tabular_model(const GridHazard& env) {
  const int ns = env.num_states();
  const int na = GridHazard::kNumActions;
  const double slip = env.spec().slip;
  TabularModel m;
  m.num_states = ns;
  m.num_actions = na;
  m.P = Matrix::Zero(ns * na, ns);
  m.R = Matrix::Zero(ns, na);
  m.C = Matrix::Zero(ns, na);
  m.mu = Vector::Zero(ns);
  m.mu[0] = 1.0;
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const int row = s * na + a;
      m.P(row, env.move(s, a)) += 1.0 - slip;
      for (int b = 0; b < na; ++b) m.P(row, env.move(s, b)) += slip / na;
      m.R(s, a) = s == env.goal() ? 1.0 : 0.0;
      m.C(s, a) = env.is_hazard(s) ? 1.0 : 0.0;
    }
  }
  return m;
}

void validate(const TabularModel& m) {
  const int ns = m.num_states, na = m.num_actions;
  if (ns < 1 || na < 1 || m.P.rows() != ns * na || m.P.cols() != ns || m.R.rows() != ns ||
      m.R.cols() != na || m.C.rows() != ns || m.C.cols() != na || m.mu.size() != ns) {
    throw std::invalid_argument("TabularModel: inconsistent dimensions");
  }
  if (m.P.minCoeff() < 0.0 || m.mu.minCoeff() < 0.0) {
    throw std::invalid_argument("TabularModel: negative probability");
  }
  if ((m.P.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("TabularModel: transition rows must sum to 1");
  }
  if (std::abs(m.mu.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("TabularModel: initial distribution must sum to 1");
  }
  if (((m.C.array() != 0.0) && (m.C.array() != 1.0)).any()) {
    throw std::invalid_argument("TabularModel: costs must be 0 or 1");
  }
}

PolicyEvaluation exact_policy_eval(const TabularModel& m, const Matrix& policy, double gamma) {
  validate(m);
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("exact_policy_eval: gamma must lie in (0, 1)");
  }
  const int ns = m.num_states, na = m.num_actions;
  if (policy.rows() != ns || policy.cols() != na || policy.minCoeff() < 0.0 ||
      (policy.rowwise().sum().array() - 1.0).abs().maxCoeff() > 1e-10) {
    throw std::invalid_argument("exact_policy_eval: policy rows must be distributions over A");
  }
  Matrix p_pi = Matrix::Zero(ns, ns);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) p_pi.row(s) += policy(s, a) * m.P.row(s * na + a);
  }
  const Vector r_pi = policy.cwiseProduct(m.R).rowwise().sum();
  const Vector c_pi = policy.cwiseProduct(m.C).rowwise().sum();
  const Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(ns, ns) - gamma * p_pi);

  PolicyEvaluation ev;
  ev.V_R = lu.solve(r_pi);
  ev.V_C = lu.solve(c_pi);
  const Vector pv_r = m.P * ev.V_R;
  const Vector pv_c = m.P * ev.V_C;
  ev.Q_R.resize(ns, na);
  ev.Q_C.resize(ns, na);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      ev.Q_R(s, a) = m.R(s, a) + gamma * pv_r[s * na + a];
      ev.Q_C(s, a) = m.C(s, a) + gamma * pv_c[s * na + a];
    }
  }
  ev.A_R = ev.Q_R.colwise() - ev.V_R;
  ev.A_C = ev.Q_C.colwise() - ev.V_C;
  ev.J_R = m.mu.dot(ev.V_R);
  ev.J_C = m.mu.dot(ev.V_C);
  ev.occupancy = lu.transpose().solve(m.mu);
  return ev;
}

}  // namespace metacpo

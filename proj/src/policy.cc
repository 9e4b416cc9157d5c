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

#include "metacpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/QR>

#include "metacpo/dual.hpp"

namespace metacpo {

namespace {

// Plain overloads for double; Dual overloads are found by argument lookup.
using std::exp;
using std::log;
using std::tanh;

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

struct Offsets {
  std::vector<int> weight;
  std::vector<int> bias;
  int log_std = 0;
  int total = 0;
};

Offsets offsets_of(const PolicyArch& arch) {
  Offsets o;
  int at = 0;
  for (int l = 0; l < arch.num_layers(); ++l) {
    o.weight.push_back(at);
    at += arch.layer_out(l) * arch.layer_in(l);
    o.bias.push_back(at);
    at += arch.layer_out(l);
  }
  o.log_std = at;
  if (!arch.categorical()) at += arch.act_dim;
  o.total = at;
  return o;
}

// Layer activations of one forward pass; acts[0] is the input and
// acts.back() the (linear) network output.
template <class T>
using Acts = std::vector<std::vector<T>>;

template <class T>
void forward(const PolicyArch& arch, const Offsets& off, const T* p, const double* obs,
             Acts<T>& acts) {
  const int layers = arch.num_layers();
  acts.resize(static_cast<std::size_t>(layers + 1));
  acts[0].assign(obs, obs + arch.obs_dim);
  for (int l = 0; l < layers; ++l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    const auto& h = acts[static_cast<std::size_t>(l)];
    auto& z = acts[static_cast<std::size_t>(l + 1)];
    z.assign(static_cast<std::size_t>(out), T(0.0));
    const T* w = p + off.weight[static_cast<std::size_t>(l)];
    const T* b = p + off.bias[static_cast<std::size_t>(l)];
    const bool hidden = l + 1 < layers;
    for (int i = 0; i < out; ++i) {
      T sum = b[i];
      for (int j = 0; j < in; ++j) sum += w[i * in + j] * h[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = hidden ? tanh(sum) : sum;
    }
  }
}

// Accumulates the parameter gradient for output cotangent `dout` into grad.
template <class T>
void backward(const PolicyArch& arch, const Offsets& off, const T* p, const Acts<T>& acts,
              std::vector<T> delta, T* grad) {
  for (int l = arch.num_layers() - 1; l >= 0; --l) {
    const int in = arch.layer_in(l), out = arch.layer_out(l);
    const auto& h = acts[static_cast<std::size_t>(l)];
    const T* w = p + off.weight[static_cast<std::size_t>(l)];
    T* gw = grad + off.weight[static_cast<std::size_t>(l)];
    T* gb = grad + off.bias[static_cast<std::size_t>(l)];
    for (int i = 0; i < out; ++i) {
      const T& di = delta[static_cast<std::size_t>(i)];
      gb[i] += di;
      for (int j = 0; j < in; ++j) gw[i * in + j] += di * h[static_cast<std::size_t>(j)];
    }
    if (l == 0) break;
    std::vector<T> prev(static_cast<std::size_t>(in), T(0.0));
    for (int j = 0; j < in; ++j) {
      T sum(0.0);
      for (int i = 0; i < out; ++i) sum += w[i * in + j] * delta[static_cast<std::size_t>(i)];
      const T& hj = h[static_cast<std::size_t>(j)];
      prev[static_cast<std::size_t>(j)] = sum * (T(1.0) - hj * hj);
    }
    delta = std::move(prev);
  }
}

// log π(a|s) and, if grad != nullptr, weight·∇ log π added to grad.
template <class T>
T logprob_core(const PolicyArch& arch, const Offsets& off, const T* p, const double* obs,
               const double* action, const T& weight, T* grad) {
  Acts<T> acts;
  forward(arch, off, p, obs, acts);
  const auto& out = acts.back();
  std::vector<T> dout(out.size(), T(0.0));
  T lp(0.0);
  if (arch.categorical()) {
    const int a = static_cast<int>(action[0]);
    double m = value_of(out[0]);
    for (const T& o : out) m = std::max(m, value_of(o));
    T sum(0.0);
    for (const T& o : out) sum += exp(o - T(m));
    const T lse = T(m) + log(sum);
    lp = out[static_cast<std::size_t>(a)] - lse;
    if (grad) {
      for (std::size_t k = 0; k < out.size(); ++k) {
        const T prob = exp(out[k] - lse);
        dout[k] = weight * ((static_cast<int>(k) == a ? T(1.0) : T(0.0)) - prob);
      }
    }
  } else {
    for (int i = 0; i < arch.act_dim; ++i) {
      const T& ls = p[off.log_std + i];
      const T sigma = exp(ls);
      const T z = (T(action[i]) - out[static_cast<std::size_t>(i)]) / sigma;
      lp += T(-0.5) * z * z - ls - T(kHalfLog2Pi);
      if (grad) {
        dout[static_cast<std::size_t>(i)] = weight * z / sigma;
        grad[off.log_std + i] += weight * (z * z - T(1.0));
      }
    }
  }
  if (grad) backward(arch, off, p, acts, std::move(dout), grad);
  return lp;
}

// KL(π_old ‖ π) at one state and, if grad != nullptr, weight·∇_θ KL.
template <class T>
T kl_core(const PolicyArch& arch, const Offsets& off, const double* p_old, const T* p,
          const double* obs, const T& weight, T* grad) {
  Acts<double> old_acts;
  forward(arch, off, p_old, obs, old_acts);
  Acts<T> acts;
  forward(arch, off, p, obs, acts);
  const auto& o_old = old_acts.back();
  const auto& o_new = acts.back();
  std::vector<T> dout(o_new.size(), T(0.0));
  T kl(0.0);
  if (arch.categorical()) {
    double m_old = *std::max_element(o_old.begin(), o_old.end());
    double s_old = 0.0;
    for (double o : o_old) s_old += std::exp(o - m_old);
    const double lse_old = m_old + std::log(s_old);
    double m = value_of(o_new[0]);
    for (const T& o : o_new) m = std::max(m, value_of(o));
    T sum(0.0);
    for (const T& o : o_new) sum += exp(o - T(m));
    const T lse = T(m) + log(sum);
    for (std::size_t k = 0; k < o_new.size(); ++k) {
      const double lp_old = o_old[k] - lse_old;
      const double prob_old = std::exp(lp_old);
      const T lp_new = o_new[k] - lse;
      kl += T(prob_old) * (T(lp_old) - lp_new);
      if (grad) dout[k] = weight * (exp(lp_new) - T(prob_old));
    }
  } else {
    for (int i = 0; i < arch.act_dim; ++i) {
      const double ls_old = p_old[off.log_std + i];
      const double var_old = std::exp(2.0 * ls_old);
      const T& ls = p[off.log_std + i];
      const T var = exp(T(2.0) * ls);
      const T diff = o_new[static_cast<std::size_t>(i)] - T(o_old[static_cast<std::size_t>(i)]);
      const T num = T(var_old) + diff * diff;
      kl += ls - T(ls_old) + num / (T(2.0) * var) - T(0.5);
      if (grad) {
        dout[static_cast<std::size_t>(i)] = weight * diff / var;
        grad[off.log_std + i] += weight * (T(1.0) - num / var);
      }
    }
  }
  if (grad) backward(arch, off, p, acts, std::move(dout), grad);
  return kl;
}

void check_obs(const PolicyArch& arch, const Vector& obs) {
  if (obs.size() != arch.obs_dim) throw std::invalid_argument("policy: observation size mismatch");
  if (!obs.allFinite()) throw std::invalid_argument("policy: non-finite observation");
}

void check_params(const PolicyArch& arch, const ParamVector& params) {
  if (params.size() != arch.num_params()) {
    throw std::invalid_argument("policy: parameter vector does not match the architecture");
  }
}

void check_batch(const PolicyArch& arch, const StateActions& batch) {
  if (batch.obs.cols() != arch.obs_dim || batch.actions.cols() != arch.act_dim ||
      batch.obs.rows() != batch.actions.rows()) {
    throw std::invalid_argument("policy: batch dimensions do not match the architecture");
  }
}

// Row-major copies so that per-sample pointers are contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<Dual> seeded(const Vector& values, const Vector& v) {
  std::vector<Dual> out(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) out[static_cast<std::size_t>(i)] = {values[i], v[i]};
  return out;
}

Matrix orthogonal(int rows, int cols, Rng& rng) {
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Matrix a(big, small);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  const Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return rows >= cols ? q : Matrix(q.transpose());
}

}  // namespace

int PolicyArch::num_params() const { return offsets_of(*this).total; }

bool operator==(const PolicyArch& a, const PolicyArch& b) {
  return a.obs_dim == b.obs_dim && a.act_dim == b.act_dim && a.hidden == b.hidden &&
         a.log_std_init == b.log_std_init && a.num_actions == b.num_actions;
}

void validate(const PolicyArch& arch) {
  if (arch.obs_dim < 1 || arch.act_dim < 1) {
    throw std::invalid_argument("PolicyArch: dimensions must be ≥ 1");
  }
  for (int w : arch.hidden) {
    if (w < 1) throw std::invalid_argument("PolicyArch: hidden widths must be ≥ 1");
  }
  if (arch.num_actions < 0 || (arch.categorical() && arch.act_dim != 1)) {
    throw std::invalid_argument("PolicyArch: categorical heads use act_dim = 1");
  }
  if (!std::isfinite(arch.log_std_init)) throw std::invalid_argument("PolicyArch: bad log_std_init");
}

ParamVector ParamVector::zeros(const PolicyArch& arch) {
  validate(arch);
  const Offsets off = offsets_of(arch);
  ParamVector p;
  p.values = Vector::Zero(off.total);
  for (int l = 0; l < arch.num_layers(); ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const std::string prefix = "layer" + std::to_string(l);
    p.layout.push_back({prefix + ".weight", off.weight[sl], arch.layer_out(l), arch.layer_in(l)});
    p.layout.push_back({prefix + ".bias", off.bias[sl], arch.layer_out(l), 1});
  }
  if (!arch.categorical()) p.layout.push_back({"log_std", off.log_std, arch.act_dim, 1});
  return p;
}

const ParamSlice& ParamVector::slice(const std::string& name) const {
  for (const auto& s : layout) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("ParamVector: no slice named '" + name + "'");
}

Matrix ParamVector::get(const ParamSlice& s) const {
  Matrix m(s.rows, s.cols);
  for (int i = 0; i < s.rows; ++i) {
    for (int j = 0; j < s.cols; ++j) m(i, j) = values[s.offset + i * s.cols + j];
  }
  return m;
}

void ParamVector::set(const ParamSlice& s, const Matrix& m) {
  if (m.rows() != s.rows || m.cols() != s.cols) {
    throw std::invalid_argument("ParamVector::set: shape mismatch for " + s.name);
  }
  for (int i = 0; i < s.rows; ++i) {
    for (int j = 0; j < s.cols; ++j) values[s.offset + i * s.cols + j] = m(i, j);
  }
}

ParamVector ParamVector::with_values(Vector v) const {
  if (v.size() != values.size()) throw std::invalid_argument("ParamVector: size mismatch");
  ParamVector p;
  p.values = std::move(v);
  p.layout = layout;
  return p;
}

ParamVector init_params(const PolicyArch& arch, Rng& rng) {
  ParamVector p = ParamVector::zeros(arch);
  for (int l = 0; l < arch.num_layers(); ++l) {
    Matrix w = orthogonal(arch.layer_out(l), arch.layer_in(l), rng);
    if (l + 1 == arch.num_layers()) w *= 0.01;
    p.set(p.slice("layer" + std::to_string(l) + ".weight"), w);
  }
  if (!arch.categorical()) {
    p.set(p.slice("log_std"), Vector::Constant(arch.act_dim, arch.log_std_init));
  }
  return p;
}

Vector policy_output(const PolicyArch& arch, const ParamVector& params, const Vector& obs) {
  check_obs(arch, obs);
  check_params(arch, params);
  Acts<double> acts;
  forward(arch, offsets_of(arch), params.values.data(), obs.data(), acts);
  return Eigen::Map<const Vector>(acts.back().data(), static_cast<Eigen::Index>(acts.back().size()));
}

ActResult act(const PolicyArch& arch, const ParamVector& params, const Vector& obs, Rng& rng,
              bool deterministic) {
  const Vector out = policy_output(arch, params, obs);
  ActResult r;
  if (arch.categorical()) {
    Eigen::Index a = 0;
    if (deterministic) {
      out.maxCoeff(&a);
    } else {
      const Vector prob = (out.array() - out.maxCoeff()).exp();
      double u = rng.uniform() * prob.sum();
      while (a + 1 < prob.size() && u >= prob[a]) u -= prob[a++];
    }
    r.action = Vector::Constant(1, static_cast<double>(a));
  } else {
    const Offsets off = offsets_of(arch);
    r.action = out;
    if (!deterministic) {
      for (int i = 0; i < arch.act_dim; ++i) {
        r.action[i] += std::exp(params.values[off.log_std + i]) * rng.normal();
      }
    }
  }
  r.logprob = logprob(arch, params, obs, r.action);
  return r;
}

double logprob(const PolicyArch& arch, const ParamVector& params, const Vector& obs,
               const Vector& action) {
  check_obs(arch, obs);
  check_params(arch, params);
  if (action.size() != arch.act_dim) throw std::invalid_argument("policy: action size mismatch");
  return logprob_core<double>(arch, offsets_of(arch), params.values.data(), obs.data(),
                              action.data(), 1.0, nullptr);
}

Vector logprob_grad(const PolicyArch& arch, const ParamVector& params, const Vector& obs,
                    const Vector& action) {
  check_obs(arch, obs);
  check_params(arch, params);
  if (action.size() != arch.act_dim) throw std::invalid_argument("policy: action size mismatch");
  Vector grad = Vector::Zero(params.size());
  logprob_core<double>(arch, offsets_of(arch), params.values.data(), obs.data(), action.data(), 1.0,
                       grad.data());
  return grad;
}

Vector weighted_logprob_grad(const PolicyArch& arch, const ParamVector& params,
                             const StateActions& batch, const Vector& weights) {
  check_params(arch, params);
  check_batch(arch, batch);
  if (weights.size() != batch.size()) throw std::invalid_argument("policy: weight count mismatch");
  const Offsets off = offsets_of(arch);
  const RowMatrix obs = batch.obs, act = batch.actions;
  Vector grad = Vector::Zero(params.size());
  for (int t = 0; t < batch.size(); ++t) {
    if (weights[t] == 0.0) continue;
    logprob_core<double>(arch, off, params.values.data(), obs.row(t).data(), act.row(t).data(),
                         weights[t], grad.data());
  }
  return grad;
}

Vector surrogate_hvp(const PolicyArch& arch, const ParamVector& params, const StateActions& batch,
                     const Vector& weights, const Vector& v) {
  check_params(arch, params);
  check_batch(arch, batch);
  if (weights.size() != batch.size() || v.size() != params.size()) {
    throw std::invalid_argument("surrogate_hvp: size mismatch");
  }
  const Offsets off = offsets_of(arch);
  const RowMatrix obs = batch.obs, act = batch.actions;
  const std::vector<Dual> p = seeded(params.values, v);
  std::vector<Dual> grad(p.size());
  for (int t = 0; t < batch.size(); ++t) {
    if (weights[t] == 0.0) continue;
    logprob_core<Dual>(arch, off, p.data(), obs.row(t).data(), act.row(t).data(), Dual(weights[t]),
                       grad.data());
  }
  Vector out(params.size());
  for (int i = 0; i < params.size(); ++i) out[i] = grad[static_cast<std::size_t>(i)].d;
  return out;
}

KLResult mean_kl_and_fvp(const PolicyArch& arch, const ParamVector& params_old,
                         const ParamVector& params, const StateActions& batch, const Vector& v) {
  check_params(arch, params_old);
  check_params(arch, params);
  if (batch.obs.cols() != arch.obs_dim || batch.size() < 1 || v.size() != params.size()) {
    throw std::invalid_argument("mean_kl_and_fvp: size mismatch or empty batch");
  }
  const Offsets off = offsets_of(arch);
  const RowMatrix obs = batch.obs;
  const std::vector<Dual> p = seeded(params.values, v);
  std::vector<Dual> grad(p.size());
  const Dual w(1.0 / batch.size());
  double kl = 0.0;
  for (int t = 0; t < batch.size(); ++t) {
    kl += kl_core<Dual>(arch, off, params_old.values.data(), p.data(), obs.row(t).data(), w,
                        grad.data())
              .v;
  }
  KLResult r;
  r.kl = kl / batch.size();
  r.fvp.resize(params.size());
  for (int i = 0; i < params.size(); ++i) r.fvp[i] = grad[static_cast<std::size_t>(i)].d;
  return r;
}

double mean_kl(const PolicyArch& arch, const ParamVector& params_old, const ParamVector& params,
               const StateActions& batch) {
  check_params(arch, params_old);
  check_params(arch, params);
  if (batch.obs.cols() != arch.obs_dim || batch.size() < 1) {
    throw std::invalid_argument("mean_kl: size mismatch or empty batch");
  }
  const Offsets off = offsets_of(arch);
  const RowMatrix obs = batch.obs;
  double kl = 0.0;
  for (int t = 0; t < batch.size(); ++t) {
    kl += kl_core<double>(arch, off, params_old.values.data(), params.values.data(),
                          obs.row(t).data(), 1.0, nullptr);
  }
  return kl / batch.size();
}

}  // namespace metacpo

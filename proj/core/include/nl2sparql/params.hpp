#ifndef NL2SPARQL_PARAMS_HPP
#define NL2SPARQL_PARAMS_HPP

#include "nl2sparql/rng.hpp"
#include "nl2sparql/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace nl2sparql::ad {

class SerializationError : public AdError {
public:
  using AdError::AdError;
};

/// A trainable array that persists across tapes. Gradients accumulate here
/// when a tape that used the parameter runs backward.
template <typename Real>
struct Param {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  std::vector<Real> m;  // Adam first-moment state, allocated on first step
  std::vector<Real> v;  // Adam second-moment state
  bool trainable = true;

  Param() = default;
  explicit Param(Shape s) : shape(std::move(s)) {
    value.assign(numel(shape), Real(0));
    grad.assign(value.size(), Real(0));
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.assign(value.size(), Real(0)); }
};

/// Name-keyed parameter collection; iteration order is the sorted name order,
/// which also fixes the on-disk layout.
template <typename Real>
class ParamSet {
public:
  Param<Real>& add(const std::string& name, Shape shape) {
    auto [it, fresh] = items_.emplace(name, Param<Real>(std::move(shape)));
    if (!fresh) throw AdError("parameter '" + name + "' already exists");
    return it->second;
  }

  Param<Real>& get(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw AdError("no parameter named '" + name + "'");
    return it->second;
  }
  const Param<Real>& get(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw AdError("no parameter named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return items_.count(name) != 0; }

  void zero_grad() {
    for (auto& [name, p] : items_) p.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : items_) n += p.size();
    return n;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::size_t count() const { return items_.size(); }

private:
  std::map<std::string, Param<Real>> items_;
};

/// Places a parameter onto the tape as a differentiable leaf. After the
/// backward sweep the accumulated gradient is added into `param.grad`; the
/// parameter must outlive the sweep.
template <typename Real>
Tensor<Real> use(Tape<Real>& tape, Param<Real>& param) {
  Tensor<Real> leaf = tape.make(param.shape, param.value, true);
  tape.node(leaf.index()).back = [p = &param, yi = leaf.index()](Tape<Real>& tp) {
    const auto& g = tp.node(yi).grad;
    for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
  };
  return leaf;
}

// --- initialization -----------------------------------------------------------

template <typename Real>
void fill_uniform(Param<Real>& p, SeededRng& rng, double lo, double hi) {
  for (Real& v : p.value) v = static_cast<Real>(rng.uniform(lo, hi));
}

template <typename Real>
void fill_normal(Param<Real>& p, SeededRng& rng, double mean, double stddev) {
  // Box-Muller, one deviate per pair of uniforms; no state carried between calls
  constexpr double kTau = 6.283185307179586;
  for (Real& v : p.value) {
    double u1 = 1.0 - rng.uniform();  // (0,1], keeps the log finite
    double u2 = rng.uniform();
    v = static_cast<Real>(mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTau * u2));
  }
}

// --- gradient hygiene ------------------------------------------------------------

template <typename Real>
double global_grad_norm(const ParamSet<Real>& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    for (Real g : p.grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

/// Rescales every gradient so the global norm is at most `max_norm`; returns
/// the norm measured before clipping.
template <typename Real>
double clip_global_norm(ParamSet<Real>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const Real f = static_cast<Real>(max_norm / norm);
    for (auto& [name, p] : params) {
      if (!p.trainable) continue;
      for (Real& g : p.grad) g *= f;
    }
  }
  return norm;
}

// --- optimizers ------------------------------------------------------------------

template <typename Real>
struct Sgd {
  double lr = 0.1;

  void step(ParamSet<Real>& params) {
    for (auto& [name, p] : params) {
      if (!p.trainable) continue;
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.value[i] -= static_cast<Real>(lr) * p.grad[i];
      }
    }
  }
};

template <typename Real>
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;

  void step(ParamSet<Real>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : params) {
      if (!p.trainable) continue;
      if (p.m.empty()) p.m.assign(p.size(), Real(0));
      if (p.v.empty()) p.v.assign(p.size(), Real(0));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        const double m = beta1 * static_cast<double>(p.m[i]) + (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(p.v[i]) + (1.0 - beta2) * g * g;
        p.m[i] = static_cast<Real>(m);
        p.v[i] = static_cast<Real>(v);
        p.value[i] -= static_cast<Real>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
      }
    }
  }
};

// --- persistence ------------------------------------------------------------------

// Container layout (little-endian throughout):
//   "NSQM" | u32 version=1
//   u32 metadata count | {u32 klen, key, u32 vlen, value}...
//   u32 param count    | {u32 nlen, name, u32 rank, u32 dims[rank], f32 data[]}...
// Arrays are stored as float32 regardless of the in-memory Real, so a double
// build loads a float checkpoint and vice versa.

template <typename Real>
void save_params(const std::string& path, const ParamSet<Real>& params,
                 const std::map<std::string, std::string>& metadata);

/// Reads values into an already-shaped set; every stored name must exist with
/// a matching shape, and vice versa. Returns the stored metadata.
template <typename Real>
std::map<std::string, std::string> load_params(const std::string& path,
                                               ParamSet<Real>& params);

/// Reads only the metadata block, for callers that must rebuild shapes first.
std::map<std::string, std::string> load_metadata(const std::string& path);

}  // namespace nl2sparql::ad

#endif

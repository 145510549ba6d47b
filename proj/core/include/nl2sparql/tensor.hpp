#ifndef NL2SPARQL_TENSOR_HPP
#define NL2SPARQL_TENSOR_HPP

#include "nl2sparql/rng.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

// A minimal dense-tensor engine with reverse-mode automatic differentiation.
// Values live on a Tape; every op appends a node holding the forward result
// and a closure that routes gradients back to its inputs. Construction order
// is topological order, so the backward sweep is a single reverse walk.
namespace nl2sparql::ad {

class AdError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the tape itself: reuse after backward, mixing tapes, missing
/// scalar loss.
class TapeError : public AdError {
public:
  using AdError::AdError;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename Real>
class Tape;

/// Cheap handle onto one tape node.
template <typename Real>
class Tensor {
public:
  Tensor() = default;
  Tensor(Tape<Real>* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape<Real>* tape() const { return tape_; }
  std::size_t index() const { return index_; }
  bool defined() const { return tape_ != nullptr; }

  const Shape& shape() const;
  const std::vector<Real>& value() const;
  /// Gradient after backward; empty when this node was not on the loss path.
  const std::vector<Real>& grad() const;
  std::size_t rows() const { return shape().at(0); }
  std::size_t cols() const { return shape().at(1); }

private:
  Tape<Real>* tape_ = nullptr;
  std::size_t index_ = 0;
};

template <typename Real>
class Tape {
public:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;  // allocated on demand during backward
    std::function<void(Tape&)> back;
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant leaf; never receives gradient.
  Tensor<Real> input(Shape shape, std::vector<Real> data) {
    return make(std::move(shape), std::move(data), false);
  }

  /// Differentiable leaf.
  Tensor<Real> leaf(Shape shape, std::vector<Real> data) {
    return make(std::move(shape), std::move(data), true);
  }

  Tensor<Real> constant(Shape shape, Real fill) {
    std::vector<Real> data(numel(shape), fill);
    return make(std::move(shape), std::move(data), false);
  }

  Tensor<Real> zeros(Shape shape) { return constant(std::move(shape), Real(0)); }

  /// Appends a node. `data` must match `shape`; ops call this.
  Tensor<Real> make(Shape shape, std::vector<Real> data, bool needs_grad) {
    if (numel(shape) != data.size()) {
      throw AdError("node data does not match shape " + shape_str(shape));
    }
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Tensor<Real>(this, nodes_.size() - 1);
  }

  Node& node(std::size_t i) { return nodes_[i]; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of node `i`, allocated as zeros on first touch.
  std::vector<Real>& grad(std::size_t i) {
    Node& n = nodes_[i];
    if (n.grad.empty()) n.grad.assign(n.value.size(), Real(0));
    return n.grad;
  }

  /// Reverse sweep from a scalar loss. A tape runs backward once; building
  /// further ops onto a swept tape is fine, sweeping again is not.
  void backward(const Tensor<Real>& loss) {
    if (loss.tape() != this) throw TapeError("loss lives on a different tape");
    if (swept_) throw TapeError("backward already ran on this tape");
    swept_ = true;
    Node& top = nodes_[loss.index()];
    if (top.value.size() != 1) {
      throw TapeError("backward needs a scalar loss, got shape " + shape_str(top.shape));
    }
    grad(loss.index())[0] = Real(1);
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.grad.empty() && n.back) n.back(*this);
    }
  }

  bool swept() const { return swept_; }

private:
  std::vector<Node> nodes_;
  bool swept_ = false;
};

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  return tape_->node(index_).shape;
}
template <typename Real>
const std::vector<Real>& Tensor<Real>::value() const {
  return tape_->node(index_).value;
}
template <typename Real>
const std::vector<Real>& Tensor<Real>::grad() const {
  return tape_->node(index_).grad;
}

// --- op plumbing ---------------------------------------------------------------

namespace detail {

template <typename Real>
Tape<Real>& same_tape(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw TapeError("operands live on different tapes");
  }
  return *a.tape();
}

template <typename Real>
void check_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw AdError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                  shape_str(b.shape()));
  }
}

template <typename Real>
void check_rank(const Tensor<Real>& a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    throw AdError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                  shape_str(a.shape()));
  }
}

}  // namespace detail

// --- elementwise ---------------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_same_shape(a, b, "add");
  std::vector<Real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index()](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_same_shape(a, b, "sub");
  std::vector<Real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index()](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_same_shape(a, b, "mul");
  std::vector<Real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index()](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& av = tp.node(ai).value;
      const auto& bv = tp.node(bi).value;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  }
  return y;
}

namespace detail {

// shared skeleton for unary elementwise ops; dfn receives (x, y)
template <typename Real, typename F, typename DF>
Tensor<Real> unary(const Tensor<Real>& a, F&& fn, DF&& dfn) {
  Tape<Real>& t = *a.tape();
  std::vector<Real> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a.value()[i]);
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index(), dfn](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& xv = tp.node(ai).value;
      const auto& yv = tp.node(yi).value;
      auto& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfn(xv[i], yv[i]);
    };
  }
  return y;
}

}  // namespace detail

template <typename Real>
Tensor<Real> tanh(const Tensor<Real>& a) {
  return detail::unary(
      a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return detail::unary(
      a,
      [](Real x) {
        // evaluate on the negative side only, for stability
        if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
        Real e = std::exp(x);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  return detail::unary(
      a, [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& a) {
  return detail::unary(
      a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& a) {
  return detail::unary(
      a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, double c) {
  const Real f = static_cast<Real>(c);
  return detail::unary(
      a, [f](Real x) { return f * x; }, [f](Real, Real) { return f; });
}

/// A + row-broadcast bias; `b` has shape (n) or (1,n) against A (m,n).
template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_rank(a, 2, "add_bias");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (numel(b.shape()) != n) {
    throw AdError("add_bias: bias " + shape_str(b.shape()) + " does not span " +
                  std::to_string(n) + " columns");
  }
  std::vector<Real> out(a.value().size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a.value()[r * n + c] + b.value()[c];
  }
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index(), m,
                              n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
        }
      }
    };
  }
  return y;
}

// --- matrix ops ------------------------------------------------------------------

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_rank(a, 2, "matmul");
  detail::check_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw AdError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                  shape_str(b.shape()));
  }
  std::vector<Real> out(m * n, Real(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = av[i * k + p];
      if (aip == Real(0)) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make({m, n}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index(), m, k,
                              n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& av2 = tp.node(ai).value;
      const auto& bv2 = tp.node(bi).value;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);  // dA = dY · Bᵀ
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const Real gij = g[i * n + j];
            if (gij == Real(0)) continue;
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv2[p * n + j];
          }
        }
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);  // dB = Aᵀ · dY
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const Real aip = av2[i * k + p];
            if (aip == Real(0)) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
        }
      }
    };
  }
  return y;
}

/// a · bᵀ for b stored row-major as (n,k); avoids materializing transposes in
/// attention score computations.
template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_rank(a, 2, "matmul_nt");
  detail::check_rank(b, 2, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw AdError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                  shape_str(b.shape()) + "ᵀ");
  }
  std::vector<Real> out(m * n, Real(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = Real(0);
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  }
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make({m, n}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index(), m, k,
                              n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& av2 = tp.node(ai).value;
      const auto& bv2 = tp.node(bi).value;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);  // dA = dY · B
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const Real gij = g[i * n + j];
            if (gij == Real(0)) continue;
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv2[j * k + p];
          }
        }
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);  // dB = dYᵀ · A
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const Real gij = g[i * n + j];
            if (gij == Real(0)) continue;
            for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av2[i * k + p];
          }
        }
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  Tape<Real>& t = *a.tape();
  detail::check_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<Real> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  }
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make({n, m}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index(), m, n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      auto& ga = tp.grad(ai);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
      }
    };
  }
  return y;
}

// --- reshaping and assembly ------------------------------------------------------

template <typename Real>
Tensor<Real> concat_cols(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tape<Real>& t = detail::same_tape(a, b);
  detail::check_rank(a, 2, "concat_cols");
  detail::check_rank(b, 2, "concat_cols");
  const std::size_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  if (b.shape()[0] != m) {
    throw AdError("concat_cols: row counts disagree, " + shape_str(a.shape()) + " vs " +
                  shape_str(b.shape()));
  }
  std::vector<Real> out(m * (p + q));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < p; ++c) out[r * (p + q) + c] = a.value()[r * p + c];
    for (std::size_t c = 0; c < q; ++c) out[r * (p + q) + p + c] = b.value()[r * q + c];
  }
  bool needs = t.node(a.index()).needs_grad || t.node(b.index()).needs_grad;
  Tensor<Real> y = t.make({m, p + q}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), bi = b.index(), yi = y.index(), m, p,
                              q](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      if (tp.node(ai).needs_grad) {
        auto& ga = tp.grad(ai);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += g[r * (p + q) + c];
        }
      }
      if (tp.node(bi).needs_grad) {
        auto& gb = tp.grad(bi);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += g[r * (p + q) + p + c];
        }
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t from, std::size_t to) {
  Tape<Real>& t = *a.tape();
  detail::check_rank(a, 2, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (from >= to || to > n) {
    throw AdError("slice_cols: [" + std::to_string(from) + "," + std::to_string(to) +
                  ") out of " + std::to_string(n) + " columns");
  }
  const std::size_t w = to - from;
  std::vector<Real> out(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = a.value()[r * n + from + c];
  }
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make({m, w}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index(), m, n, w, from](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      auto& ga = tp.grad(ai);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < w; ++c) ga[r * n + from + c] += g[r * w + c];
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& a, std::size_t from, std::size_t to) {
  Tape<Real>& t = *a.tape();
  detail::check_rank(a, 2, "slice_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (from >= to || to > m) {
    throw AdError("slice_rows: [" + std::to_string(from) + "," + std::to_string(to) +
                  ") out of " + std::to_string(m) + " rows");
  }
  const std::size_t h = to - from;
  std::vector<Real> out(a.value().begin() + static_cast<std::ptrdiff_t>(from * n),
                        a.value().begin() + static_cast<std::ptrdiff_t>(to * n));
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make({h, n}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index(), n, h, from](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      auto& ga = tp.grad(ai);
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < n; ++c) ga[(from + r) * n + c] += g[r * n + c];
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> row(const Tensor<Real>& a, std::size_t r) {
  return slice_rows(a, r, r + 1);
}

/// Stacks equal-width pieces vertically.
template <typename Real>
Tensor<Real> stack_rows(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw AdError("stack_rows: nothing to stack");
  Tape<Real>& t = *parts[0].tape();
  const std::size_t n = parts[0].shape().at(1);
  std::size_t m = 0;
  bool needs = false;
  for (const auto& p : parts) {
    detail::same_tape(parts[0], p);
    detail::check_rank(p, 2, "stack_rows");
    if (p.shape()[1] != n) throw AdError("stack_rows: column counts disagree");
    m += p.shape()[0];
    needs = needs || t.node(p.index()).needs_grad;
  }
  std::vector<Real> out;
  out.reserve(m * n);
  for (const auto& p : parts) {
    out.insert(out.end(), p.value().begin(), p.value().end());
  }
  std::vector<std::size_t> idx;
  idx.reserve(parts.size());
  for (const auto& p : parts) idx.push_back(p.index());
  Tensor<Real> y = t.make({m, n}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [idx, yi = y.index(), n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      std::size_t offset = 0;
      for (std::size_t part : idx) {
        const std::size_t rows = tp.node(part).shape[0];
        if (tp.node(part).needs_grad) {
          auto& gp = tp.grad(part);
          for (std::size_t i = 0; i < rows * n; ++i) gp[i] += g[offset + i];
        }
        offset += rows * n;
      }
    };
  }
  return y;
}

// --- reductions ------------------------------------------------------------------

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Tape<Real>& t = *a.tape();
  Real total = Real(0);
  for (Real v : a.value()) total += v;
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make({1}, {total}, needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index()](Tape<Real>& tp) {
      const Real g = tp.node(yi).grad[0];
      auto& ga = tp.grad(ai);
      for (Real& v : ga) v += g;
    };
  }
  return y;
}

// --- softmax family ----------------------------------------------------------------

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& a) {
  Tape<Real>& t = *a.tape();
  detail::check_rank(a, 2, "softmax");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<Real> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const Real* x = a.value().data() + r * n;
    Real mx = x[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    Real z = Real(0);
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = std::exp(x[c] - mx);
      z += out[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= z;
  }
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index(), m, n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& yv = tp.node(yi).value;
      auto& ga = tp.grad(ai);
      for (std::size_t r = 0; r < m; ++r) {
        Real dot = Real(0);
        for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * yv[r * n + c];
        for (std::size_t c = 0; c < n; ++c) {
          ga[r * n + c] += yv[r * n + c] * (g[r * n + c] - dot);
        }
      }
    };
  }
  return y;
}

template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& a) {
  Tape<Real>& t = *a.tape();
  detail::check_rank(a, 2, "log_softmax");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<Real> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const Real* x = a.value().data() + r * n;
    Real mx = x[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    Real z = Real(0);
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    const Real lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[c] - lse;
  }
  bool needs = t.node(a.index()).needs_grad;
  Tensor<Real> y = t.make(a.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ai = a.index(), yi = y.index(), m, n](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& yv = tp.node(yi).value;
      auto& ga = tp.grad(ai);
      for (std::size_t r = 0; r < m; ++r) {
        Real gs = Real(0);
        for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
        for (std::size_t c = 0; c < n; ++c) {
          ga[r * n + c] += g[r * n + c] - std::exp(yv[r * n + c]) * gs;
        }
      }
    };
  }
  return y;
}

// --- lookup ----------------------------------------------------------------------

template <typename Real>
Tensor<Real> embedding_gather(const Tensor<Real>& table, const std::vector<std::size_t>& ids) {
  Tape<Real>& t = *table.tape();
  detail::check_rank(table, 2, "embedding_gather");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  std::vector<Real> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw AdError("embedding_gather: id " + std::to_string(ids[i]) + " outside table of " +
                    std::to_string(v) + " rows");
    }
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = table.value()[ids[i] * d + c];
  }
  bool needs = t.node(table.index()).needs_grad;
  Tensor<Real> y = t.make({ids.size(), d}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [ti = table.index(), yi = y.index(), ids, d](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      auto& gt = tp.grad(ti);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t c = 0; c < d; ++c) gt[ids[i] * d + c] += g[i * d + c];
      }
    };
  }
  return y;
}

// --- convolution -------------------------------------------------------------------

enum class ConvPad { Same, Causal };

/// Temporal convolution over x (T, d_in) with kernels (k, d_in, d_out).
/// Same padding centers the window (odd k only); causal padding shifts it so
/// position t never sees inputs after t.
template <typename Real>
Tensor<Real> conv1d(const Tensor<Real>& x, const Tensor<Real>& kernels, ConvPad pad) {
  Tape<Real>& t = detail::same_tape(x, kernels);
  detail::check_rank(x, 2, "conv1d");
  if (kernels.shape().size() != 3) {
    throw AdError("conv1d: kernels must be (k, d_in, d_out), got " +
                  shape_str(kernels.shape()));
  }
  const std::size_t T = x.shape()[0], din = x.shape()[1];
  const std::size_t k = kernels.shape()[0], dout = kernels.shape()[2];
  if (kernels.shape()[1] != din) {
    throw AdError("conv1d: kernel input width " + std::to_string(kernels.shape()[1]) +
                  " does not match input " + std::to_string(din));
  }
  if (pad == ConvPad::Same && k % 2 == 0) {
    throw AdError("conv1d: same padding needs an odd kernel width, got " + std::to_string(k));
  }
  const std::size_t offset = (pad == ConvPad::Same) ? (k - 1) / 2 : (k - 1);

  std::vector<Real> out(T * dout, Real(0));
  const auto& xv = x.value();
  const auto& kv = kernels.value();
  for (std::size_t pos = 0; pos < T; ++pos) {
    for (std::size_t dk = 0; dk < k; ++dk) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(pos + dk) -
                                 static_cast<std::ptrdiff_t>(offset);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t i = 0; i < din; ++i) {
        const Real xs = xv[static_cast<std::size_t>(src) * din + i];
        if (xs == Real(0)) continue;
        const Real* kr = kv.data() + (dk * din + i) * dout;
        Real* orow = out.data() + pos * dout;
        for (std::size_t o = 0; o < dout; ++o) orow[o] += xs * kr[o];
      }
    }
  }
  bool needs = t.node(x.index()).needs_grad || t.node(kernels.index()).needs_grad;
  Tensor<Real> y = t.make({T, dout}, std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [xi = x.index(), ki = kernels.index(), yi = y.index(), T, din, k,
                              dout, offset](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& xv2 = tp.node(xi).value;
      const auto& kv2 = tp.node(ki).value;
      const bool nx = tp.node(xi).needs_grad;
      const bool nk = tp.node(ki).needs_grad;
      for (std::size_t pos = 0; pos < T; ++pos) {
        for (std::size_t dk = 0; dk < k; ++dk) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(pos + dk) -
                                     static_cast<std::ptrdiff_t>(offset);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          const std::size_t s = static_cast<std::size_t>(src);
          for (std::size_t i = 0; i < din; ++i) {
            const Real* kr = kv2.data() + (dk * din + i) * dout;
            const Real xs = xv2[s * din + i];
            Real acc = Real(0);
            for (std::size_t o = 0; o < dout; ++o) {
              const Real go = g[pos * dout + o];
              acc += go * kr[o];
              if (nk) tp.grad(ki)[(dk * din + i) * dout + o] += xs * go;
            }
            if (nx) tp.grad(xi)[s * din + i] += acc;
          }
        }
      }
    };
  }
  return y;
}

// --- composites --------------------------------------------------------------------

/// Gated linear unit over the channel dimension: (T,2d) -> (T,d).
template <typename Real>
Tensor<Real> glu(const Tensor<Real>& x) {
  detail::check_rank(x, 2, "glu");
  const std::size_t n = x.shape()[1];
  if (n % 2 != 0) {
    throw AdError("glu: needs an even channel count, got " + std::to_string(n));
  }
  Tensor<Real> a = slice_cols(x, 0, n / 2);
  Tensor<Real> b = slice_cols(x, n / 2, n);
  return mul(a, sigmoid(b));
}

template <typename Real>
struct Attention {
  Tensor<Real> output;
  Tensor<Real> weights;  // (queries, keys), rows sum to 1
};

/// softmax(Q·Kᵀ/√d_k + mask)·V. The mask, when given, is additive: 0 keeps a
/// position, a large negative number removes it.
template <typename Real>
Attention<Real> scaled_dot_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                     const Tensor<Real>& v,
                                     const Tensor<Real>* mask = nullptr) {
  detail::check_rank(q, 2, "scaled_dot_attention");
  detail::check_rank(k, 2, "scaled_dot_attention");
  detail::check_rank(v, 2, "scaled_dot_attention");
  if (q.shape()[1] != k.shape()[1]) {
    throw AdError("scaled_dot_attention: query and key widths disagree");
  }
  if (k.shape()[0] != v.shape()[0]) {
    throw AdError("scaled_dot_attention: key and value counts disagree");
  }
  const Real r = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(q.shape()[1])));
  Tensor<Real> scores = scale(matmul_nt(q, k), r);
  if (mask != nullptr) {
    if (mask->shape() != scores.shape()) {
      throw AdError("scaled_dot_attention: mask " + shape_str(mask->shape()) +
                    " does not match scores " + shape_str(scores.shape()));
    }
    scores = add(scores, *mask);
  }
  Tensor<Real> w = softmax(scores);
  return {matmul(w, v), w};
}

/// The additive mask value that zeroes a position's weight outright.
template <typename Real>
constexpr Real mask_off() {
  return Real(-1e30);
}

/// (T,T) additive mask hiding strictly-future positions.
template <typename Real>
Tensor<Real> causal_mask(Tape<Real>& tape, std::size_t t) {
  std::vector<Real> m(t * t, Real(0));
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = i + 1; j < t; ++j) m[i * t + j] = mask_off<Real>();
  }
  return tape.input({t, t}, std::move(m));
}

/// (rows, keys) additive mask hiding key positions >= valid.
template <typename Real>
Tensor<Real> padding_mask(Tape<Real>& tape, std::size_t rows, std::size_t keys,
                          std::size_t valid) {
  if (valid == 0) throw AdError("padding_mask: a fully masked row would renormalize to garbage");
  std::vector<Real> m(rows * keys, Real(0));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = valid; j < keys; ++j) m[i * keys + j] = mask_off<Real>();
  }
  return tape.input({rows, keys}, std::move(m));
}

// --- normalization -------------------------------------------------------------------

/// Row-wise standardization followed by an affine map; gain and bias span the
/// columns.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, Real eps = Real(1e-5)) {
  Tape<Real>& t = detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  detail::check_rank(x, 2, "layer_norm");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (numel(gain.shape()) != n || numel(bias.shape()) != n) {
    throw AdError("layer_norm: gain/bias must span " + std::to_string(n) + " columns");
  }
  std::vector<Real> out(m * n);
  std::vector<Real> inv_std(m);
  std::vector<Real> xhat(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const Real* xr = x.value().data() + r * n;
    Real mean = Real(0);
    for (std::size_t c = 0; c < n; ++c) mean += xr[c];
    mean /= static_cast<Real>(n);
    Real var = Real(0);
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<Real>(n);
    inv_std[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xr[c] - mean) * inv_std[r];
      out[r * n + c] = gain.value()[c] * xhat[r * n + c] + bias.value()[c];
    }
  }
  bool needs = t.node(x.index()).needs_grad || t.node(gain.index()).needs_grad ||
               t.node(bias.index()).needs_grad;
  Tensor<Real> y = t.make(x.shape(), std::move(out), needs);
  if (needs) {
    t.node(y.index()).back = [xi = x.index(), gi = gain.index(), bi = bias.index(),
                              yi = y.index(), m, n, inv_std = std::move(inv_std),
                              xhat = std::move(xhat)](Tape<Real>& tp) {
      const auto& g = tp.node(yi).grad;
      const auto& gainv = tp.node(gi).value;
      const bool nx = tp.node(xi).needs_grad;
      const bool ng = tp.node(gi).needs_grad;
      const bool nb = tp.node(bi).needs_grad;
      for (std::size_t r = 0; r < m; ++r) {
        // dxhat = dy * gain; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
        Real mean_dxh = Real(0), mean_dxh_xh = Real(0);
        for (std::size_t c = 0; c < n; ++c) {
          const Real dxh = g[r * n + c] * gainv[c];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * xhat[r * n + c];
        }
        mean_dxh /= static_cast<Real>(n);
        mean_dxh_xh /= static_cast<Real>(n);
        for (std::size_t c = 0; c < n; ++c) {
          const Real dxh = g[r * n + c] * gainv[c];
          if (nx) {
            tp.grad(xi)[r * n + c] +=
                (dxh - mean_dxh - xhat[r * n + c] * mean_dxh_xh) * inv_std[r];
          }
          if (ng) tp.grad(gi)[c] += g[r * n + c] * xhat[r * n + c];
          if (nb) tp.grad(bi)[c] += g[r * n + c];
        }
      }
    };
  }
  return y;
}

// --- regularization --------------------------------------------------------------

/// Inverted dropout: kept entries are scaled by 1/(1-rate) so the expected
/// value is unchanged; identity when not training or rate is 0.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, SeededRng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw AdError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  Tape<Real>& t = *x.tape();
  std::vector<Real> mask(x.value().size());
  const Real keep_scale = Real(1.0 / (1.0 - rate));
  for (Real& v : mask) v = rng.uniform() < rate ? Real(0) : keep_scale;
  Tensor<Real> m = t.input(x.shape(), std::move(mask));
  return mul(x, m);
}

// --- loss ------------------------------------------------------------------------

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits`, positions whose target equals `pad_id` excluded.
template <typename Real>
Tensor<Real> cross_entropy_loss(const Tensor<Real>& logits,
                                const std::vector<std::size_t>& targets, std::size_t pad_id) {
  Tape<Real>& t = *logits.tape();
  detail::check_rank(logits, 2, "cross_entropy_loss");
  const std::size_t m = logits.shape()[0], n = logits.shape()[1];
  if (targets.size() != m) {
    throw AdError("cross_entropy_loss: " + std::to_string(targets.size()) + " targets for " +
                  std::to_string(m) + " logit rows");
  }
  std::size_t count = 0;
  Real total = Real(0);
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] == pad_id) continue;
    if (targets[r] >= n) {
      throw AdError("cross_entropy_loss: target " + std::to_string(targets[r]) +
                    " outside vocabulary of " + std::to_string(n));
    }
    ++count;
    const Real* x = logits.value().data() + r * n;
    Real mx = x[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    Real z = Real(0);
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    total += mx + std::log(z) - x[targets[r]];
  }
  if (count == 0) throw AdError("cross_entropy_loss: every target is padding");
  bool needs = t.node(logits.index()).needs_grad;
  Tensor<Real> y = t.make({1}, {total / static_cast<Real>(count)}, needs);
  if (needs) {
    t.node(y.index()).back = [li = logits.index(), yi = y.index(), targets, pad_id, m, n,
                              count](Tape<Real>& tp) {
      const Real g = tp.node(yi).grad[0] / static_cast<Real>(count);
      const auto& x = tp.node(li).value;
      auto& gl = tp.grad(li);
      for (std::size_t r = 0; r < m; ++r) {
        if (targets[r] == pad_id) continue;
        const Real* xr = x.data() + r * n;
        Real mx = xr[0];
        for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, xr[c]);
        Real z = Real(0);
        for (std::size_t c = 0; c < n; ++c) z += std::exp(xr[c] - mx);
        for (std::size_t c = 0; c < n; ++c) {
          Real p = std::exp(xr[c] - mx) / z;
          gl[r * n + c] += g * (p - (c == targets[r] ? Real(1) : Real(0)));
        }
      }
    };
  }
  return y;
}

/// Summed (not averaged) negative log-likelihood; reports the non-pad count
/// through `count_out` so callers can average over a whole batch.
template <typename Real>
Tensor<Real> cross_entropy_sum(const Tensor<Real>& logits,
                               const std::vector<std::size_t>& targets, std::size_t pad_id,
                               std::size_t* count_out) {
  Tape<Real>& t = *logits.tape();
  detail::check_rank(logits, 2, "cross_entropy_sum");
  const std::size_t m = logits.shape()[0], n = logits.shape()[1];
  if (targets.size() != m) {
    throw AdError("cross_entropy_sum: " + std::to_string(targets.size()) + " targets for " +
                  std::to_string(m) + " logit rows");
  }
  std::size_t count = 0;
  Real total = Real(0);
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] == pad_id) continue;
    if (targets[r] >= n) {
      throw AdError("cross_entropy_sum: target " + std::to_string(targets[r]) +
                    " outside vocabulary of " + std::to_string(n));
    }
    ++count;
    const Real* x = logits.value().data() + r * n;
    Real mx = x[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    Real z = Real(0);
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x[c] - mx);
    total += mx + std::log(z) - x[targets[r]];
  }
  if (count_out != nullptr) *count_out = count;
  bool needs = t.node(logits.index()).needs_grad;
  Tensor<Real> y = t.make({1}, {total}, needs);
  if (needs) {
    t.node(y.index()).back = [li = logits.index(), yi = y.index(), targets, pad_id, m,
                              n](Tape<Real>& tp) {
      const Real g = tp.node(yi).grad[0];
      const auto& x = tp.node(li).value;
      auto& gl = tp.grad(li);
      for (std::size_t r = 0; r < m; ++r) {
        if (targets[r] == pad_id) continue;
        const Real* xr = x.data() + r * n;
        Real mx = xr[0];
        for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, xr[c]);
        Real z = Real(0);
        for (std::size_t c = 0; c < n; ++c) z += std::exp(xr[c] - mx);
        for (std::size_t c = 0; c < n; ++c) {
          Real p = std::exp(xr[c] - mx) / z;
          gl[r * n + c] += g * (p - (c == targets[r] ? Real(1) : Real(0)));
        }
      }
    };
  }
  return y;
}

}  // namespace nl2sparql::ad

#endif

// Copyright 2026 The DAA Lab Authors.
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

// Small reverse-mode differentiation engine.
//
// A Tape records vector-valued nodes; each node stores its forward value and
// a closure that pushes its adjoint into its parents. Parameters come from a
// ParamVector bound to the tape, and after backward() the adjoints of all
// parameter leaves are scattered into a flat gradient.
//
// The tape is templated on the scalar type so the same model code can be
// evaluated in long double, which the finite-difference checker uses.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "daalab/errors.hpp"

namespace daalab {

struct ParamSlice {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const noexcept { return rows * cols; }
};

// Flat parameter storage with named, contiguous, non-overlapping slices.
template <class Real>
class BasicParamVector {
 public:
  BasicParamVector() = default;

  void add_slice(std::string name, std::size_t rows, std::size_t cols, Real fill = Real(0)) {
    for (const auto& s : layout_) {
      if (s.name == name) throw InvalidArgument("duplicate parameter slice '" + name + "'");
    }
    layout_.push_back({std::move(name), rows, cols, values_.size()});
    values_.resize(values_.size() + rows * cols, fill);
  }

  const ParamSlice& slice(std::string_view name) const {
    for (const auto& s : layout_) {
      if (s.name == name) return s;
    }
    throw InvalidArgument("unknown parameter slice '" + std::string(name) + "'");
  }

  bool has_slice(std::string_view name) const {
    return std::any_of(layout_.begin(), layout_.end(), [&](const auto& s) { return s.name == name; });
  }

  std::span<Real> view(std::string_view name) {
    const auto& s = slice(name);
    return std::span<Real>(values_).subspan(s.offset, s.size());
  }
  std::span<const Real> view(std::string_view name) const {
    const auto& s = slice(name);
    return std::span<const Real>(values_).subspan(s.offset, s.size());
  }

  std::size_t size() const noexcept { return values_.size(); }
  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }
  std::vector<Real>& values() noexcept { return values_; }
  const std::vector<Real>& values() const noexcept { return values_; }
  const std::vector<ParamSlice>& layout() const noexcept { return layout_; }

  // Same layout, values converted.
  template <class Other>
  BasicParamVector<Other> cast() const {
    BasicParamVector<Other> out;
    for (const auto& s : layout_) out.add_slice(s.name, s.rows, s.cols);
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<Other>(values_[i]);
    return out;
  }

  // Slices tile [0, size()) exactly.
  bool layout_consistent() const {
    std::size_t expected = 0;
    for (const auto& s : layout_) {
      if (s.offset != expected) return false;
      expected += s.size();
    }
    return expected == values_.size();
  }

  friend bool operator==(const BasicParamVector& a, const BasicParamVector& b) {
    if (a.values_ != b.values_ || a.layout_.size() != b.layout_.size()) return false;
    for (std::size_t i = 0; i < a.layout_.size(); ++i) {
      const auto& x = a.layout_[i];
      const auto& y = b.layout_[i];
      if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.offset != y.offset) return false;
    }
    return true;
  }

 private:
  std::vector<ParamSlice> layout_;
  std::vector<Real> values_;
};

using ParamVector = BasicParamVector<double>;

template <class Real>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const std::vector<Real>& value() const { return tape->value(id); }
  Real scalar() const { return tape->value(id).at(0); }
  std::size_t size() const { return tape->value(id).size(); }
};

template <class Real>
class Tape {
 public:
  using real_type = Real;
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  explicit Tape(const BasicParamVector<Real>& params) : params_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void bind(const BasicParamVector<Real>& params) { params_ = &params; }
  const BasicParamVector<Real>& params() const {
    if (params_ == nullptr) throw InvalidArgument("tape has no bound parameters");
    return *params_;
  }

  Var<Real> constant(std::vector<Real> v) { return push("constant", std::move(v), {}); }
  Var<Real> constant(Real x) { return constant(std::vector<Real>{x}); }

  // Leaf for a whole named slice of the bound parameter vector (row-major).
  Var<Real> param(std::string_view name) {
    const auto& s = params().slice(name);
    auto it = param_nodes_.find(s.offset);
    if (it != param_nodes_.end()) return {this, it->second};
    std::vector<Real> v(params().values().begin() + s.offset, params().values().begin() + s.offset + s.size());
    Var<Real> out = push("param", std::move(v), {});
    leaves_.emplace_back(out.id, s.offset);
    param_nodes_.emplace(s.offset, out.id);
    return out;
  }

  // Checks finiteness and records a node.
  Var<Real> push(const char* primitive, std::vector<Real> value, Backward backward) {
    for (Real x : value) {
      if (!std::isfinite(static_cast<long double>(x))) {
        throw NumericDomainError(primitive, "non-finite result");
      }
    }
    nodes_.push_back({std::move(value), {}, std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  const std::vector<Real>& value(std::size_t id) const { return nodes_[id].value; }
  std::vector<Real>& grad(std::size_t id) { return nodes_[id].grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse sweep from a scalar root.
  void backward(Var<Real> root) {
    if (root.size() != 1) throw InvalidArgument("backward: root must be scalar");
    for (auto& n : nodes_) n.grad.assign(n.value.size(), Real(0));
    nodes_[root.id].grad[0] = Real(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this, i);
    }
  }

  // Gradient w.r.t. the bound parameter vector (call after backward()).
  std::vector<Real> param_gradient() const {
    std::vector<Real> g(params().size(), Real(0));
    for (const auto& [node, offset] : leaves_) {
      const auto& ng = nodes_[node].grad;
      for (std::size_t k = 0; k < ng.size(); ++k) g[offset + k] += ng[k];
    }
    return g;
  }

 private:
  struct Node {
    std::vector<Real> value;
    std::vector<Real> grad;
    Backward backward;
  };

  const BasicParamVector<Real>* params_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> leaves_;
  std::map<std::size_t, std::size_t> param_nodes_;
};

namespace ops {

namespace detail {
template <class Real>
void require_same_size(const Var<Real>& a, const Var<Real>& b, const char* op) {
  if (a.tape != b.tape) throw InvalidArgument(std::string(op) + ": operands on different tapes");
  if (a.size() != b.size()) throw InvalidArgument(std::string(op) + ": size mismatch");
}

template <class Real, class Fwd, class Deriv>
Var<Real> unary(const char* name, Var<Real> a, Fwd fwd, Deriv deriv) {
  const auto& x = a.value();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t pa = a.id;
  return a.tape->push(name, std::move(y), [pa, deriv](Tape<Real>& t, std::size_t self) {
    const auto& xv = t.value(pa);
    const auto& yv = t.value(self);
    const auto& gy = t.grad(self);
    auto& gx = t.grad(pa);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
}
}  // namespace detail

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  detail::require_same_size(a, b, "add");
  std::vector<Real> y(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t pa = a.id, pb = b.id;
  return a.tape->push("add", std::move(y), [pa, pb](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad(pb);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  detail::require_same_size(a, b, "sub");
  std::vector<Real> y(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t pa = a.id, pb = b.id;
  return a.tape->push("sub", std::move(y), [pa, pb](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad(pb);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

// Elementwise product.
template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  detail::require_same_size(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<Real> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::size_t pa = a.id, pb = b.id;
  return a.tape->push("mul", std::move(y), [pa, pb](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(pa);
    const auto& z = t.value(pb);
    auto& ga = t.grad(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * z[i];
    auto& gb = t.grad(pb);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
  });
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c) {
  return detail::unary<Real>("scale", a, [c](Real x) { return c * x; }, [c](Real, Real) { return c; });
}

template <class Real>
Var<Real> shift(Var<Real> a, Real c) {
  return detail::unary<Real>("shift", a, [c](Real x) { return x + c; }, [](Real, Real) { return Real(1); });
}

template <class Real>
Var<Real> neg(Var<Real> a) {
  return scale(a, Real(-1));
}

template <class Real>
Var<Real> square(Var<Real> a) {
  return detail::unary<Real>("square", a, [](Real x) { return x * x; }, [](Real x, Real) { return Real(2) * x; });
}

template <class Real>
Var<Real> tanh(Var<Real> a) {
  return detail::unary<Real>(
      "tanh", a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <class Real>
Var<Real> exp(Var<Real> a) {
  return detail::unary<Real>("exp", a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <class Real>
Var<Real> log(Var<Real> a) {
  for (Real x : a.value()) {
    if (!(x > Real(0))) throw NumericDomainError("log", "non-positive input");
  }
  return detail::unary<Real>("log", a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

template <class Real>
Real stable_sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

// log(1 + e^x) without overflow.
template <class Real>
Real stable_softplus(Real x) {
  return std::max(x, Real(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <class Real>
Var<Real> sigmoid(Var<Real> a) {
  return detail::unary<Real>(
      "sigmoid", a, [](Real x) { return stable_sigmoid(x); }, [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Var<Real> softplus(Var<Real> a) {
  return detail::unary<Real>(
      "softplus", a, [](Real x) { return stable_softplus(x); }, [](Real x, Real) { return stable_sigmoid(x); });
}

// log sigma(x) = -softplus(-x).
template <class Real>
Var<Real> log_sigmoid(Var<Real> a) {
  return detail::unary<Real>(
      "log_sigmoid", a, [](Real x) { return -stable_softplus(-x); },
      [](Real x, Real) { return stable_sigmoid(-x); });
}

// max(0, x); the subgradient at 0 is 0.
template <class Real>
Var<Real> relu(Var<Real> a) {
  return detail::unary<Real>(
      "relu", a, [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

// Elementwise max; ties send the gradient to the first operand.
template <class Real>
Var<Real> max(Var<Real> a, Var<Real> b) {
  detail::require_same_size(a, b, "max");
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<Real> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(av[i], bv[i]);
  const std::size_t pa = a.id, pb = b.id;
  return a.tape->push("max", std::move(y), [pa, pb](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& x = t.value(pa);
    const auto& z = t.value(pb);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= z[i]) {
        t.grad(pa)[i] += g[i];
      } else {
        t.grad(pb)[i] += g[i];
      }
    }
  });
}

template <class Real>
Var<Real> sum(Var<Real> a) {
  const auto& x = a.value();
  Real s = std::accumulate(x.begin(), x.end(), Real(0));
  const std::size_t pa = a.id;
  return a.tape->push("sum", {s}, [pa](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (auto& gx : t.grad(pa)) gx += g;
  });
}

// Sum of scalar nodes in one node.
template <class Real>
Var<Real> sum(std::span<const Var<Real>> xs) {
  if (xs.empty()) throw InvalidArgument("sum: empty input");
  Real s = Real(0);
  std::vector<std::size_t> parents;
  parents.reserve(xs.size());
  for (const auto& x : xs) {
    if (x.size() != 1) throw InvalidArgument("sum: expected scalars");
    s += x.scalar();
    parents.push_back(x.id);
  }
  return xs.front().tape->push("sum", {s}, [parents = std::move(parents)](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    for (std::size_t p : parents) t.grad(p)[0] += g;
  });
}

template <class Real>
Var<Real> mean(std::span<const Var<Real>> xs) {
  return scale(sum(xs), Real(1) / static_cast<Real>(xs.size()));
}

// Scalar element a[i].
template <class Real>
Var<Real> index(Var<Real> a, std::size_t i) {
  if (i >= a.size()) throw InvalidArgument("index: out of range");
  const std::size_t pa = a.id;
  return a.tape->push("index", {a.value()[i]}, [pa, i](Tape<Real>& t, std::size_t self) {
    t.grad(pa)[i] += t.grad(self)[0];
  });
}

// Contiguous sub-range a[offset, offset + n).
template <class Real>
Var<Real> segment(Var<Real> a, std::size_t offset, std::size_t n) {
  if (offset + n > a.size()) throw InvalidArgument("segment: out of range");
  std::vector<Real> y(a.value().begin() + offset, a.value().begin() + offset + n);
  const std::size_t pa = a.id;
  return a.tape->push("segment", std::move(y), [pa, offset](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(pa);
    for (std::size_t k = 0; k < g.size(); ++k) ga[offset + k] += g[k];
  });
}

// Column j of a row-major (rows x cols) matrix; the one-hot embedding lookup.
template <class Real>
Var<Real> column(Var<Real> w, std::size_t rows, std::size_t cols, std::size_t j) {
  if (w.size() != rows * cols || j >= cols) throw InvalidArgument("column: shape mismatch");
  std::vector<Real> y(rows);
  const auto& wv = w.value();
  for (std::size_t r = 0; r < rows; ++r) y[r] = wv[r * cols + j];
  const std::size_t pw = w.id;
  return w.tape->push("gather", std::move(y), [pw, cols, j](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gw = t.grad(pw);
    for (std::size_t r = 0; r < g.size(); ++r) gw[r * cols + j] += g[r];
  });
}

// W x + b for row-major W (rows x cols).
template <class Real>
Var<Real> affine(Var<Real> w, Var<Real> x, Var<Real> b) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  if (w.size() != rows * cols) throw InvalidArgument("affine: shape mismatch");
  const auto& wv = w.value();
  const auto& xv = x.value();
  std::vector<Real> y(b.value());
  for (std::size_t r = 0; r < rows; ++r) {
    Real acc = Real(0);
    for (std::size_t c = 0; c < cols; ++c) acc += wv[r * cols + c] * xv[c];
    y[r] += acc;
  }
  const std::size_t pw = w.id, px = x.id, pb = b.id;
  return w.tape->push("affine", std::move(y), [pw, px, pb, rows, cols](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& wv2 = t.value(pw);
    const auto& xv2 = t.value(px);
    auto& gw = t.grad(pw);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * xv2[c];
    }
    auto& gx = t.grad(px);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gx[c] += g[r] * wv2[r * cols + c];
    }
    auto& gb = t.grad(pb);
    for (std::size_t r = 0; r < rows; ++r) gb[r] += g[r];
  });
}

template <class Real>
Real logsumexp_value(std::span<const Real> x) {
  if (x.empty()) throw InvalidArgument("logsumexp: empty input");
  const Real m = *std::max_element(x.begin(), x.end());
  Real s = Real(0);
  for (Real v : x) s += std::exp(v - m);
  return m + std::log(s);
}

template <class Real>
Var<Real> logsumexp(Var<Real> a) {
  const Real lse = logsumexp_value<Real>(a.value());
  const std::size_t pa = a.id;
  return a.tape->push("logsumexp", {lse}, [pa](Tape<Real>& t, std::size_t self) {
    const Real g = t.grad(self)[0];
    const Real l = t.value(self)[0];
    const auto& x = t.value(pa);
    auto& gx = t.grad(pa);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g * std::exp(x[i] - l);
  });
}

template <class Real>
Var<Real> log_softmax(Var<Real> a) {
  const Real lse = logsumexp_value<Real>(a.value());
  std::vector<Real> y(a.value());
  for (auto& v : y) v -= lse;
  const std::size_t pa = a.id;
  return a.tape->push("log_softmax", std::move(y), [pa](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y2 = t.value(self);
    const Real gsum = std::accumulate(g.begin(), g.end(), Real(0));
    auto& gx = t.grad(pa);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(y2[i]) * gsum;
  });
}

}  // namespace ops

// log sum exp(x_i) with max subtraction.
inline double logsumexp(std::span<const double> xs) { return ops::logsumexp_value<double>(xs); }

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> grad;
};

// Evaluates f(tape) -> scalar Var on a double tape bound to theta and returns
// its value and gradient with respect to theta.
template <class F>
ValueAndGradient evaluate_with_gradient(F&& f, const ParamVector& theta) {
  Tape<double> tape(theta);
  Var<double> out = f(tape);
  tape.backward(out);
  return {out.scalar(), tape.param_gradient()};
}

// Value only, in the requested precision.
template <class Real, class F>
Real evaluate_value(F&& f, const BasicParamVector<Real>& theta) {
  Tape<Real> tape(theta);
  return f(tape).scalar();
}

// Central finite differences. f is evaluated on long double tapes, which
// keeps cancellation error far below the truncation error for h = 1e-5.
template <class F>
std::vector<double> finite_difference_gradient(F&& f, const ParamVector& theta, double h = 1e-5) {
  auto wide = theta.template cast<long double>();
  std::vector<double> g(theta.size());
  const long double step = h;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const long double x0 = wide[i];
    wide[i] = x0 + step;
    const long double up = evaluate_value<long double>(f, wide);
    wide[i] = x0 - step;
    const long double down = evaluate_value<long double>(f, wide);
    wide[i] = x0;
    g[i] = static_cast<double>((up - down) / (2 * step));
  }
  return g;
}

// Largest componentwise relative error over components whose magnitude
// exceeds `floor` in either gradient.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-8) {
  if (analytic.size() != numeric.size()) throw InvalidArgument("gradient size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale <= floor) continue;
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

}  // namespace daalab

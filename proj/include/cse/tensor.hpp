// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Dense row-major tensors with dynamic reverse-mode autodiff. The scalar type
// is a template parameter: double for numerical verification, float for
// training. Ops record onto the active Graph (a tape); Graph::backward replays
// the tape in reverse and accumulates gradients additively. Every op checks
// its output for NaN/Inf and raises ErrorKind::Numeric naming the op.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cse/common.hpp"
#include "cse/error.hpp"
#include "cse/kernels.hpp"

namespace cse {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorImpl {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily, same numel as value
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = std::move(shape);
    t.impl_->value.assign(shape_numel(t.impl_->shape), S(0));
    return t;
  }

  static Tensor full(Shape shape, S v) {
    Tensor t = zeros(std::move(shape));
    for (S& x : t.impl_->value) x = v;
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> data) {
    check(shape_numel(shape) == static_cast<int64_t>(data.size()), ErrorKind::Shape,
          "tensor data size does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = std::move(shape);
    t.impl_->value = std::move(data);
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t = zeros(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (S& x : t.impl_->value) x = static_cast<S>(dist(rng));
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->value.size()); }

  S* data() { return impl_->value.data(); }
  const S* data() const { return impl_->value.data(); }
  std::vector<S>& values() { return impl_->value; }
  const std::vector<S>& values() const { return impl_->value; }

  S item() const {
    check(numel() == 1, ErrorKind::Shape, "item() on tensor with numel != 1");
    return impl_->value[0];
  }

  S at(int64_t i) const { return impl_->value[static_cast<size_t>(i)]; }
  S at(int64_t i, int64_t j) const {
    return impl_->value[static_cast<size_t>(i * dim(1) + j)];
  }

  Tensor& set_requires_grad(bool b = true) {
    impl_->requires_grad = b;
    return *this;
  }
  bool requires_grad() const { return impl_ && impl_->requires_grad; }

  std::vector<S>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<S>& grad() const { return impl_->grad; }
  void zero_grad() {
    if (impl_) impl_->grad.assign(impl_->value.size(), S(0));
  }

  // Deep copy of values, detached from the graph.
  Tensor clone_detached() const {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = impl_->shape;
    t.impl_->value = impl_->value;
    return t;
  }

  std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<S>> impl_;
};

// Tape of recorded operations. At most one Graph per scalar type may be
// active per thread; ops record themselves while a graph is active and any
// input requires gradients. backward() replays entries in reverse and then
// clears the tape (single-use, no higher-order gradients).
template <typename S>
class Graph {
 public:
  Graph() {
    check(current_ == nullptr, ErrorKind::State, "a Graph is already active on this thread");
    current_ = this;
  }
  ~Graph() { current_ = nullptr; }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* current() { return current_; }

  void record(const char* op, std::function<void()> backward_fn) {
    entries_.emplace_back(op, std::move(backward_fn));
  }

  size_t size() const { return entries_.size(); }

  void backward(Tensor<S>& loss) {
    check(loss.numel() == 1, ErrorKind::Shape, "backward() requires a scalar loss");
    check(loss.requires_grad(), ErrorKind::State, "backward() on a tensor with no recorded graph");
    loss.grad()[0] = S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->second();
    entries_.clear();
  }

 private:
  static thread_local Graph* current_;
  std::vector<std::pair<const char*, std::function<void()>>> entries_;
};

template <typename S>
thread_local Graph<S>* Graph<S>::current_ = nullptr;

namespace detail {

template <typename S>
inline bool tracing(std::initializer_list<const Tensor<S>*> ins) {
  if (Graph<S>::current() == nullptr) return false;
  for (const Tensor<S>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S>
inline void finish(const char* op, Tensor<S>& out) {
  if (!kernels::all_finite(out.data(), out.numel()))
    fail(ErrorKind::Numeric, std::string("non-finite values produced by op '") + op + "'");
}

template <typename S>
inline void record(const char* op, bool traced, Tensor<S>& out, std::function<void()> fn) {
  if (traced) {
    out.set_requires_grad(true);
    auto oi = out.impl();
    // Outputs that never fed the loss have no gradient slot; skip them.
    Graph<S>::current()->record(op, [oi, fn = std::move(fn)] {
      if (oi->grad.size() != oi->value.size()) return;
      fn();
    });
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape() == b.shape(), ErrorKind::Shape,
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  bool traced = detail::tracing<S>({&a, &b});
  detail::finish("add", out);
  detail::record<S>("add", traced, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
    const size_t n = oi->value.size();
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape() == b.shape(), ErrorKind::Shape,
        "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  bool traced = detail::tracing<S>({&a, &b});
  detail::finish("sub", out);
  detail::record<S>("sub", traced, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
    const size_t n = oi->value.size();
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < n; ++i) bi->grad[i] -= oi->grad[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.shape() == b.shape(), ErrorKind::Shape,
        "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  bool traced = detail::tracing<S>({&a, &b});
  detail::finish("mul", out);
  detail::record<S>("mul", traced, out, [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
    const size_t n = oi->value.size();
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * bi->value[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i] * ai->value[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double s) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  const S sv = static_cast<S>(s);
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * sv;
  bool traced = detail::tracing<S>({&a});
  detail::finish("scale", out);
  detail::record<S>("scale", traced, out, [ai = a.impl(), oi = out.impl(), sv] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->value.size(); ++i) ai->grad[i] += oi->grad[i] * sv;
  });
  return out;
}

// x * s where s has a single element; gradients flow to both.
template <typename S>
Tensor<S> mul_scalar_tensor(const Tensor<S>& x, const Tensor<S>& s) {
  check(s.numel() == 1, ErrorKind::Shape, "mul_scalar_tensor: scalar operand must have numel 1");
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S sv = s.data()[0];
  const S* px = x.data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = px[i] * sv;
  bool traced = detail::tracing<S>({&x, &s});
  detail::finish("mul_scalar_tensor", out);
  detail::record<S>("mul_scalar_tensor", traced, out, [xi = x.impl(), si = s.impl(), oi = out.impl()] {
    if (xi->requires_grad) {
      xi->ensure_grad();
      const S sv2 = si->value[0];
      for (size_t i = 0; i < oi->value.size(); ++i) xi->grad[i] += oi->grad[i] * sv2;
    }
    if (si->requires_grad) {
      si->ensure_grad();
      S acc = S(0);
      for (size_t i = 0; i < oi->value.size(); ++i) acc += oi->grad[i] * xi->value[i];
      si->grad[0] += acc;
    }
  });
  return out;
}

// x[.., D] + b[D], broadcast over leading rows.
template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& b) {
  check(b.rank() == 1, ErrorKind::Shape, "add_bias: bias must be rank 1");
  const int64_t d = b.dim(0);
  check(x.rank() >= 1 && x.dim(x.rank() - 1) == d, ErrorKind::Shape,
        "add_bias: last dim of x " + shape_str(x.shape()) + " != bias length");
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const int64_t rows = x.numel() / d;
  const S* px = x.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) po[r * d + j] = px[r * d + j] + pb[j];
  bool traced = detail::tracing<S>({&x, &b});
  detail::finish("add_bias", out);
  detail::record<S>("add_bias", traced, out, [xi = x.impl(), bi = b.impl(), oi = out.impl(), rows, d] {
    if (xi->requires_grad) {
      xi->ensure_grad();
      for (size_t i = 0; i < oi->value.size(); ++i) xi->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) bi->grad[static_cast<size_t>(j)] += oi->grad[static_cast<size_t>(r * d + j)];
    }
  });
  return out;
}

template <typename S>
Tensor<S> detach(const Tensor<S>& a) {
  return a.clone_detached();
}

// Straight-through estimator: forward value is `values` exactly; the backward
// pass treats the op as identity into `grad_path` (equivalent to
// grad_path + detach(values - grad_path), without the re-rounding).
template <typename S>
Tensor<S> straight_through(const Tensor<S>& values, const Tensor<S>& grad_path) {
  check(values.shape() == grad_path.shape(), ErrorKind::Shape, "straight_through: shape mismatch");
  Tensor<S> out = values.clone_detached();
  bool traced = detail::tracing<S>({&grad_path});
  detail::record<S>("straight_through", traced, out, [gi = grad_path.impl(), oi = out.impl()] {
    if (!gi->requires_grad) return;
    gi->ensure_grad();
    for (size_t i = 0; i < oi->value.size(); ++i) gi->grad[i] += oi->grad[i];
  });
  return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  check(shape_numel(shape) == a.numel(), ErrorKind::Shape,
        "reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor<S> out = Tensor<S>::from(std::move(shape), a.values());
  bool traced = detail::tracing<S>({&a});
  detail::record<S>("reshape", traced, out, [ai = a.impl(), oi = out.impl()] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->value.size(); ++i) ai->grad[i] += oi->grad[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.rank() == 2 && b.rank() == 2, ErrorKind::Shape, "matmul: operands must be rank 2");
  check(a.dim(1) == b.dim(0), ErrorKind::Shape,
        "matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
  bool traced = detail::tracing<S>({&a, &b});
  detail::finish("matmul", out);
  detail::record<S>("matmul", traced, out, [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
    if (ai->requires_grad) {
      ai->ensure_grad();
      // dA += dC * B^T ; materialize B^T once.
      std::vector<S> bt(static_cast<size_t>(k) * n);
      for (int64_t kk = 0; kk < k; ++kk)
        for (int64_t j = 0; j < n; ++j) bt[static_cast<size_t>(j) * k + kk] = bi->value[static_cast<size_t>(kk * n + j)];
      std::vector<S> da(static_cast<size_t>(m) * k);
      kernels::matmul(oi->grad.data(), bt.data(), da.data(), m, n, k);
      for (size_t i = 0; i < da.size(); ++i) ai->grad[i] += da[i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      // dB += A^T * dC.
      std::vector<S> at(static_cast<size_t>(k) * m);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) at[static_cast<size_t>(kk) * m + i] = ai->value[static_cast<size_t>(i * k + kk)];
      std::vector<S> db(static_cast<size_t>(k) * n);
      kernels::matmul(at.data(), oi->grad.data(), db.data(), k, m, n);
      for (size_t i = 0; i < db.size(); ++i) bi->grad[i] += db[i];
    }
  });
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  check(a.rank() == 2, ErrorKind::Shape, "transpose: operand must be rank 2");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({n, m});
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  bool traced = detail::tracing<S>({&a});
  detail::record<S>("transpose", traced, out, [ai = a.impl(), oi = out.impl(), m, n] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ai->grad[static_cast<size_t>(i * n + j)] += oi->grad[static_cast<size_t>(j * m + i)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Slicing / concatenation (rank 2)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, int64_t start, int64_t len) {
  check(a.rank() == 2, ErrorKind::Shape, "slice_rows: operand must be rank 2");
  check(start >= 0 && len >= 0 && start + len <= a.dim(0), ErrorKind::Shape, "slice_rows: out of range");
  const int64_t n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({len, n});
  std::copy(a.data() + start * n, a.data() + (start + len) * n, out.data());
  bool traced = detail::tracing<S>({&a});
  detail::record<S>("slice_rows", traced, out, [ai = a.impl(), oi = out.impl(), start, len, n] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (int64_t i = 0; i < len * n; ++i) ai->grad[static_cast<size_t>(start * n + i)] += oi->grad[static_cast<size_t>(i)];
  });
  return out;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, int64_t start, int64_t len) {
  check(a.rank() == 2, ErrorKind::Shape, "slice_cols: operand must be rank 2");
  check(start >= 0 && len >= 0 && start + len <= a.dim(1), ErrorKind::Shape, "slice_cols: out of range");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, len});
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < len; ++j) po[i * len + j] = pa[i * n + start + j];
  bool traced = detail::tracing<S>({&a});
  detail::record<S>("slice_cols", traced, out, [ai = a.impl(), oi = out.impl(), m, n, start, len] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < len; ++j) ai->grad[static_cast<size_t>(i * n + start + j)] += oi->grad[static_cast<size_t>(i * len + j)];
  });
  return out;
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  check(!parts.empty(), ErrorKind::Shape, "concat_cols: empty input");
  const int64_t m = parts[0].dim(0);
  int64_t total = 0;
  for (const auto& p : parts) {
    check(p.rank() == 2 && p.dim(0) == m, ErrorKind::Shape, "concat_cols: row count mismatch");
    total += p.dim(1);
  }
  Tensor<S> out = Tensor<S>::zeros({m, total});
  S* po = out.data();
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t n = p.dim(1);
    const S* pp = p.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) po[i * total + off + j] = pp[i * n + j];
    off += n;
  }
  bool traced = false;
  std::vector<const Tensor<S>*> ptrs;
  for (const auto& p : parts)
    if (p.requires_grad()) traced = true;
  traced = traced && Graph<S>::current() != nullptr;
  detail::finish("concat_cols", out);
  if (traced) {
    std::vector<std::shared_ptr<TensorImpl<S>>> impls;
    impls.reserve(parts.size());
    for (const auto& p : parts) impls.push_back(p.impl());
    out.set_requires_grad(true);
    Graph<S>::current()->record("concat_cols", [impls, oi = out.impl(), m, total] {
      if (oi->grad.size() != oi->value.size()) return;
      int64_t off2 = 0;
      for (const auto& pi : impls) {
        const int64_t n = pi->shape[1];
        if (pi->requires_grad) {
          pi->ensure_grad();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
              pi->grad[static_cast<size_t>(i * n + j)] += oi->grad[static_cast<size_t>(i * total + off2 + j)];
        }
        off2 += n;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  check(!parts.empty(), ErrorKind::Shape, "concat_rows: empty input");
  const int64_t n = parts[0].dim(1);
  int64_t rows = 0;
  for (const auto& p : parts) {
    check(p.rank() == 2 && p.dim(1) == n, ErrorKind::Shape, "concat_rows: col count mismatch");
    rows += p.dim(0);
  }
  Tensor<S> out = Tensor<S>::zeros({rows, n});
  S* po = out.data();
  int64_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), po + off);
    off += p.numel();
  }
  bool traced = false;
  for (const auto& p : parts)
    if (p.requires_grad()) traced = true;
  traced = traced && Graph<S>::current() != nullptr;
  detail::finish("concat_rows", out);
  if (traced) {
    std::vector<std::shared_ptr<TensorImpl<S>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    out.set_requires_grad(true);
    Graph<S>::current()->record("concat_rows", [impls, oi = out.impl()] {
      if (oi->grad.size() != oi->value.size()) return;
      int64_t off2 = 0;
      for (const auto& pi : impls) {
        const int64_t count = static_cast<int64_t>(pi->value.size());
        if (pi->requires_grad) {
          pi->ensure_grad();
          for (int64_t i = 0; i < count; ++i) pi->grad[static_cast<size_t>(i)] += oi->grad[static_cast<size_t>(off2 + i)];
        }
        off2 += count;
      }
    });
  }
  return out;
}

// Shift rows down by `steps`, zero-filling the top. Used for causal
// convolutions across frames.
template <typename S>
Tensor<S> shift_rows_down(const Tensor<S>& a, int64_t steps) {
  check(a.rank() == 2, ErrorKind::Shape, "shift_rows_down: operand must be rank 2");
  check(steps >= 0, ErrorKind::Shape, "shift_rows_down: negative shift");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = steps; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) po[i * n + j] = pa[(i - steps) * n + j];
  bool traced = detail::tracing<S>({&a});
  detail::record<S>("shift_rows_down", traced, out, [ai = a.impl(), oi = out.impl(), m, n, steps] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (int64_t i = steps; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ai->grad[static_cast<size_t>((i - steps) * n + j)] += oi->grad[static_cast<size_t>(i * n + j)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = S(1) / (S(1) + std::exp(-pa[i]));
  bool traced = detail::tracing<S>({&a});
  detail::finish("sigmoid", out);
  detail::record<S>("sigmoid", traced, out, [ai = a.impl(), oi = out.impl()] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->value.size(); ++i) {
      const S y = oi->value[i];
      ai->grad[i] += oi->grad[i] * y * (S(1) - y);
    }
  });
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > S(0) ? pa[i] : S(0);
  bool traced = detail::tracing<S>({&a});
  detail::finish("relu", out);
  detail::record<S>("relu", traced, out, [ai = a.impl(), oi = out.impl()] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < oi->value.size(); ++i)
      if (ai->value[i] > S(0)) ai->grad[i] += oi->grad[i];
  });
  return out;
}

// Exact gelu: 0.5 x (1 + erf(x / sqrt(2))).
template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  const S inv_sqrt2 = static_cast<S>(0.7071067811865475244);
  for (int64_t i = 0; i < out.numel(); ++i)
    po[i] = S(0.5) * pa[i] * (S(1) + std::erf(pa[i] * inv_sqrt2));
  bool traced = detail::tracing<S>({&a});
  detail::finish("gelu", out);
  detail::record<S>("gelu", traced, out, [ai = a.impl(), oi = out.impl(), inv_sqrt2] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    const S inv_sqrt2pi = static_cast<S>(0.3989422804014326779);
    for (size_t i = 0; i < oi->value.size(); ++i) {
      const S x = ai->value[i];
      const S cdf = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
      const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * x * x);
      ai->grad[i] += oi->grad[i] * (cdf + x * pdf);
    }
  });
  return out;
}

// Row-wise softmax over the last dimension of a rank-2 tensor. Max-subtracted;
// the row sum runs left to right so that a zero tail (fully masked columns)
// leaves the result of the unmasked prefix bit-exact.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  check(a.rank() == 2, ErrorKind::Shape, "softmax_rows: operand must be rank 2");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = 0; i < m; ++i) {
    const S* row = pa + i * n;
    S* orow = po + i * n;
    S mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int64_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const S inv = S(1) / sum;
    for (int64_t j = 0; j < n; ++j) orow[j] *= inv;
  }
  bool traced = detail::tracing<S>({&a});
  detail::finish("softmax_rows", out);
  detail::record<S>("softmax_rows", traced, out, [ai = a.impl(), oi = out.impl(), m, n] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (int64_t i = 0; i < m; ++i) {
      const S* y = oi->value.data() + i * n;
      const S* dy = oi->grad.data() + i * n;
      S* dx = ai->grad.data() + i * n;
      S dot = S(0);
      for (int64_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
  return out;
}

// Layer norm over the last dimension with learned gain/bias.
template <typename S>
Tensor<S> layer_norm_rows(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                          double eps = 1e-5) {
  check(x.rank() == 2, ErrorKind::Shape, "layer_norm_rows: operand must be rank 2");
  const int64_t m = x.dim(0), d = x.dim(1);
  check(gain.rank() == 1 && gain.dim(0) == d && bias.rank() == 1 && bias.dim(0) == d,
        ErrorKind::Shape, "layer_norm_rows: gain/bias length mismatch");
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  std::vector<S> inv_std(static_cast<size_t>(m));
  std::vector<S> xhat(static_cast<size_t>(m * d));
  const S* px = x.data();
  const S* pg = gain.data();
  const S* pb = bias.data();
  S* po = out.data();
  const S se = static_cast<S>(eps);
  for (int64_t i = 0; i < m; ++i) {
    const S* row = px + i * d;
    S mean = S(0);
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (int64_t j = 0; j < d; ++j) {
      const S dv = row[j] - mean;
      var += dv * dv;
    }
    var /= static_cast<S>(d);
    const S istd = S(1) / std::sqrt(var + se);
    inv_std[static_cast<size_t>(i)] = istd;
    for (int64_t j = 0; j < d; ++j) {
      const S h = (row[j] - mean) * istd;
      xhat[static_cast<size_t>(i * d + j)] = h;
      po[i * d + j] = pg[j] * h + pb[j];
    }
  }
  bool traced = detail::tracing<S>({&x, &gain, &bias});
  detail::finish("layer_norm", out);
  detail::record<S>("layer_norm", traced, out,
                    [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl(),
                     inv_std = std::move(inv_std), xhat = std::move(xhat), m, d] {
    if (gi->requires_grad) {
      gi->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < d; ++j)
          gi->grad[static_cast<size_t>(j)] +=
              oi->grad[static_cast<size_t>(i * d + j)] * xhat[static_cast<size_t>(i * d + j)];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < d; ++j) bi->grad[static_cast<size_t>(j)] += oi->grad[static_cast<size_t>(i * d + j)];
    }
    if (xi->requires_grad) {
      xi->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        const S istd = inv_std[static_cast<size_t>(i)];
        S sum_g = S(0), sum_gh = S(0);
        for (int64_t j = 0; j < d; ++j) {
          const S gdy = gi->value[static_cast<size_t>(j)] * oi->grad[static_cast<size_t>(i * d + j)];
          sum_g += gdy;
          sum_gh += gdy * xhat[static_cast<size_t>(i * d + j)];
        }
        const S inv_d = S(1) / static_cast<S>(d);
        for (int64_t j = 0; j < d; ++j) {
          const S gdy = gi->value[static_cast<size_t>(j)] * oi->grad[static_cast<size_t>(i * d + j)];
          const S h = xhat[static_cast<size_t>(i * d + j)];
          xi->grad[static_cast<size_t>(i * d + j)] += istd * (gdy - inv_d * sum_g - h * inv_d * sum_gh);
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Lookup
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> embedding_rows(const Tensor<S>& table, const std::vector<int64_t>& indices) {
  check(table.rank() == 2, ErrorKind::Shape, "embedding_rows: table must be rank 2");
  const int64_t k = table.dim(0), d = table.dim(1);
  for (int64_t idx : indices)
    check(idx >= 0 && idx < k, ErrorKind::Shape, "embedding_rows: index out of range");
  const int64_t m = static_cast<int64_t>(indices.size());
  Tensor<S> out = Tensor<S>::zeros({m, d});
  const S* pt = table.data();
  S* po = out.data();
  for (int64_t i = 0; i < m; ++i)
    std::copy(pt + indices[static_cast<size_t>(i)] * d, pt + (indices[static_cast<size_t>(i)] + 1) * d, po + i * d);
  bool traced = detail::tracing<S>({&table});
  detail::record<S>("embedding_rows", traced, out, [ti = table.impl(), oi = out.impl(), indices, d] {
    if (!ti->requires_grad) return;
    ti->ensure_grad();
    for (size_t i = 0; i < indices.size(); ++i)
      for (int64_t j = 0; j < d; ++j)
        ti->grad[static_cast<size_t>(indices[i] * d + j)] += oi->grad[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros({1});
  const S* pa = a.data();
  S acc = S(0);
  for (int64_t i = 0; i < a.numel(); ++i) acc += pa[i];
  out.data()[0] = acc;
  bool traced = detail::tracing<S>({&a});
  detail::finish("sum_all", out);
  detail::record<S>("sum_all", traced, out, [ai = a.impl(), oi = out.impl()] {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    const S g = oi->grad[0];
    for (size_t i = 0; i < ai->value.size(); ++i) ai->grad[i] += g;
  });
  return out;
}

// Mean absolute error. Subgradient at exact ties is 0.
template <typename S>
Tensor<S> l1_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  check(pred.shape() == target.shape(), ErrorKind::Shape, "l1_loss: shape mismatch");
  Tensor<S> out = Tensor<S>::zeros({1});
  const S* pp = pred.data();
  const S* pt = target.data();
  S acc = S(0);
  const int64_t n = pred.numel();
  for (int64_t i = 0; i < n; ++i) acc += std::abs(pp[i] - pt[i]);
  out.data()[0] = acc / static_cast<S>(n);
  bool traced = detail::tracing<S>({&pred, &target});
  detail::finish("l1_loss", out);
  detail::record<S>("l1_loss", traced, out, [pi = pred.impl(), ti = target.impl(), oi = out.impl(), n] {
    const S g = oi->grad[0] / static_cast<S>(n);
    if (pi->requires_grad) {
      pi->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const S d = pi->value[static_cast<size_t>(i)] - ti->value[static_cast<size_t>(i)];
        if (d > S(0)) pi->grad[static_cast<size_t>(i)] += g;
        else if (d < S(0)) pi->grad[static_cast<size_t>(i)] -= g;
      }
    }
    if (ti->requires_grad) {
      ti->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const S d = pi->value[static_cast<size_t>(i)] - ti->value[static_cast<size_t>(i)];
        if (d > S(0)) ti->grad[static_cast<size_t>(i)] -= g;
        else if (d < S(0)) ti->grad[static_cast<size_t>(i)] += g;
      }
    }
  });
  return out;
}

template <typename S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  check(pred.shape() == target.shape(), ErrorKind::Shape, "mse_loss: shape mismatch");
  Tensor<S> out = Tensor<S>::zeros({1});
  const S* pp = pred.data();
  const S* pt = target.data();
  S acc = S(0);
  const int64_t n = pred.numel();
  for (int64_t i = 0; i < n; ++i) {
    const S d = pp[i] - pt[i];
    acc += d * d;
  }
  out.data()[0] = acc / static_cast<S>(n);
  bool traced = detail::tracing<S>({&pred, &target});
  detail::finish("mse_loss", out);
  detail::record<S>("mse_loss", traced, out, [pi = pred.impl(), ti = target.impl(), oi = out.impl(), n] {
    const S g = oi->grad[0] * S(2) / static_cast<S>(n);
    if (pi->requires_grad) {
      pi->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        pi->grad[static_cast<size_t>(i)] += g * (pi->value[static_cast<size_t>(i)] - ti->value[static_cast<size_t>(i)]);
    }
    if (ti->requires_grad) {
      ti->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        ti->grad[static_cast<size_t>(i)] -= g * (pi->value[static_cast<size_t>(i)] - ti->value[static_cast<size_t>(i)]);
    }
  });
  return out;
}

// Mean negative log-softmax of the target class per row; log-sum-exp
// stabilized by subtracting the row max.
template <typename S>
Tensor<S> cross_entropy_rows(const Tensor<S>& logits, const std::vector<int64_t>& targets) {
  check(logits.rank() == 2, ErrorKind::Shape, "cross_entropy_rows: logits must be rank 2");
  const int64_t m = logits.dim(0), k = logits.dim(1);
  check(static_cast<int64_t>(targets.size()) == m, ErrorKind::Shape,
        "cross_entropy_rows: target count mismatch");
  for (int64_t t : targets) check(t >= 0 && t < k, ErrorKind::Shape, "cross_entropy_rows: target out of range");
  Tensor<S> out = Tensor<S>::zeros({1});
  const S* pl = logits.data();
  S acc = S(0);
  for (int64_t i = 0; i < m; ++i) {
    const S* row = pl + i * k;
    S mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    acc += (mx + std::log(sum)) - row[targets[static_cast<size_t>(i)]];
  }
  out.data()[0] = acc / static_cast<S>(m);
  bool traced = detail::tracing<S>({&logits});
  detail::finish("cross_entropy", out);
  detail::record<S>("cross_entropy", traced, out, [li = logits.impl(), oi = out.impl(), targets, m, k] {
    if (!li->requires_grad) return;
    li->ensure_grad();
    const S g = oi->grad[0] / static_cast<S>(m);
    for (int64_t i = 0; i < m; ++i) {
      const S* row = li->value.data() + i * k;
      S* drow = li->grad.data() + i * k;
      S mx = row[0];
      for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      S sum = S(0);
      for (int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
      const S inv = S(1) / sum;
      for (int64_t j = 0; j < k; ++j) {
        S p = std::exp(row[j] - mx) * inv;
        if (j == targets[static_cast<size_t>(i)]) p -= S(1);
        drow[j] += g * p;
      }
    }
  });
  return out;
}

}  // namespace cse

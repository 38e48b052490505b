// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Model building blocks on top of the tensor core: affine layers, causal
// multi-head self-attention, pre-norm transformer blocks, sinusoidal
// positions, and Adam.

#pragma once

#include <string>
#include <vector>

#include "cse/tensor.hpp"

namespace cse {

template <typename S>
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor<S>>> items;

  void add(const std::string& name, const Tensor<S>& t) {
    for (const auto& [n, _] : items)
      check(n != name, ErrorKind::State, "duplicate tensor name: " + name);
    items.emplace_back(name, t);
  }

  Tensor<S>* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
};

template <typename S>
struct Linear {
  Tensor<S> w;  // [in, out]
  Tensor<S> b;  // [out]

  static Linear init(int64_t in, int64_t out, Rng& rng) {
    Linear l;
    l.w = Tensor<S>::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    l.w.set_requires_grad(true);
    l.b = Tensor<S>::zeros({out});
    l.b.set_requires_grad(true);
    return l;
  }

  Tensor<S> forward(const Tensor<S>& x) const { return add_bias(matmul(x, w), b); }

  int64_t in_dim() const { return w.dim(0); }
  int64_t out_dim() const { return w.dim(1); }

  void set_trainable(bool t) {
    w.set_requires_grad(t);
    b.set_requires_grad(t);
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    out.add(prefix + ".w", w);
    out.add(prefix + ".b", b);
  }
};

// Additive attention mask: 0 on and below the diagonal, a large negative
// constant strictly above. Finite so the NaN guard stays quiet; after the
// row-max subtraction the masked entries underflow to exactly zero.
template <typename S>
Tensor<S> causal_attention_mask(int64_t t) {
  Tensor<S> m = Tensor<S>::zeros({t, t});
  S* p = m.data();
  const S neg = static_cast<S>(-1e30);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = i + 1; j < t; ++j) p[i * t + j] = neg;
  return m;
}

template <typename S>
struct AttentionParams {
  Linear<S> wq, wk, wv, wo;
  int64_t heads = 1;

  static AttentionParams init(int64_t width, int64_t heads, Rng& rng) {
    check(width % heads == 0, ErrorKind::Config, "attention width not divisible by head count");
    AttentionParams p;
    p.heads = heads;
    p.wq = Linear<S>::init(width, width, rng);
    p.wk = Linear<S>::init(width, width, rng);
    p.wv = Linear<S>::init(width, width, rng);
    p.wo = Linear<S>::init(width, width, rng);
    return p;
  }

  void set_trainable(bool t) {
    wq.set_trainable(t);
    wk.set_trainable(t);
    wv.set_trainable(t);
    wo.set_trainable(t);
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
  }
};

// Multi-head self-attention over x: [T, D]. With causal=true, query t attends
// to keys <= t only. Includes the output projection.
template <typename S>
Tensor<S> self_attention(const Tensor<S>& x, const AttentionParams<S>& p, bool causal) {
  const int64_t t = x.dim(0);
  const int64_t width = x.dim(1);
  check(width == p.wq.in_dim(), ErrorKind::Shape, "self_attention: width mismatch");
  const int64_t dh = width / p.heads;
  Tensor<S> q = p.wq.forward(x);
  Tensor<S> k = p.wk.forward(x);
  Tensor<S> v = p.wv.forward(x);
  Tensor<S> mask;
  if (causal) mask = causal_attention_mask<S>(t);
  std::vector<Tensor<S>> ctx;
  ctx.reserve(static_cast<size_t>(p.heads));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int64_t h = 0; h < p.heads; ++h) {
    Tensor<S> qh = slice_cols(q, h * dh, dh);
    Tensor<S> kh = slice_cols(k, h * dh, dh);
    Tensor<S> vh = slice_cols(v, h * dh, dh);
    Tensor<S> scores = scale(matmul(qh, transpose(kh)), inv_scale);
    if (causal) scores = add(scores, mask);
    Tensor<S> att = softmax_rows(scores);
    ctx.push_back(matmul(att, vh));
  }
  return p.wo.forward(concat_cols(ctx));
}

template <typename S>
struct LayerNormParams {
  Tensor<S> gain, bias;

  static LayerNormParams init(int64_t d) {
    LayerNormParams p;
    p.gain = Tensor<S>::full({d}, S(1));
    p.gain.set_requires_grad(true);
    p.bias = Tensor<S>::zeros({d});
    p.bias.set_requires_grad(true);
    return p;
  }

  Tensor<S> forward(const Tensor<S>& x) const { return layer_norm_rows(x, gain, bias); }

  void set_trainable(bool t) {
    gain.set_requires_grad(t);
    bias.set_requires_grad(t);
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    out.add(prefix + ".gain", gain);
    out.add(prefix + ".bias", bias);
  }
};

// Pre-norm residual block: x + MHA(LN(x)), then x + FFN(LN(x)). FFN hidden
// width is 4x the block width.
template <typename S>
struct TransformerBlock {
  LayerNormParams<S> ln1, ln2;
  AttentionParams<S> att;
  Linear<S> ff1, ff2;

  static TransformerBlock init(int64_t width, int64_t heads, Rng& rng) {
    TransformerBlock b;
    b.ln1 = LayerNormParams<S>::init(width);
    b.ln2 = LayerNormParams<S>::init(width);
    b.att = AttentionParams<S>::init(width, heads, rng);
    b.ff1 = Linear<S>::init(width, 4 * width, rng);
    b.ff2 = Linear<S>::init(4 * width, width, rng);
    return b;
  }

  Tensor<S> forward(const Tensor<S>& x, bool causal) const {
    Tensor<S> a = self_attention(ln1.forward(x), att, causal);
    Tensor<S> x1 = add(x, a);
    Tensor<S> f = ff2.forward(gelu(ff1.forward(ln2.forward(x1))));
    return add(x1, f);
  }

  void set_trainable(bool t) {
    ln1.set_trainable(t);
    ln2.set_trainable(t);
    att.set_trainable(t);
    ff1.set_trainable(t);
    ff2.set_trainable(t);
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    att.collect(prefix + ".att", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
  }
};

// One row of the sinusoidal position table; frame-local so the streaming path
// can generate it on the fly.
template <typename S>
void sinusoid_position_row(int64_t t, int64_t d, S* out) {
  for (int64_t i = 0; i < d; i += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
    out[i] = static_cast<S>(std::sin(static_cast<double>(t) * freq));
    if (i + 1 < d) out[i + 1] = static_cast<S>(std::cos(static_cast<double>(t) * freq));
  }
}

template <typename S>
Tensor<S> sinusoid_positions(int64_t t, int64_t d) {
  Tensor<S> out = Tensor<S>::zeros({t, d});
  for (int64_t i = 0; i < t; ++i) sinusoid_position_row<S>(i, d, out.data() + i * d);
  return out;
}

// Standard Adam with bias correction. Moment buffers parallel the parameter
// list handed to init_like; the list order must stay fixed across steps.
template <typename S>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;
  std::vector<std::vector<S>> m, v;

  void init_like(const std::vector<Tensor<S>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(static_cast<size_t>(p.numel()), S(0));
      v.emplace_back(static_cast<size_t>(p.numel()), S(0));
    }
    step_count = 0;
  }

  void step(std::vector<Tensor<S>>& params) {
    check(params.size() == m.size(), ErrorKind::State, "adam: parameter list changed size");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      Tensor<S>& p = params[pi];
      check(static_cast<size_t>(p.numel()) == m[pi].size(), ErrorKind::Shape, "adam: parameter shape changed");
      const std::vector<S>& g = p.grad();
      check(!g.empty(), ErrorKind::State, "adam: parameter has no gradient");
      S* pv = p.data();
      for (size_t i = 0; i < m[pi].size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1 * static_cast<double>(m[pi][i]) + (1.0 - beta1) * gi;
        const double vi = beta2 * static_cast<double>(v[pi][i]) + (1.0 - beta2) * gi * gi;
        m[pi][i] = static_cast<S>(mi);
        v[pi][i] = static_cast<S>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        pv[i] = static_cast<S>(static_cast<double>(pv[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

}  // namespace cse

// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// One-stage vector quantization of causal SSL features into semantic tokens:
// linear encoder E, nearest-codeword lookup, linear decoder D, the three-term
// VQ loss, and EMA codebook maintenance with dead-code restarts.
//
// Loss terms (mean-reduced over T x D):
//   reconstruction    |c - D(e)|^2,  gradients reach D and, through the
//                     straight-through path, E (and c itself: one stage);
//   codebook distance |sg[E(c)] - e|^2, computed fully detached — with EMA
//                     updates the codeword is not a gradient variable, so the
//                     term is monitored only;
//   commitment        xi * |sg[e] - E(c)|^2, gradients reach E.

#pragma once

#include <string>
#include <vector>

#include "cse/kernels.hpp"
#include "cse/nn.hpp"
#include "cse/tensor.hpp"

namespace cse {

struct VqConfig {
  int64_t codebook_size = 1024;  // K
  int64_t code_dim = 64;         // D_code
  double commitment_xi = 0.1;
  double ema_decay = 0.99;
  double ema_eps = 1e-5;
  int64_t dead_restart_updates = 50;
};

template <typename S>
struct VqOutput {
  std::vector<int64_t> indices;   // T, nearest codeword per frame
  Tensor<S> encoded;              // E(c): [T, D_code]
  Tensor<S> quantized;            // codeword rows, no gradient path
  Tensor<S> straight_through;     // value = quantized, gradient = identity to encoded
  Tensor<S> reconstructed;        // D(straight_through): [T, D_ssl]
  Tensor<S> recon_loss;           // scalars
  Tensor<S> codebook_loss;        // detached (monitored only)
  Tensor<S> commit_loss;          // already scaled by xi
};

template <typename S>
class VectorQuantizer {
 public:
  VectorQuantizer() = default;

  VectorQuantizer(int64_t feature_dim, const VqConfig& cfg, Rng& rng) : cfg_(cfg) {
    check(cfg.codebook_size >= 1, ErrorKind::Config, "vq: empty codebook");
    check(cfg.commitment_xi >= 0.0, ErrorKind::Config, "vq: commitment weight must be >= 0");
    enc_ = Linear<S>::init(feature_dim, cfg.code_dim, rng);
    dec_ = Linear<S>::init(cfg.code_dim, feature_dim, rng);
    codebook_ = Tensor<S>::randn({cfg.codebook_size, cfg.code_dim}, rng, 1.0);
    ema_n_ = Tensor<S>::full({cfg.codebook_size}, S(1));
    ema_m_ = codebook_.clone_detached();
    unused_updates_.assign(static_cast<size_t>(cfg.codebook_size), 0);
  }

  const VqConfig& config() const { return cfg_; }
  const Tensor<S>& codebook() const { return codebook_; }
  Tensor<S>& codebook() { return codebook_; }
  const Linear<S>& encoder() const { return enc_; }
  Linear<S>& encoder() { return enc_; }
  const Linear<S>& decoder() const { return dec_; }
  Linear<S>& decoder() { return dec_; }
  bool codebook_seeded() const { return seeded_; }

  Tensor<S> encode(const Tensor<S>& c) const { return enc_.forward(c); }
  Tensor<S> decode(const Tensor<S>& e) const { return dec_.forward(e); }

  // Nearest codeword per row, ties broken toward the smaller index.
  std::vector<int64_t> assign(const Tensor<S>& encoded) const {
    check(encoded.rank() == 2 && encoded.dim(1) == cfg_.code_dim, ErrorKind::Shape,
          "vq: encoded must be [T, code_dim]");
    const int64_t t = encoded.dim(0);
    const int64_t k = cfg_.codebook_size;
    std::vector<int64_t> out(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) {
      const S* row = encoded.data() + i * cfg_.code_dim;
      S best = kernels::sqdist(row, codebook_.data(), cfg_.code_dim);
      int64_t best_k = 0;
      for (int64_t kk = 1; kk < k; ++kk) {
        const S d = kernels::sqdist(row, codebook_.data() + kk * cfg_.code_dim, cfg_.code_dim);
        if (d < best) {
          best = d;
          best_k = kk;
        }
      }
      out[static_cast<size_t>(i)] = best_k;
    }
    return out;
  }

  // Quantization of already-encoded features, with the three loss terms
  // computed against `c` (the features E consumed).
  VqOutput<S> quantize(const Tensor<S>& c, const Tensor<S>& encoded) const {
    VqOutput<S> out;
    out.encoded = encoded;
    out.indices = assign(encoded);
    out.quantized = embedding_rows(codebook_, out.indices);
    out.straight_through = cse::straight_through(out.quantized, encoded);
    out.reconstructed = dec_.forward(out.straight_through);
    out.recon_loss = mse_loss(c, out.reconstructed);
    out.codebook_loss = mse_loss(detach(encoded), detach(out.quantized));
    out.commit_loss = scale(mse_loss(detach(out.quantized), encoded), cfg_.commitment_xi);
    return out;
  }

  VqOutput<S> forward(const Tensor<S>& c) const { return quantize(c, encode(c)); }

  // Seeds the codebook from rows of the first encoded batch. Rows are drawn
  // distance-weighted (k-means++ style): uniform first pick, then each next
  // codeword sampled proportionally to the squared distance to the nearest
  // codeword chosen so far. Avoids cold-start collapse where several
  // codewords land in one cluster and a lone survivor straddles the rest.
  void seed_codebook(const Tensor<S>& encoded, Rng& rng) {
    const int64_t rows = encoded.dim(0);
    check(rows >= 1, ErrorKind::Shape, "vq: cannot seed codebook from an empty batch");
    const int64_t d = cfg_.code_dim;
    std::vector<double> d2(static_cast<size_t>(rows), 0.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int64_t kk = 0; kk < cfg_.codebook_size; ++kk) {
      int64_t pick;
      if (kk == 0) {
        pick = static_cast<int64_t>(rng() % static_cast<uint64_t>(rows));
      } else {
        double total = 0.0;
        for (double v : d2) total += v;
        if (total <= 0.0) {
          pick = static_cast<int64_t>(rng() % static_cast<uint64_t>(rows));
        } else {
          double target = unit(rng) * total;
          pick = rows - 1;
          for (int64_t i = 0; i < rows; ++i) {
            target -= d2[static_cast<size_t>(i)];
            if (target <= 0.0) {
              pick = i;
              break;
            }
          }
        }
      }
      set_codeword(kk, encoded.data() + pick * d);
      unused_updates_[static_cast<size_t>(kk)] = 0;
      for (int64_t i = 0; i < rows; ++i) {
        const double dist = static_cast<double>(
            kernels::sqdist(encoded.data() + i * d, codebook_.data() + kk * d, d));
        d2[static_cast<size_t>(i)] = kk == 0 ? dist : std::min(d2[static_cast<size_t>(i)], dist);
      }
    }
    seeded_ = true;
  }

  // EMA codebook update from a batch of encoded vectors and their
  // assignments. Laplace-smoothed cluster sizes; codewords unused for
  // dead_restart_updates consecutive updates are re-seeded from random batch
  // rows. Must run outside any recording graph (mutates state).
  void ema_update(const Tensor<S>& encoded, const std::vector<int64_t>& assignments, Rng& rng) {
    check(encoded.rank() == 2 && encoded.dim(1) == cfg_.code_dim, ErrorKind::Shape,
          "vq: encoded must be [T, code_dim]");
    check(static_cast<int64_t>(assignments.size()) == encoded.dim(0), ErrorKind::Shape,
          "vq: assignment/batch size mismatch");
    const int64_t k = cfg_.codebook_size;
    const int64_t d = cfg_.code_dim;
    const double gamma = cfg_.ema_decay;

    std::vector<double> count(static_cast<size_t>(k), 0.0);
    std::vector<double> acc(static_cast<size_t>(k * d), 0.0);
    for (int64_t i = 0; i < encoded.dim(0); ++i) {
      const int64_t a = assignments[static_cast<size_t>(i)];
      check(a >= 0 && a < k, ErrorKind::Shape, "vq: assignment index out of range");
      count[static_cast<size_t>(a)] += 1.0;
      for (int64_t j = 0; j < d; ++j) acc[static_cast<size_t>(a * d + j)] += static_cast<double>(encoded.at(i, j));
    }

    double n_total = 0.0;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double n = gamma * static_cast<double>(ema_n_.data()[kk]) +
                       (1.0 - gamma) * count[static_cast<size_t>(kk)];
      ema_n_.data()[kk] = static_cast<S>(n);
      n_total += n;
      for (int64_t j = 0; j < d; ++j) {
        const double m = gamma * static_cast<double>(ema_m_.data()[kk * d + j]) +
                         (1.0 - gamma) * acc[static_cast<size_t>(kk * d + j)];
        ema_m_.data()[kk * d + j] = static_cast<S>(m);
      }
    }
    for (int64_t kk = 0; kk < k; ++kk) {
      const double n_smooth = (static_cast<double>(ema_n_.data()[kk]) + cfg_.ema_eps) /
                              (n_total + static_cast<double>(k) * cfg_.ema_eps) * n_total;
      for (int64_t j = 0; j < d; ++j)
        codebook_.data()[kk * d + j] = static_cast<S>(static_cast<double>(ema_m_.data()[kk * d + j]) / n_smooth);
    }

    // Dead-code bookkeeping and restarts.
    const int64_t rows = encoded.dim(0);
    for (int64_t kk = 0; kk < k; ++kk) {
      if (count[static_cast<size_t>(kk)] > 0.0) {
        unused_updates_[static_cast<size_t>(kk)] = 0;
        continue;
      }
      if (++unused_updates_[static_cast<size_t>(kk)] < cfg_.dead_restart_updates) continue;
      const int64_t r = static_cast<int64_t>(rng() % static_cast<uint64_t>(rows));
      for (int64_t j = 0; j < d; ++j) {
        const S v = encoded.at(r, j);
        codebook_.data()[kk * d + j] = v;
        ema_m_.data()[kk * d + j] = v;
      }
      ema_n_.data()[kk] = S(1);
      unused_updates_[static_cast<size_t>(kk)] = 0;
    }
  }

  void collect_params(const std::string& prefix, NamedTensors<S>& out) const {
    enc_.collect(prefix + ".encoder", out);
    dec_.collect(prefix + ".decoder", out);
  }

  void collect_state(const std::string& prefix, NamedTensors<S>& out) const {
    out.add(prefix + ".codebook", codebook_);
    out.add(prefix + ".ema_n", ema_n_);
    out.add(prefix + ".ema_m", ema_m_);
  }

  std::vector<int64_t>& unused_updates() { return unused_updates_; }
  const std::vector<int64_t>& unused_updates() const { return unused_updates_; }
  void set_codebook_seeded(bool v) { seeded_ = v; }

  // Sets a codeword together with its EMA state (m = value, N = 1).
  void set_codeword(int64_t k, const S* row) {
    for (int64_t j = 0; j < cfg_.code_dim; ++j) {
      codebook_.data()[k * cfg_.code_dim + j] = row[j];
      ema_m_.data()[k * cfg_.code_dim + j] = row[j];
    }
    ema_n_.data()[k] = S(1);
  }

 private:
  VqConfig cfg_;
  Linear<S> enc_, dec_;
  Tensor<S> codebook_;  // [K, D_code]; EMA-managed, never a gradient variable
  Tensor<S> ema_n_;     // [K]
  Tensor<S> ema_m_;     // [K, D_code]
  std::vector<int64_t> unused_updates_;
  bool seeded_ = false;
};

}  // namespace cse

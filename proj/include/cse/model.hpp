// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The full enhancement network. Pipeline per utterance:
//
//   stft -> log1p X'            (double-precision dsp, cast to the model type)
//   framed waveform -> causal SSL features c (weighted layer sum; prefix
//                      evaluation when the encoder is not causal itself)
//   c -> VQ (E, nearest codeword, D) -> semantic tokens
//   Z = c | c (+) emb(token) | c (+) codeword   (input variants)
//   g(Z) -> H, semantic head on H predicts the next N tokens
//   X' fused with H (FiLM: gamma(H) * alpha(X') + beta(H), or concat) -> f
//   f -> sigmoid mask in (0,1); X-hat = X' * mask
//
// The whole path is causal: outputs at frame t depend only on samples in
// frames <= t.

#pragma once

#include <string>
#include <vector>

#include "cse/dsp.hpp"
#include "cse/nn.hpp"
#include "cse/ssl.hpp"
#include "cse/vq.hpp"

namespace cse {

enum class InputVariant { RawSsl, PlusIndexEmbedding, PlusCodebookVector };
enum class FusionMode { Film, Concat };

struct ModelConfig {
  StftConfig stft;
  PseudoSslConfig ssl;
  VqConfig vq;
  int64_t g_width = 128;  // hidden units of the SSL feature encoder g
  int64_t f_width = 64;   // hidden units of the mask estimator f
  int64_t heads = 4;
  int64_t layers = 3;     // transformer blocks in each of g and f
  InputVariant variant = InputVariant::PlusCodebookVector;
  FusionMode fusion = FusionMode::Film;
  int64_t emb_dim = 64;   // token embedding width (index-embedding variant)
  int64_t predict_n = 5;  // future tokens predicted per frame

  int64_t z_width() const {
    switch (variant) {
      case InputVariant::RawSsl: return ssl.width;
      case InputVariant::PlusIndexEmbedding: return ssl.width + emb_dim;
      case InputVariant::PlusCodebookVector: return ssl.width + vq.code_dim;
    }
    return ssl.width;
  }

  void validate() const {
    stft.validate();
    check(ssl.frame_samples == stft.win_length, ErrorKind::Config,
          "model: ssl frame size must equal the stft window");
    check(predict_n >= 1, ErrorKind::Config, "model: predict_n must be >= 1");
    check(g_width % heads == 0 && f_width % heads == 0, ErrorKind::Config,
          "model: widths must be divisible by the head count");
  }
};

template <typename S>
struct ForwardResult {
  Tensor<S> x_prime;     // [T, F] noisy log1p features (constant input)
  Tensor<S> x_hat;       // [T, F] enhanced features
  Tensor<S> mask;        // [T, F] in (0, 1)
  Tensor<S> h;           // [T, D_g]
  Tensor<S> sem_logits;  // [T, N*K]
  Tensor<S> c;           // [T, D_ssl]
  VqOutput<S> vq;
};

template <typename S>
Tensor<S> logmag_to_tensor(const LogMagFeatures& f) {
  Tensor<S> t = Tensor<S>::zeros({f.frames, f.bins});
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(f.data[static_cast<size_t>(i)]);
  return t;
}

// Raw (unwindowed) frame rows, the same frames the STFT covers.
template <typename S>
Tensor<S> frames_to_tensor(const WaveBuffer& wave, const StftConfig& cfg) {
  const int64_t t_total = cfg.frame_count(wave.size());
  check(t_total >= 1, ErrorKind::Shape, "frames_to_tensor: signal shorter than one window");
  Tensor<S> t = Tensor<S>::zeros({t_total, cfg.win_length});
  for (int64_t i = 0; i < t_total; ++i)
    for (int64_t j = 0; j < cfg.win_length; ++j)
      t.data()[i * cfg.win_length + j] =
          static_cast<S>(wave.samples[static_cast<size_t>(i * cfg.hop_length + j)]);
  return t;
}

template <typename S>
class SeModel {
 public:
  SeModel() = default;

  SeModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    ssl_ = PseudoSslEncoder<S>(cfg_.ssl, rng);
    layer_logits_ = Tensor<S>::zeros({cfg_.ssl.layer_count});
    layer_logits_.set_requires_grad(true);
    vq_ = VectorQuantizer<S>(cfg_.ssl.width, cfg_.vq, rng);
    if (cfg_.variant == InputVariant::PlusIndexEmbedding) {
      emb_table_ = Tensor<S>::randn({cfg_.vq.codebook_size, cfg_.emb_dim}, rng,
                                    1.0 / std::sqrt(static_cast<double>(cfg_.emb_dim)));
      emb_table_.set_requires_grad(true);
    }
    g_in_ = Linear<S>::init(cfg_.z_width(), cfg_.g_width, rng);
    for (int64_t i = 0; i < cfg_.layers; ++i)
      g_blocks_.push_back(TransformerBlock<S>::init(cfg_.g_width, cfg_.heads, rng));
    if (cfg_.fusion == FusionMode::Film) {
      film_alpha_ = Linear<S>::init(cfg_.stft.bins(), cfg_.f_width, rng);
      film_gamma_ = Linear<S>::init(cfg_.g_width, cfg_.f_width, rng);
      film_beta_ = Linear<S>::init(cfg_.g_width, cfg_.f_width, rng);
    } else {
      concat_in_ = Linear<S>::init(cfg_.stft.bins() + cfg_.g_width, cfg_.f_width, rng);
    }
    for (int64_t i = 0; i < cfg_.layers; ++i)
      f_blocks_.push_back(TransformerBlock<S>::init(cfg_.f_width, cfg_.heads, rng));
    mask_out_ = Linear<S>::init(cfg_.f_width, cfg_.stft.bins(), rng);
    // Start near a pass-through mask (sigmoid(2) ~ 0.88): the estimator then
    // learns to suppress noise instead of first unlearning blanket
    // attenuation of speech.
    for (S& b : mask_out_.b.values()) b = S(2);
    sem_head_ = Linear<S>::init(cfg_.g_width, cfg_.predict_n * cfg_.vq.codebook_size, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  bool causal() const { return cfg_.ssl.causal; }

  ForwardResult<S> forward_features(const Tensor<S>& x_prime, const Tensor<S>& frames,
                                    const FeatureStack<S>* external_ssl = nullptr) const {
    const int64_t t_total = x_prime.dim(0);
    check(frames.dim(0) == t_total, ErrorKind::Shape,
          "forward: frame count mismatch between features and waveform frames");

    ForwardResult<S> out;
    out.x_prime = x_prime;

    // Causal SSL features. External stacks are taken as-is (their producer is
    // responsible for causal computation); the built-in encoder uses a single
    // pass when causal by construction — bit-identical to prefix evaluation —
    // and falls back to per-frame prefix evaluation otherwise.
    if (external_ssl != nullptr) {
      check(external_ssl->frames() == t_total, ErrorKind::Shape,
            "forward: external feature frame count mismatch");
      check(external_ssl->width() == cfg_.ssl.width, ErrorKind::Shape,
            "forward: external feature width mismatch");
      out.c = weighted_sum(*external_ssl, layer_logits_);
    } else if (ssl_.causal()) {
      out.c = weighted_sum(ssl_.forward(frames), layer_logits_);
    } else {
      out.c = causal_features_prefix(ssl_, frames, layer_logits_);
    }

    out.vq = vq_.forward(out.c);

    Tensor<S> z;
    switch (cfg_.variant) {
      case InputVariant::RawSsl:
        z = out.c;
        break;
      case InputVariant::PlusIndexEmbedding:
        z = concat_cols<S>({out.c, embedding_rows(emb_table_, out.vq.indices)});
        break;
      case InputVariant::PlusCodebookVector:
        z = concat_cols<S>({out.c, out.vq.straight_through});
        break;
    }

    const bool causal_blocks = cfg_.ssl.causal;
    Tensor<S> h = add(g_in_.forward(z), sinusoid_positions<S>(t_total, cfg_.g_width));
    for (const auto& blk : g_blocks_) h = blk.forward(h, causal_blocks);
    out.h = h;
    out.sem_logits = sem_head_.forward(h);

    Tensor<S> fused;
    if (cfg_.fusion == FusionMode::Film) {
      fused = add(mul(film_gamma_.forward(h), film_alpha_.forward(x_prime)), film_beta_.forward(h));
    } else {
      fused = concat_in_.forward(concat_cols<S>({x_prime, h}));
    }
    Tensor<S> f = add(fused, sinusoid_positions<S>(t_total, cfg_.f_width));
    for (const auto& blk : f_blocks_) f = blk.forward(f, causal_blocks);
    out.mask = sigmoid(mask_out_.forward(f));
    out.x_hat = mul(x_prime, out.mask);
    return out;
  }

  ForwardResult<S> forward(const WaveBuffer& noisy,
                           const FeatureStack<S>* external_ssl = nullptr) const {
    SpectrogramComplex spec = stft(noisy, cfg_.stft);
    Tensor<S> x_prime = logmag_to_tensor<S>(log1p_features(spec));
    Tensor<S> frames = frames_to_tensor<S>(noisy, cfg_.stft);
    return forward_features(x_prime, frames, external_ssl);
  }

  // Every named tensor, trainable or not (checkpoint surface).
  void collect_params(NamedTensors<S>& out) const {
    ssl_.collect("ssl", out);
    out.add("layer_logits", layer_logits_);
    vq_.collect_params("vq", out);
    if (cfg_.variant == InputVariant::PlusIndexEmbedding) out.add("emb.table", emb_table_);
    g_in_.collect("g.in", out);
    for (size_t i = 0; i < g_blocks_.size(); ++i)
      g_blocks_[i].collect("g.block" + std::to_string(i), out);
    if (cfg_.fusion == FusionMode::Film) {
      film_alpha_.collect("film.alpha", out);
      film_gamma_.collect("film.gamma", out);
      film_beta_.collect("film.beta", out);
    } else {
      concat_in_.collect("fuse.concat_in", out);
    }
    for (size_t i = 0; i < f_blocks_.size(); ++i)
      f_blocks_[i].collect("f.block" + std::to_string(i), out);
    mask_out_.collect("f.mask_out", out);
    sem_head_.collect("sem.head", out);
  }

  // Non-gradient state (EMA codebook machinery).
  void collect_state(NamedTensors<S>& out) const { vq_.collect_state("vq", out); }

  std::vector<Tensor<S>> trainable_params() const {
    NamedTensors<S> named;
    collect_params(named);
    std::vector<Tensor<S>> out;
    for (auto& [name, t] : named.items)
      if (t.requires_grad()) out.push_back(t);
    return out;
  }

  VectorQuantizer<S>& vq() { return vq_; }
  const VectorQuantizer<S>& vq() const { return vq_; }
  PseudoSslEncoder<S>& ssl() { return ssl_; }
  const PseudoSslEncoder<S>& ssl() const { return ssl_; }
  const Tensor<S>& layer_logits() const { return layer_logits_; }
  Tensor<S>& layer_logits() { return layer_logits_; }
  const Linear<S>& g_in() const { return g_in_; }
  const std::vector<TransformerBlock<S>>& g_blocks() const { return g_blocks_; }
  const Linear<S>& film_alpha() const { return film_alpha_; }
  const Linear<S>& film_gamma() const { return film_gamma_; }
  const Linear<S>& film_beta() const { return film_beta_; }
  const Linear<S>& concat_in() const { return concat_in_; }
  const std::vector<TransformerBlock<S>>& f_blocks() const { return f_blocks_; }
  const Linear<S>& mask_out() const { return mask_out_; }
  const Linear<S>& sem_head() const { return sem_head_; }
  const Tensor<S>& emb_table() const { return emb_table_; }

 private:
  ModelConfig cfg_;
  PseudoSslEncoder<S> ssl_;
  Tensor<S> layer_logits_;
  VectorQuantizer<S> vq_;
  Tensor<S> emb_table_;
  Linear<S> g_in_;
  std::vector<TransformerBlock<S>> g_blocks_;
  Linear<S> film_alpha_, film_gamma_, film_beta_;
  Linear<S> concat_in_;
  std::vector<TransformerBlock<S>> f_blocks_;
  Linear<S> mask_out_;
  Linear<S> sem_head_;
};

// FiLM fusion in isolation (for tests and the streaming path):
// gamma(h) * alpha(x') + beta(h), rowwise.
template <typename S>
Tensor<S> film_fuse(const Tensor<S>& x_prime, const Tensor<S>& h, const Linear<S>& alpha,
                    const Linear<S>& gamma, const Linear<S>& beta) {
  return add(mul(gamma.forward(h), alpha.forward(x_prime)), beta.forward(h));
}

// Batch enhancement: forward, then invert the features with the noisy phase.
template <typename S>
WaveBuffer enhance_batch(const SeModel<S>& model, const WaveBuffer& noisy,
                         const FeatureStack<S>* external_ssl = nullptr) {
  SpectrogramComplex spec = stft(noisy, model.config().stft);
  Tensor<S> x_prime = logmag_to_tensor<S>(log1p_features(spec));
  Tensor<S> frames = frames_to_tensor<S>(noisy, model.config().stft);
  ForwardResult<S> fwd = model.forward_features(x_prime, frames, external_ssl);
  LogMagFeatures enhanced;
  enhanced.frames = spec.frames;
  enhanced.bins = spec.bins;
  enhanced.data.resize(spec.data.size());
  for (size_t i = 0; i < enhanced.data.size(); ++i)
    enhanced.data[i] = static_cast<double>(fwd.x_hat.data()[static_cast<int64_t>(i)]);
  return reconstruct_from_logmag(enhanced, spec);
}

}  // namespace cse

// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/streaming.hpp"

#include <cmath>

namespace cse {

StreamingEnhancer::StreamingEnhancer(const SeModel<float>& model)
    : model_(&model),
      stft_(model.config().stft),
      framer_(model.config().stft),
      ola_(model.config().stft) {
  check(model.causal(), ErrorKind::Config,
        "streaming: model must be causal (prefix-mode encoders cannot stream)");
  ssl_caches_.resize(model.ssl().blocks().size());
  g_caches_.resize(model.g_blocks().size());
  f_caches_.resize(model.f_blocks().size());
  conv_history_.assign(static_cast<size_t>(model.config().ssl.conv_kernel - 1),
                       std::vector<float>(static_cast<size_t>(model.config().ssl.width), 0.0f));
}

// One frame through one causal transformer block, attending over the cached
// prefix. Row-local ops reuse the batch code paths on [1, D] tensors; the
// attention reductions are bit-compatible with the masked batch form.
Tensor<float> StreamingEnhancer::block_step(const TransformerBlock<float>& blk, BlockCache& cache,
                                            const Tensor<float>& x_row) {
  const int64_t width = x_row.dim(1);
  const int64_t heads = blk.att.heads;
  const int64_t dh = width / heads;

  Tensor<float> h = blk.ln1.forward(x_row);
  Tensor<float> q = blk.att.wq.forward(h);
  Tensor<float> k = blk.att.wk.forward(h);
  Tensor<float> v = blk.att.wv.forward(h);
  cache.k_rows.insert(cache.k_rows.end(), k.data(), k.data() + width);
  cache.v_rows.insert(cache.v_rows.end(), v.data(), v.data() + width);
  const int64_t t1 = static_cast<int64_t>(cache.k_rows.size()) / width;
  Tensor<float> k_all = Tensor<float>::from({t1, width}, cache.k_rows);
  Tensor<float> v_all = Tensor<float>::from({t1, width}, cache.v_rows);

  std::vector<Tensor<float>> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int64_t hh = 0; hh < heads; ++hh) {
    Tensor<float> qh = slice_cols(q, hh * dh, dh);
    Tensor<float> kh = slice_cols(k_all, hh * dh, dh);
    Tensor<float> vh = slice_cols(v_all, hh * dh, dh);
    Tensor<float> scores = scale(matmul(qh, transpose(kh)), inv_scale);
    Tensor<float> att = softmax_rows(scores);
    ctx.push_back(matmul(att, vh));
  }
  Tensor<float> a = blk.att.wo.forward(concat_cols(ctx));
  Tensor<float> x1 = add(x_row, a);
  Tensor<float> f = blk.ff2.forward(gelu(blk.ff1.forward(blk.ln2.forward(x1))));
  return add(x1, f);
}

void StreamingEnhancer::process_frame(const StreamFrame& frame) {
  const SeModel<float>& m = *model_;
  const ModelConfig& cfg = m.config();
  const int64_t t = frame_count_;

  // log1p features of this frame (same arithmetic as the batch path).
  const int64_t bins = stft_.bins();
  Tensor<float> x_prime = Tensor<float>::zeros({1, bins});
  for (int64_t f = 0; f < bins; ++f)
    x_prime.data()[f] = static_cast<float>(std::log1p(std::abs(frame.bins[static_cast<size_t>(f)])));

  // Pseudo-ssl front-end.
  Tensor<float> raw = Tensor<float>::zeros({1, cfg.ssl.frame_samples});
  for (int64_t i = 0; i < cfg.ssl.frame_samples; ++i)
    raw.data()[i] = static_cast<float>(frame.raw[static_cast<size_t>(i)]);
  Tensor<float> proj = gelu(m.ssl().frontend_proj().forward(raw));
  std::vector<Tensor<float>> taps;
  taps.push_back(proj);
  for (const auto& hist : conv_history_)
    taps.push_back(Tensor<float>::from({1, cfg.ssl.width}, hist));
  Tensor<float> x = m.ssl().frontend_conv().forward(concat_cols(taps));
  // Slide the convolution history (most recent first).
  for (size_t i = conv_history_.size(); i-- > 1;) conv_history_[i] = conv_history_[i - 1];
  if (!conv_history_.empty()) conv_history_[0] = proj.values();

  Tensor<float> pos = Tensor<float>::zeros({1, cfg.ssl.width});
  sinusoid_position_row<float>(t, cfg.ssl.width, pos.data());
  x = m.ssl().frontend_ln().forward(add(x, pos));

  FeatureStack<float> stack;
  for (size_t b = 0; b < m.ssl().blocks().size(); ++b) {
    x = block_step(m.ssl().blocks()[b], ssl_caches_[b], x);
    stack.layers.push_back(x);
  }
  Tensor<float> c = weighted_sum(stack, m.layer_logits());

  // VQ of this frame.
  Tensor<float> encoded = m.vq().encode(c);
  std::vector<int64_t> idx = m.vq().assign(encoded);
  Tensor<float> codeword = embedding_rows(m.vq().codebook(), idx);

  Tensor<float> z;
  switch (cfg.variant) {
    case InputVariant::RawSsl:
      z = c;
      break;
    case InputVariant::PlusIndexEmbedding:
      z = concat_cols<float>({c, embedding_rows(m.emb_table(), idx)});
      break;
    case InputVariant::PlusCodebookVector:
      z = concat_cols<float>({c, codeword});
      break;
  }

  Tensor<float> gpos = Tensor<float>::zeros({1, cfg.g_width});
  sinusoid_position_row<float>(t, cfg.g_width, gpos.data());
  Tensor<float> h = add(m.g_in().forward(z), gpos);
  for (size_t b = 0; b < m.g_blocks().size(); ++b) h = block_step(m.g_blocks()[b], g_caches_[b], h);

  Tensor<float> fused;
  if (cfg.fusion == FusionMode::Film) {
    fused = film_fuse(x_prime, h, m.film_alpha(), m.film_gamma(), m.film_beta());
  } else {
    fused = m.concat_in().forward(concat_cols<float>({x_prime, h}));
  }
  Tensor<float> fpos = Tensor<float>::zeros({1, cfg.f_width});
  sinusoid_position_row<float>(t, cfg.f_width, fpos.data());
  Tensor<float> f = add(fused, fpos);
  for (size_t b = 0; b < m.f_blocks().size(); ++b) f = block_step(m.f_blocks()[b], f_caches_[b], f);
  Tensor<float> mask = sigmoid(m.mask_out().forward(f));
  Tensor<float> x_hat = mul(x_prime, mask);

  // Back to the complex domain with the noisy phase (same expressions as the
  // batch reconstruction).
  std::vector<std::complex<double>> out_bins(static_cast<size_t>(bins));
  for (int64_t fb = 0; fb < bins; ++fb) {
    const double mag = std::max(std::expm1(static_cast<double>(x_hat.data()[fb])), 0.0);
    const std::complex<double> noisy = frame.bins[static_cast<size_t>(fb)];
    const double nmag = std::abs(noisy);
    out_bins[static_cast<size_t>(fb)] =
        nmag > 1e-300 ? noisy * (mag / nmag) : std::complex<double>(mag, 0.0);
  }
  ola_.push_frame(out_bins.data());
  ++frame_count_;
}

std::vector<double> StreamingEnhancer::push(const double* samples, int64_t count) {
  std::vector<double> out;
  for (auto& frame : framer_.push(samples, count)) {
    process_frame(frame);
    for (double s : ola_.pop_ready()) out.push_back(s);
  }
  return out;
}

std::vector<double> StreamingEnhancer::flush() { return ola_.flush(); }

WaveBuffer enhance_streaming(const SeModel<float>& model, const WaveBuffer& noisy,
                             int64_t chunk_samples) {
  check(chunk_samples >= 1, ErrorKind::Config, "streaming: chunk must be at least one sample");
  StreamingEnhancer enhancer(model);
  WaveBuffer out;
  out.sample_rate = noisy.sample_rate;
  int64_t pos = 0;
  while (pos < noisy.size()) {
    const int64_t chunk = std::min(chunk_samples, noisy.size() - pos);
    for (double s : enhancer.push(noisy.samples.data() + pos, chunk)) out.samples.push_back(s);
    pos += chunk;
  }
  for (double s : enhancer.flush()) out.samples.push_back(s);
  return out;
}

}  // namespace cse

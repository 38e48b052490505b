// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Self-supervised-style feature extraction with causality. A small trainable
// encoder stands in for a pretrained SSL model: frame projection + causal
// temporal convolution front-end, then per-layer causal transformer outputs.
// Layer outputs are combined by a trainable softmax-weighted sum, and the
// per-frame prefix evaluation (run the encoder on frames <= t, keep the last
// output frame) realizes causal features for encoders that are not causal by
// construction. External feature stacks computed offline can be injected via
// the tensor container format.

#pragma once

#include <string>
#include <vector>

#include "cse/container.hpp"
#include "cse/nn.hpp"
#include "cse/tensor.hpp"

namespace cse {

struct PseudoSslConfig {
  int64_t layer_count = 4;    // I
  int64_t width = 128;        // D_ssl
  int64_t heads = 4;
  int64_t conv_kernel = 3;    // causal, across frames
  int64_t frame_samples = 640;
  bool causal = true;
  bool freeze_frontend = true;
};

template <typename S>
struct FeatureStack {
  std::vector<Tensor<S>> layers;  // I tensors of [T, D_ssl]

  int64_t layer_count() const { return static_cast<int64_t>(layers.size()); }
  int64_t frames() const { return layers.empty() ? 0 : layers[0].dim(0); }
  int64_t width() const { return layers.empty() ? 0 : layers[0].dim(1); }
};

template <typename S>
class PseudoSslEncoder {
 public:
  PseudoSslEncoder() = default;

  PseudoSslEncoder(const PseudoSslConfig& cfg, Rng& rng) : cfg_(cfg) {
    check(cfg.layer_count >= 1, ErrorKind::Config, "pseudo-ssl: need at least one layer");
    in_proj_ = Linear<S>::init(cfg.frame_samples, cfg.width, rng);
    conv_ = Linear<S>::init(cfg.conv_kernel * cfg.width, cfg.width, rng);
    in_ln_ = LayerNormParams<S>::init(cfg.width);
    for (int64_t i = 0; i < cfg.layer_count; ++i)
      blocks_.push_back(TransformerBlock<S>::init(cfg.width, cfg.heads, rng));
    apply_freeze();
  }

  const PseudoSslConfig& config() const { return cfg_; }
  bool causal() const { return cfg_.causal; }
  void set_causal(bool c) { cfg_.causal = c; }

  // frames: [T, frame_samples] raw (unwindowed) sample rows, the same frames
  // the STFT consumes.
  FeatureStack<S> forward(const Tensor<S>& frames) const {
    check(frames.rank() == 2 && frames.dim(1) == cfg_.frame_samples, ErrorKind::Shape,
          "pseudo-ssl: frames must be [T, frame_samples]");
    const int64_t t = frames.dim(0);
    check(t >= 1, ErrorKind::Shape, "pseudo-ssl: empty input");
    Tensor<S> x = gelu(in_proj_.forward(frames));
    std::vector<Tensor<S>> taps;
    taps.reserve(static_cast<size_t>(cfg_.conv_kernel));
    for (int64_t j = 0; j < cfg_.conv_kernel; ++j)
      taps.push_back(j == 0 ? x : shift_rows_down(x, j));
    x = conv_.forward(concat_cols(taps));
    x = in_ln_.forward(add(x, sinusoid_positions<S>(t, cfg_.width)));
    FeatureStack<S> stack;
    for (const auto& blk : blocks_) {
      x = blk.forward(x, cfg_.causal);
      stack.layers.push_back(x);
    }
    return stack;
  }

  void collect(const std::string& prefix, NamedTensors<S>& out) const {
    in_proj_.collect(prefix + ".frontend.proj", out);
    conv_.collect(prefix + ".frontend.conv", out);
    in_ln_.collect(prefix + ".frontend.ln", out);
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
  }

  const Linear<S>& frontend_proj() const { return in_proj_; }
  const Linear<S>& frontend_conv() const { return conv_; }
  const LayerNormParams<S>& frontend_ln() const { return in_ln_; }
  const std::vector<TransformerBlock<S>>& blocks() const { return blocks_; }

 private:
  void apply_freeze() {
    const bool trainable = !cfg_.freeze_frontend;
    in_proj_.set_trainable(trainable);
    conv_.set_trainable(trainable);
    in_ln_.set_trainable(trainable);
  }

  PseudoSslConfig cfg_;
  Linear<S> in_proj_, conv_;
  LayerNormParams<S> in_ln_;
  std::vector<TransformerBlock<S>> blocks_;
};

// s(X) = sum_i w_i s_i(X) with w = softmax(logits): a convex combination.
template <typename S>
Tensor<S> weighted_sum(const FeatureStack<S>& stack, const Tensor<S>& logits) {
  check(logits.rank() == 1 && logits.dim(0) == stack.layer_count(), ErrorKind::Shape,
        "weighted_sum: logits length must equal layer count");
  Tensor<S> w = softmax_rows(reshape(logits, {1, stack.layer_count()}));
  Tensor<S> out;
  for (int64_t i = 0; i < stack.layer_count(); ++i) {
    Tensor<S> wi = slice_cols(w, i, 1);
    Tensor<S> term = mul_scalar_tensor(stack.layers[static_cast<size_t>(i)], wi);
    out = i == 0 ? term : add(out, term);
  }
  return out;
}

// Causal features by prefix evaluation: for each t, run the encoder on
// frames <= t and keep the weighted sum of the last output frame. O(T^2);
// identical (bit-exact) to one full pass when the encoder is causal by
// construction, and the faithful fallback when it is not.
template <typename S>
Tensor<S> causal_features_prefix(const PseudoSslEncoder<S>& encoder, const Tensor<S>& frames,
                                 const Tensor<S>& layer_logits) {
  check(frames.rank() == 2 && frames.dim(0) >= 1, ErrorKind::Shape,
        "causal_features_prefix: empty input");
  const int64_t t_total = frames.dim(0);
  std::vector<Tensor<S>> rows;
  rows.reserve(static_cast<size_t>(t_total));
  for (int64_t t = 0; t < t_total; ++t) {
    FeatureStack<S> stack = encoder.forward(slice_rows(frames, 0, t + 1));
    FeatureStack<S> last;
    for (auto& layer : stack.layers) last.layers.push_back(slice_rows(layer, t, 1));
    rows.push_back(weighted_sum(last, layer_logits));
  }
  return concat_rows(rows);
}

// External feature stacks: layers named "layer.0" ... "layer.I-1" in the
// tensor container format, each [T, D_ssl] f32.
inline void save_feature_stack(const std::string& path, const FeatureStack<float>& stack) {
  TensorFileWriter writer;
  for (int64_t i = 0; i < stack.layer_count(); ++i) {
    const auto& layer = stack.layers[static_cast<size_t>(i)];
    writer.add_f32("layer." + std::to_string(i), layer.shape(), layer.data());
  }
  writer.write(path);
}

inline FeatureStack<float> load_feature_stack(const std::string& path) {
  TensorFileReader reader(path);
  FeatureStack<float> stack;
  for (int64_t i = 0;; ++i) {
    const std::string name = "layer." + std::to_string(i);
    if (!reader.has(name)) {
      check(i > 0, ErrorKind::Format, "feature stack: missing tensor 'layer.0' in " + path);
      break;
    }
    const auto& info = reader.info(name);
    check(info.dims.size() == 2, ErrorKind::Format, "feature stack: layer must be rank 2");
    Tensor<float> layer = Tensor<float>::from(info.dims, reader.f32(name));
    if (i > 0)
      check(layer.dim(0) == stack.frames() && layer.dim(1) == stack.width(), ErrorKind::Format,
            "feature stack: inconsistent layer shapes in " + path);
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

}  // namespace cse

// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Incremental (chunked) enhancement. Frames come from the streaming framer;
// each transformer layer keeps per-frame key/value caches, the temporal
// convolution keeps its short history, and overlap-add synthesis emits
// samples as soon as no later frame can touch them. Because every kernel's
// accumulation order depends only on the reduction length (and attention
// tails are exact zeros), the output matches batch enhancement bit for bit.

#pragma once

#include <memory>
#include <vector>

#include "cse/dsp.hpp"
#include "cse/model.hpp"

namespace cse {

class StreamingEnhancer {
 public:
  explicit StreamingEnhancer(const SeModel<float>& model);

  // Feeds input samples; returns enhanced samples that became final.
  std::vector<double> push(const double* samples, int64_t count);
  std::vector<double> push(const std::vector<double>& samples) {
    return push(samples.data(), static_cast<int64_t>(samples.size()));
  }
  // Drains the overlap-add tail after the last sample.
  std::vector<double> flush();

  int64_t frames_processed() const { return frame_count_; }

 private:
  struct BlockCache {
    std::vector<float> k_rows;  // [t, width], row-major
    std::vector<float> v_rows;
  };

  Tensor<float> block_step(const TransformerBlock<float>& blk, BlockCache& cache,
                           const Tensor<float>& x_row);
  void process_frame(const StreamFrame& frame);

  const SeModel<float>* model_;
  StftConfig stft_;
  StreamFramer framer_;
  OlaSynthesizer ola_;
  std::vector<BlockCache> ssl_caches_, g_caches_, f_caches_;
  std::vector<std::vector<float>> conv_history_;  // most recent first
  int64_t frame_count_ = 0;
};

// Convenience wrapper: run the whole utterance through the streaming path in
// fixed-size chunks.
WaveBuffer enhance_streaming(const SeModel<float>& model, const WaveBuffer& noisy,
                             int64_t chunk_samples);

}  // namespace cse

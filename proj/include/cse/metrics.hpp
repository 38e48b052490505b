// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Desk-scale quality and prediction metrics: SI-SDR, log-spectral distance,
// and N-step token prediction accuracy.

#pragma once

#include <map>
#include <vector>

#include "cse/audio.hpp"
#include "cse/dsp.hpp"
#include "cse/tensor.hpp"

namespace cse {

// Scale-invariant SDR in dB: the estimate is projected onto the reference,
// 10*log10(|target|^2 / |residual|^2), capped at +60 dB. No mean removal.
double si_sdr_db(const WaveBuffer& reference, const WaveBuffer& estimate);

// RMS over frames of the per-frame RMS difference of 20*log10 magnitude
// spectra, with magnitudes floored at 1e-8.
double log_spectral_distance(const WaveBuffer& reference, const WaveBuffer& estimate,
                             const StftConfig& config = StftConfig{});

struct TokenAccuracy {
  std::vector<double> per_n;  // accuracy of predicting e_{t+n}, n = 1..N
  double mean = 0.0;          // over all valid (t, n)
  int64_t positions = 0;      // valid (t, n) pairs counted
};

// logits: [T, N*K] (N groups of K classes per frame); tokens: the realized
// indices e_1..e_T from VQ. Prediction at (t, n) is argmax of group n at
// frame t, compared against e_{t+n}. Requires T > N.
TokenAccuracy token_accuracy(const Tensor<float>& logits, int64_t predict_n, int64_t codebook_size,
                             const std::vector<int64_t>& tokens);
TokenAccuracy token_accuracy(const Tensor<double>& logits, int64_t predict_n, int64_t codebook_size,
                             const std::vector<int64_t>& tokens);

}  // namespace cse

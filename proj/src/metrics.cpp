// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cse/error.hpp"

namespace cse {

double si_sdr_db(const WaveBuffer& reference, const WaveBuffer& estimate) {
  check(reference.size() == estimate.size(), ErrorKind::Shape, "si_sdr: length mismatch");
  const int64_t n = reference.size();
  check(n > 0, ErrorKind::Shape, "si_sdr: empty signals");
  double dot = 0.0, ref_energy = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    dot += estimate.samples[static_cast<size_t>(i)] * reference.samples[static_cast<size_t>(i)];
    ref_energy += reference.samples[static_cast<size_t>(i)] * reference.samples[static_cast<size_t>(i)];
  }
  check(ref_energy > 0.0, ErrorKind::State, "si_sdr: zero reference");
  const double alpha = dot / ref_energy;
  double target_energy = 0.0, residual_energy = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = alpha * reference.samples[static_cast<size_t>(i)];
    const double r = estimate.samples[static_cast<size_t>(i)] - t;
    target_energy += t * t;
    residual_energy += r * r;
  }
  if (residual_energy <= 0.0) return 60.0;
  return std::min(60.0, 10.0 * std::log10(target_energy / residual_energy));
}

double log_spectral_distance(const WaveBuffer& reference, const WaveBuffer& estimate,
                             const StftConfig& config) {
  check(reference.size() == estimate.size(), ErrorKind::Shape, "lsd: length mismatch");
  SpectrogramComplex ref = stft(reference, config);
  SpectrogramComplex est = stft(estimate, config);
  double frame_acc = 0.0;
  for (int64_t t = 0; t < ref.frames; ++t) {
    double bin_acc = 0.0;
    for (int64_t f = 0; f < ref.bins; ++f) {
      const double a = 20.0 * std::log10(std::max(std::abs(ref.at(t, f)), 1e-8));
      const double b = 20.0 * std::log10(std::max(std::abs(est.at(t, f)), 1e-8));
      bin_acc += (a - b) * (a - b);
    }
    frame_acc += bin_acc / static_cast<double>(ref.bins);
  }
  return std::sqrt(frame_acc / static_cast<double>(ref.frames));
}

namespace {

template <typename S>
TokenAccuracy token_accuracy_impl(const Tensor<S>& logits, int64_t predict_n,
                                  int64_t codebook_size, const std::vector<int64_t>& tokens) {
  const int64_t t_total = logits.dim(0);
  check(logits.rank() == 2 && logits.dim(1) == predict_n * codebook_size, ErrorKind::Shape,
        "token_accuracy: logits must be [T, N*K]");
  check(static_cast<int64_t>(tokens.size()) == t_total, ErrorKind::Shape,
        "token_accuracy: token count must equal frame count");
  check(t_total > predict_n, ErrorKind::Shape, "token_accuracy: no valid positions (T <= N)");

  TokenAccuracy acc;
  acc.per_n.assign(static_cast<size_t>(predict_n), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(predict_n), 0);
  for (int64_t t = 0; t + predict_n < t_total; ++t) {
    for (int64_t n = 1; n <= predict_n; ++n) {
      const S* group = logits.data() + t * logits.dim(1) + (n - 1) * codebook_size;
      int64_t best = 0;
      for (int64_t k = 1; k < codebook_size; ++k)
        if (group[k] > group[best]) best = k;
      const bool hit = best == tokens[static_cast<size_t>(t + n)];
      acc.per_n[static_cast<size_t>(n - 1)] += hit ? 1.0 : 0.0;
      ++counts[static_cast<size_t>(n - 1)];
    }
  }
  double total_hits = 0.0;
  for (size_t i = 0; i < acc.per_n.size(); ++i) {
    total_hits += acc.per_n[i];
    acc.positions += counts[i];
    acc.per_n[i] /= static_cast<double>(counts[i]);
  }
  acc.mean = total_hits / static_cast<double>(acc.positions);
  return acc;
}

}  // namespace

TokenAccuracy token_accuracy(const Tensor<float>& logits, int64_t predict_n, int64_t codebook_size,
                             const std::vector<int64_t>& tokens) {
  return token_accuracy_impl(logits, predict_n, codebook_size, tokens);
}
TokenAccuracy token_accuracy(const Tensor<double>& logits, int64_t predict_n, int64_t codebook_size,
                             const std::vector<int64_t>& tokens) {
  return token_accuracy_impl(logits, predict_n, codebook_size, tokens);
}

}  // namespace cse

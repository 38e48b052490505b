// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// STFT analysis/synthesis and log1p magnitude features. Frames are strictly
// causal: frame t covers samples [t*hop, t*hop + win), no center padding.
// Analysis and synthesis both use the square root of a periodic Hann window,
// so the product of the two satisfies constant overlap-add at hop = win/2 and
// weighted OLA with window-sum normalization reconstructs exactly.

#pragma once

#include <complex>
#include <vector>

#include "cse/audio.hpp"
#include "cse/error.hpp"

namespace cse {

struct StftConfig {
  int64_t win_length = 640;
  int64_t hop_length = 320;
  int64_t fft_size = 1024;

  int64_t bins() const { return fft_size / 2 + 1; }
  void validate() const;
  // The sqrt-Hann analysis/synthesis window.
  std::vector<double> window() const;
  int64_t frame_count(int64_t samples) const {
    return samples < win_length ? 0 : 1 + (samples - win_length) / hop_length;
  }
};

struct SpectrogramComplex {
  int64_t frames = 0;
  int64_t bins = 0;
  std::vector<std::complex<double>> data;  // row-major frames x bins
  StftConfig config;

  std::complex<double>& at(int64_t t, int64_t f) { return data[static_cast<size_t>(t * bins + f)]; }
  const std::complex<double>& at(int64_t t, int64_t f) const {
    return data[static_cast<size_t>(t * bins + f)];
  }
};

struct LogMagFeatures {
  int64_t frames = 0;
  int64_t bins = 0;
  std::vector<double> data;  // row-major, all >= 0

  double& at(int64_t t, int64_t f) { return data[static_cast<size_t>(t * bins + f)]; }
  double at(int64_t t, int64_t f) const { return data[static_cast<size_t>(t * bins + f)]; }
};

// Radix-2 complex FFT, in place. Size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// One analysis frame: window `win_length` samples, zero-pad to fft_size,
// forward FFT, keep the non-negative-frequency bins. Shared verbatim by the
// batch stft and the streaming framer.
void stft_frame(const double* samples, const StftConfig& config, std::complex<double>* out_bins);

SpectrogramComplex stft(const WaveBuffer& wave, const StftConfig& config);

WaveBuffer istft(const SpectrogramComplex& spec, const StftConfig& config);

// X' = log(1 + |X|), elementwise.
LogMagFeatures log1p_features(const SpectrogramComplex& spec);

// |X-hat| = max(exp(enhanced) - 1, 0) with the noisy phase, then istft.
WaveBuffer reconstruct_from_logmag(const LogMagFeatures& enhanced, const SpectrogramComplex& noisy);

// Incremental overlap-add synthesizer. Feeding it all frames of a spectrogram
// in order and flushing reproduces istft() bit for bit (istft is implemented
// on top of it).
class OlaSynthesizer {
 public:
  explicit OlaSynthesizer(const StftConfig& config);

  void push_frame(const std::complex<double>* bins);
  // Samples finalized by the frames seen so far (no later frame overlaps them).
  std::vector<double> pop_ready();
  // Remaining tail after the last frame.
  std::vector<double> flush();

  int64_t frames_pushed() const { return frames_; }

 private:
  std::vector<double> emit_range(int64_t begin, int64_t end);

  StftConfig config_;
  std::vector<double> window_;
  std::vector<double> acc_;
  std::vector<double> wsum_;
  int64_t frames_ = 0;
  int64_t emitted_ = 0;
};

// Streaming frame extractor. Emits exactly the frames batch stft() would:
// frame t becomes available once sample t*hop + win - 1 has been pushed.
struct StreamFrame {
  int64_t index = 0;
  std::vector<double> raw;                  // win_length unwindowed samples
  std::vector<std::complex<double>> bins;   // windowed FFT, fft/2+1 bins
};

class StreamFramer {
 public:
  explicit StreamFramer(const StftConfig& config);

  std::vector<StreamFrame> push(const double* samples, int64_t count);
  std::vector<StreamFrame> push(const std::vector<double>& samples) {
    return push(samples.data(), static_cast<int64_t>(samples.size()));
  }

  int64_t frames_emitted() const { return next_frame_; }

 private:
  StftConfig config_;
  std::vector<double> pending_;  // window of not-yet-consumed samples
  int64_t consumed_ = 0;         // absolute index of pending_[0]
  int64_t next_frame_ = 0;
};

}  // namespace cse

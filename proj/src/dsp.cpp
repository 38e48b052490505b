// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace cse {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void StftConfig::validate() const {
  check(hop_length > 0 && win_length > 0 && fft_size > 0, ErrorKind::Config,
        "stft: win/hop/fft must be positive");
  check(hop_length <= win_length && win_length <= fft_size, ErrorKind::Config,
        "stft: require hop <= win <= fft");
  check(is_pow2(fft_size), ErrorKind::Config, "stft: fft_size must be a power of two");
  check(win_length % hop_length == 0 && win_length / hop_length == 2, ErrorKind::Config,
        "stft: hann window requires hop = win/2 for COLA");
}

std::vector<double> StftConfig::window() const {
  std::vector<double> w(static_cast<size_t>(win_length));
  for (int64_t n = 0; n < win_length; ++n) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) /
                                             static_cast<double>(win_length));
    w[static_cast<size_t>(n)] = std::sqrt(hann);
  }
  return w;
}

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  check(is_pow2(static_cast<int64_t>(n)), ErrorKind::Shape, "fft: size must be a power of two");
  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

void stft_frame(const double* samples, const StftConfig& config, std::complex<double>* out_bins) {
  static thread_local std::vector<double> window;
  static thread_local int64_t window_len = -1;
  if (window_len != config.win_length) {
    window = config.window();
    window_len = config.win_length;
  }
  std::vector<std::complex<double>> buf(static_cast<size_t>(config.fft_size));
  for (int64_t i = 0; i < config.win_length; ++i)
    buf[static_cast<size_t>(i)] = samples[i] * window[static_cast<size_t>(i)];
  fft_inplace(buf, false);
  std::copy(buf.begin(), buf.begin() + config.bins(), out_bins);
}

SpectrogramComplex stft(const WaveBuffer& wave, const StftConfig& config) {
  config.validate();
  const int64_t len = wave.size();
  check(len >= config.win_length, ErrorKind::Shape,
        "stft: signal shorter than one window (" + std::to_string(len) + " samples)");
  SpectrogramComplex spec;
  spec.config = config;
  spec.bins = config.bins();
  spec.frames = config.frame_count(len);
  spec.data.resize(static_cast<size_t>(spec.frames * spec.bins));
  for (int64_t t = 0; t < spec.frames; ++t)
    stft_frame(wave.samples.data() + t * config.hop_length, config, &spec.at(t, 0));
  return spec;
}

OlaSynthesizer::OlaSynthesizer(const StftConfig& config) : config_(config) {
  config_.validate();
  window_ = config_.window();
}

void OlaSynthesizer::push_frame(const std::complex<double>* bins) {
  const int64_t fft = config_.fft_size;
  const int64_t half = fft / 2;
  std::vector<std::complex<double>> buf(static_cast<size_t>(fft));
  for (int64_t f = 0; f <= half; ++f) buf[static_cast<size_t>(f)] = bins[f];
  for (int64_t f = 1; f < half; ++f) buf[static_cast<size_t>(fft - f)] = std::conj(bins[f]);
  fft_inplace(buf, true);

  const int64_t start = frames_ * config_.hop_length;
  const int64_t need = start + config_.win_length;
  if (static_cast<int64_t>(acc_.size()) < need) {
    acc_.resize(static_cast<size_t>(need), 0.0);
    wsum_.resize(static_cast<size_t>(need), 0.0);
  }
  for (int64_t i = 0; i < config_.win_length; ++i) {
    const double w = window_[static_cast<size_t>(i)];
    acc_[static_cast<size_t>(start + i)] += buf[static_cast<size_t>(i)].real() * w;
    wsum_[static_cast<size_t>(start + i)] += w * w;
  }
  ++frames_;
}

std::vector<double> OlaSynthesizer::emit_range(int64_t begin, int64_t end) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(std::max<int64_t>(0, end - begin)));
  for (int64_t i = begin; i < end; ++i) {
    const double ws = wsum_[static_cast<size_t>(i)];
    out.push_back(ws > 1e-10 ? acc_[static_cast<size_t>(i)] / ws : 0.0);
  }
  return out;
}

std::vector<double> OlaSynthesizer::pop_ready() {
  // After frame t, samples below (t+1)*hop receive no further contributions.
  const int64_t ready = std::min<int64_t>(frames_ * config_.hop_length,
                                          static_cast<int64_t>(acc_.size()));
  std::vector<double> out = emit_range(emitted_, ready);
  emitted_ = std::max(emitted_, ready);
  return out;
}

std::vector<double> OlaSynthesizer::flush() {
  const int64_t total = static_cast<int64_t>(acc_.size());
  std::vector<double> out = emit_range(emitted_, total);
  emitted_ = total;
  return out;
}

WaveBuffer istft(const SpectrogramComplex& spec, const StftConfig& config) {
  config.validate();
  check(spec.bins == config.bins(), ErrorKind::Shape,
        "istft: spectrogram bin count inconsistent with config");
  OlaSynthesizer ola(config);
  WaveBuffer wave;
  for (int64_t t = 0; t < spec.frames; ++t) {
    ola.push_frame(&spec.at(t, 0));
    for (double s : ola.pop_ready()) wave.samples.push_back(s);
  }
  for (double s : ola.flush()) wave.samples.push_back(s);
  return wave;
}

LogMagFeatures log1p_features(const SpectrogramComplex& spec) {
  LogMagFeatures f;
  f.frames = spec.frames;
  f.bins = spec.bins;
  f.data.resize(spec.data.size());
  for (size_t i = 0; i < spec.data.size(); ++i) {
    const double m = std::abs(spec.data[i]);
    check(std::isfinite(m), ErrorKind::Numeric, "log1p_features: non-finite magnitude");
    f.data[i] = std::log1p(m);
  }
  return f;
}

WaveBuffer reconstruct_from_logmag(const LogMagFeatures& enhanced, const SpectrogramComplex& noisy) {
  check(enhanced.frames == noisy.frames && enhanced.bins == noisy.bins, ErrorKind::Shape,
        "reconstruct: feature/spectrogram shape mismatch");
  SpectrogramComplex out;
  out.config = noisy.config;
  out.frames = noisy.frames;
  out.bins = noisy.bins;
  out.data.resize(noisy.data.size());
  for (size_t i = 0; i < noisy.data.size(); ++i) {
    // Magnitudes are non-negative by definition; clamp numerical negatives.
    const double mag = std::max(std::expm1(enhanced.data[i]), 0.0);
    const double nmag = std::abs(noisy.data[i]);
    out.data[i] = nmag > 1e-300 ? noisy.data[i] * (mag / nmag) : std::complex<double>(mag, 0.0);
  }
  return istft(out, out.config);
}

StreamFramer::StreamFramer(const StftConfig& config) : config_(config) { config_.validate(); }

std::vector<StreamFrame> StreamFramer::push(const double* samples, int64_t count) {
  pending_.insert(pending_.end(), samples, samples + count);
  std::vector<StreamFrame> out;
  while (true) {
    const int64_t frame_start = next_frame_ * config_.hop_length;
    const int64_t frame_end = frame_start + config_.win_length;
    if (consumed_ + static_cast<int64_t>(pending_.size()) < frame_end) break;
    StreamFrame frame;
    frame.index = next_frame_;
    const int64_t off = frame_start - consumed_;
    frame.raw.assign(pending_.begin() + off, pending_.begin() + off + config_.win_length);
    frame.bins.resize(static_cast<size_t>(config_.bins()));
    stft_frame(frame.raw.data(), config_, frame.bins.data());
    out.push_back(std::move(frame));
    ++next_frame_;
    // Drop samples no frame will need again.
    const int64_t keep_from = next_frame_ * config_.hop_length;
    if (keep_from > consumed_) {
      pending_.erase(pending_.begin(), pending_.begin() + (keep_from - consumed_));
      consumed_ = keep_from;
    }
  }
  return out;
}

}  // namespace cse

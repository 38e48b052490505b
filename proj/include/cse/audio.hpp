// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Waveform I/O and desk-scale data synthesis. Canonical format everywhere:
// 16 kHz mono PCM-16.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cse/common.hpp"

namespace cse {

constexpr int kSampleRate = 16000;

struct WaveBuffer {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// RIFF/PCM, 16-bit little-endian, mono. read_wav rejects missing files,
// multi-channel audio, and non-16-bit or non-PCM encodings with distinct
// errors. Samples are scaled by 1/32768.
WaveBuffer read_wav(const std::string& path);

// Values are clamped to [-1, 1], then quantized round-to-nearest to int16
// (with 32768 mapping to 32767).
void write_wav(const std::string& path, const WaveBuffer& wave);

double signal_power(const WaveBuffer& wave);

enum class NoiseKind { White, Pink, BabbleSurrogate };

struct MixSpec {
  double snr_db = 0.0;
  NoiseKind noise_kind = NoiseKind::White;
  uint64_t seed = 0;
};

// clean + alpha * noise with alpha set so that the clean-to-scaled-noise
// power ratio equals snr_db. Noise is tiled when shorter than clean; when
// longer, the seed picks the segment offset.
WaveBuffer mix_at_snr(const WaveBuffer& clean, const WaveBuffer& noise, const MixSpec& spec);

// Harmonic clean-speech surrogate: piecewise-constant pitch in 100-300 Hz
// (segments of 100-400 ms), phase-continuous harmonics with slowly varying
// per-harmonic envelopes. Peak amplitude <= 0.9. Deterministic per seed.
WaveBuffer synth_speechlike(double duration_s, uint64_t seed);

// Pitch contour metadata for tests: (start sample, length, f0).
struct PitchSegment {
  int64_t start = 0;
  int64_t length = 0;
  double f0 = 0.0;
};
WaveBuffer synth_speechlike(double duration_s, uint64_t seed, std::vector<PitchSegment>* segments);

WaveBuffer synth_noise(double duration_s, NoiseKind kind, uint64_t seed);

struct ManifestEntry {
  std::string id;
  std::string noisy_path;
  std::string clean_path;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

// JSON Lines, one {"id", "noisy", "clean"} object per line. Relative paths
// resolve against the manifest's directory.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& manifest);

// Loads a pair and enforces equal length and rate.
struct UtterancePair {
  WaveBuffer noisy;
  WaveBuffer clean;
  std::string id;
};
UtterancePair load_pair(const ManifestEntry& entry);

}  // namespace cse

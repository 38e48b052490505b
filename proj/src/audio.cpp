// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cse/error.hpp"

namespace cse {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& buf, uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}
void put_u16(std::vector<unsigned char>& buf, uint16_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace

WaveBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "wav file not found: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorKind::Format, "not a RIFF/WAVE file: " + path);

  // Walk chunks; require one fmt and one data chunk.
  size_t pos = 12;
  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const uint32_t chunk_size = read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_size > bytes.size()) fail(ErrorKind::Format, "truncated wav chunk: " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) fail(ErrorKind::Format, "short fmt chunk: " + path);
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_size = chunk_size;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) fail(ErrorKind::Format, "missing fmt/data chunk: " + path);
  if (format != 1) fail(ErrorKind::Format, "unsupported wav encoding (want PCM): " + path);
  if (channels != 1) fail(ErrorKind::Format, "wav is not mono: " + path);
  if (bits != 16) fail(ErrorKind::Format, "unsupported wav bit depth (want 16): " + path);

  WaveBuffer wave;
  wave.sample_rate = static_cast<int>(rate);
  const int64_t n = data_size / 2;
  wave.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(read_u16(data + 2 * i));
    wave.samples[static_cast<size_t>(i)] = static_cast<double>(s) / 32768.0;
  }
  return wave;
}

void write_wav(const std::string& path, const WaveBuffer& wave) {
  std::vector<unsigned char> bytes;
  const uint32_t data_size = static_cast<uint32_t>(wave.samples.size() * 2);
  bytes.reserve(44 + data_size);
  bytes.insert(bytes.end(), {'R', 'I', 'F', 'F'});
  put_u32(bytes, 36 + data_size);
  bytes.insert(bytes.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(bytes, 16);
  put_u16(bytes, 1);  // PCM
  put_u16(bytes, 1);  // mono
  put_u32(bytes, static_cast<uint32_t>(wave.sample_rate));
  put_u32(bytes, static_cast<uint32_t>(wave.sample_rate) * 2);
  put_u16(bytes, 2);
  put_u16(bytes, 16);
  bytes.insert(bytes.end(), {'d', 'a', 't', 'a'});
  put_u32(bytes, data_size);
  for (double s : wave.samples) {
    check(std::isfinite(s), ErrorKind::Numeric, "write_wav: non-finite sample");
    const double clamped = std::clamp(s, -1.0, 1.0);
    long q = std::lround(clamped * 32768.0);
    q = std::clamp(q, -32768l, 32767l);
    put_u16(bytes, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write: " + path);
}

double signal_power(const WaveBuffer& wave) {
  if (wave.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : wave.samples) acc += s * s;
  return acc / static_cast<double>(wave.samples.size());
}

WaveBuffer mix_at_snr(const WaveBuffer& clean, const WaveBuffer& noise, const MixSpec& spec) {
  check(std::isfinite(spec.snr_db), ErrorKind::Config, "mix_at_snr: snr_db must be finite");
  check(clean.sample_rate == noise.sample_rate, ErrorKind::Shape, "mix_at_snr: sample rate mismatch");
  const double p_clean = signal_power(clean);
  check(p_clean > 0.0, ErrorKind::State, "mix_at_snr: clean signal has zero power");

  const int64_t n = clean.size();
  std::vector<double> seg(static_cast<size_t>(n));
  if (noise.size() >= n) {
    Rng rng(mix_seed(spec.seed, 0xA11Du));
    const int64_t max_off = noise.size() - n;
    const int64_t off =
        max_off > 0 ? static_cast<int64_t>(rng() % static_cast<uint64_t>(max_off + 1)) : 0;
    std::copy(noise.samples.begin() + off, noise.samples.begin() + off + n, seg.begin());
  } else {
    check(noise.size() > 0, ErrorKind::State, "mix_at_snr: empty noise");
    for (int64_t i = 0; i < n; ++i) seg[static_cast<size_t>(i)] = noise.samples[static_cast<size_t>(i % noise.size())];
  }
  double p_noise = 0.0;
  for (double s : seg) p_noise += s * s;
  p_noise /= static_cast<double>(n);
  check(p_noise > 0.0, ErrorKind::State, "mix_at_snr: noise segment has zero power");

  const double alpha = std::sqrt(p_clean / (p_noise * std::pow(10.0, spec.snr_db / 10.0)));
  WaveBuffer out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    out.samples[static_cast<size_t>(i)] =
        clean.samples[static_cast<size_t>(i)] + alpha * seg[static_cast<size_t>(i)];
  return out;
}

WaveBuffer synth_speechlike(double duration_s, uint64_t seed) {
  return synth_speechlike(duration_s, seed, nullptr);
}

WaveBuffer synth_speechlike(double duration_s, uint64_t seed, std::vector<PitchSegment>* segments) {
  check(duration_s > 0.0, ErrorKind::Config, "synth_speechlike: duration must be positive");
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * kSampleRate));
  WaveBuffer wave;
  wave.samples.assign(static_cast<size_t>(n), 0.0);

  Rng rng(mix_seed(seed, 0x5EEDu));
  std::uniform_real_distribution<double> pitch_dist(100.0, 300.0);
  std::uniform_real_distribution<double> seg_dist(0.100, 0.400);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int kHarmonics = 12;
  // Slow per-harmonic amplitude envelopes: rate in [0.5, 2] Hz, random phase.
  double env_rate[kHarmonics], env_phase[kHarmonics], base_amp[kHarmonics];
  for (int h = 0; h < kHarmonics; ++h) {
    env_rate[h] = 0.5 + 1.5 * unit(rng);
    env_phase[h] = 2.0 * kPi * unit(rng);
    base_amp[h] = 1.0 / (1.0 + h);
  }

  double phase = 0.0;
  int64_t pos = 0;
  while (pos < n) {
    const double f0 = pitch_dist(rng);
    const int64_t seg_len = std::min<int64_t>(
        n - pos, static_cast<int64_t>(std::llround(seg_dist(rng) * kSampleRate)));
    if (segments) segments->push_back({pos, seg_len, f0});
    for (int64_t i = 0; i < seg_len; ++i) {
      const double t = static_cast<double>(pos + i) / kSampleRate;
      double s = 0.0;
      for (int h = 0; h < kHarmonics; ++h) {
        const double f = f0 * (h + 1);
        if (f >= 0.475 * kSampleRate) break;
        const double env = 0.55 + 0.45 * std::sin(2.0 * kPi * env_rate[h] * t + env_phase[h]);
        s += base_amp[h] * env * std::sin(phase * (h + 1));
      }
      wave.samples[static_cast<size_t>(pos + i)] = s;
      phase += 2.0 * kPi * f0 / kSampleRate;
    }
    pos += seg_len;
  }

  double peak = 0.0;
  for (double s : wave.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    const double gain = 0.9 / peak;
    for (double& s : wave.samples) s *= gain;
  }
  return wave;
}

WaveBuffer synth_noise(double duration_s, NoiseKind kind, uint64_t seed) {
  check(duration_s > 0.0, ErrorKind::Config, "synth_noise: duration must be positive");
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * kSampleRate));
  WaveBuffer wave;
  wave.samples.resize(static_cast<size_t>(n));
  Rng rng(mix_seed(seed, 0x4015Eu));
  std::normal_distribution<double> gauss(0.0, 1.0);

  switch (kind) {
    case NoiseKind::White: {
      for (double& s : wave.samples) s = 0.1 * gauss(rng);
      break;
    }
    case NoiseKind::Pink: {
      // Kellet's three-pole pink filter.
      double b0 = 0, b1 = 0, b2 = 0;
      for (double& s : wave.samples) {
        const double w = gauss(rng);
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        s = 0.05 * (b0 + b1 + b2 + w * 0.1848);
      }
      break;
    }
    case NoiseKind::BabbleSurrogate: {
      // Band-limited noise with a slow amplitude modulation, a crude stand-in
      // for multi-talker babble.
      double lp = 0.0, hp_prev_in = 0.0, hp_prev_out = 0.0;
      const double lp_a = std::exp(-2.0 * kPi * 3400.0 / kSampleRate);
      const double hp_a = std::exp(-2.0 * kPi * 300.0 / kSampleRate);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double mod_rate = 2.0 + 4.0 * unit(rng);
      const double mod_phase = 2.0 * kPi * unit(rng);
      for (int64_t i = 0; i < n; ++i) {
        const double w = gauss(rng);
        lp = (1.0 - lp_a) * w + lp_a * lp;
        const double hp = hp_a * (hp_prev_out + lp - hp_prev_in);
        hp_prev_in = lp;
        hp_prev_out = hp;
        const double t = static_cast<double>(i) / kSampleRate;
        const double mod = 0.6 + 0.4 * std::sin(2.0 * kPi * mod_rate * t + mod_phase);
        wave.samples[static_cast<size_t>(i)] = 0.25 * mod * hp;
      }
      break;
    }
  }
  return wave;
}

DatasetManifest read_manifest(const std::string& path) {
  // Pointing at a nonexistent manifest is a usage error (exit code 2).
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "manifest not found: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  DatasetManifest manifest;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!obj.contains("id") || !obj.contains("noisy") || !obj.contains("clean"))
      fail(ErrorKind::Format, "manifest line " + std::to_string(lineno) + ": missing id/noisy/clean");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    manifest.entries.push_back({obj["id"].get<std::string>(),
                                resolve(obj["noisy"].get<std::string>()),
                                resolve(obj["clean"].get<std::string>())});
  }
  return manifest;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path);
  for (const auto& e : manifest.entries) {
    nlohmann::json obj = {{"id", e.id}, {"noisy", e.noisy_path}, {"clean", e.clean_path}};
    out << obj.dump() << "\n";
  }
}

UtterancePair load_pair(const ManifestEntry& entry) {
  UtterancePair pair;
  pair.id = entry.id;
  pair.noisy = read_wav(entry.noisy_path);
  pair.clean = read_wav(entry.clean_path);
  check(pair.noisy.sample_rate == pair.clean.sample_rate, ErrorKind::Format,
        "pair " + entry.id + ": sample rate mismatch");
  check(pair.noisy.size() == pair.clean.size(), ErrorKind::Format,
        "pair " + entry.id + ": length mismatch");
  return pair;
}

}  // namespace cse

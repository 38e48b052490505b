// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "cse/audio.hpp"
#include "cse/dsp.hpp"
#include "cse/error.hpp"

using namespace cse;

namespace {

constexpr double kPi = 3.14159265358979323846;

WaveBuffer random_wave(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  WaveBuffer w;
  w.samples.resize(static_cast<size_t>(n));
  for (auto& s : w.samples) s = dist(rng);
  return w;
}

}  // namespace

TEST_CASE("stft frame geometry") {
  StftConfig cfg;  // 640/320/1024
  SUBCASE("len == win gives exactly one frame") {
    WaveBuffer w = random_wave(640, 1);
    SpectrogramComplex s = stft(w, cfg);
    CHECK(s.frames == 1);
    CHECK(s.bins == 513);
  }
  SUBCASE("frame count formula") {
    WaveBuffer w = random_wave(16000, 2);
    SpectrogramComplex s = stft(w, cfg);
    CHECK(s.frames == 1 + (16000 - 640) / 320);
  }
  SUBCASE("too-short input is rejected") {
    WaveBuffer w = random_wave(639, 3);
    CHECK_THROWS_AS(stft(w, cfg), Error);
  }
  SUBCASE("all-zero input gives all-zero spectrogram") {
    WaveBuffer w;
    w.samples.assign(2000, 0.0);
    SpectrogramComplex s = stft(w, cfg);
    for (const auto& v : s.data) CHECK(std::abs(v) == 0.0);
  }
}

TEST_CASE("pure cosine at a bin-center frequency concentrates energy") {
  StftConfig cfg;
  const int64_t k = 60;  // bin index
  const double freq = static_cast<double>(k) * kSampleRate / static_cast<double>(cfg.fft_size);
  WaveBuffer w;
  w.samples.resize(4000);
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.7 * std::cos(2.0 * kPi * freq * static_cast<double>(i) / kSampleRate);
  SpectrogramComplex s = stft(w, cfg);
  // With win < fft the zero-padded window mainlobe spans fft/win = 1.6 bins,
  // which caps the k+-1 fraction near 97.6%; k+-2 captures > 99%.
  for (int64_t t = 0; t < s.frames; ++t) {
    double total = 0, near1 = 0, near2 = 0;
    for (int64_t f = 0; f < s.bins; ++f) {
      const double e = std::norm(s.at(t, f));
      total += e;
      if (std::abs(f - k) <= 1) near1 += e;
      if (std::abs(f - k) <= 2) near2 += e;
    }
    CHECK(near1 / total >= 0.97);
    CHECK(near2 / total >= 0.99);
  }
}

TEST_CASE("COLA: analysis*synthesis window overlap-add is constant on the interior") {
  StftConfig cfg;
  std::vector<double> w = cfg.window();
  // Sum of squared shifted windows over several hops.
  const int64_t span = cfg.win_length * 4;
  std::vector<double> acc(static_cast<size_t>(span), 0.0);
  for (int64_t t = 0; t * cfg.hop_length + cfg.win_length <= span; ++t)
    for (int64_t i = 0; i < cfg.win_length; ++i)
      acc[static_cast<size_t>(t * cfg.hop_length + i)] += w[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
  for (int64_t i = cfg.win_length; i + cfg.win_length < span - cfg.win_length; ++i)
    CHECK(std::abs(acc[static_cast<size_t>(i)] - 1.0) < 1e-10);
}

TEST_CASE("istft round trip") {
  StftConfig cfg;
  SUBCASE("random 1 s signal reconstructs on the interior within 1e-6") {
    WaveBuffer w = random_wave(16000, 4);
    SpectrogramComplex s = stft(w, cfg);
    WaveBuffer r = istft(s, cfg);
    REQUIRE(r.size() == (s.frames - 1) * cfg.hop_length + cfg.win_length);
    double max_err = 0;
    for (int64_t i = cfg.win_length; i < r.size() - cfg.win_length; ++i)
      max_err = std::max(max_err, std::abs(r.samples[static_cast<size_t>(i)] -
                                           w.samples[static_cast<size_t>(i)]));
    CHECK(max_err <= 1e-6);
  }
  SUBCASE("zero spectrogram gives zero wave") {
    WaveBuffer w = random_wave(3200, 5);
    SpectrogramComplex s = stft(w, cfg);
    std::fill(s.data.begin(), s.data.end(), std::complex<double>(0, 0));
    WaveBuffer r = istft(s, cfg);
    for (double v : r.samples) CHECK(v == 0.0);
  }
  SUBCASE("linearity: scaling the spectrogram scales the wave") {
    WaveBuffer w = random_wave(3200, 6);
    SpectrogramComplex s = stft(w, cfg);
    WaveBuffer r1 = istft(s, cfg);
    for (auto& v : s.data) v *= 2.0;
    WaveBuffer r2 = istft(s, cfg);
    for (int64_t i = 0; i < r1.size(); ++i)
      CHECK(r2.samples[static_cast<size_t>(i)] ==
            doctest::Approx(2.0 * r1.samples[static_cast<size_t>(i)]).epsilon(1e-12));
  }
  SUBCASE("bin-count mismatch is rejected") {
    WaveBuffer w = random_wave(3200, 7);
    SpectrogramComplex s = stft(w, cfg);
    s.bins -= 1;
    CHECK_THROWS_AS(istft(s, cfg), Error);
  }
}

TEST_CASE("log1p features") {
  StftConfig cfg;
  SUBCASE("zero magnitude maps to zero, e-1 maps to one") {
    SpectrogramComplex s;
    s.config = cfg;
    s.frames = 1;
    s.bins = 3;
    s.data = {{0, 0}, {std::exp(1.0) - 1.0, 0}, {3, 4}};
    LogMagFeatures f = log1p_features(s);
    CHECK(f.at(0, 0) == 0.0);
    CHECK(f.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.at(0, 2) == doctest::Approx(std::log(6.0)).epsilon(1e-12));  // |3+4i| = 5
  }
  SUBCASE("monotone in magnitude and non-negative") {
    WaveBuffer w = random_wave(3200, 8);
    SpectrogramComplex s = stft(w, cfg);
    LogMagFeatures f = log1p_features(s);
    for (size_t i = 0; i < f.data.size(); ++i) {
      CHECK(f.data[i] >= 0.0);
      // log1p is strictly increasing: compare a few magnitude pairs
    }
    SpectrogramComplex s2 = s;
    for (auto& v : s2.data) v *= 3.0;
    LogMagFeatures f2 = log1p_features(s2);
    for (size_t i = 0; i < f.data.size(); ++i)
      if (std::abs(s.data[i]) > 0) CHECK(f2.data[i] > f.data[i]);
  }
}

TEST_CASE("reconstruct_from_logmag") {
  StftConfig cfg;
  WaveBuffer w = random_wave(16000, 9);
  SpectrogramComplex noisy = stft(w, cfg);

  SUBCASE("identity: features of the noisy spectrogram reproduce istft(noisy)") {
    LogMagFeatures f = log1p_features(noisy);
    WaveBuffer a = reconstruct_from_logmag(f, noisy);
    WaveBuffer b = istft(noisy, cfg);
    REQUIRE(a.size() == b.size());
    for (int64_t i = 0; i < a.size(); ++i)
      CHECK(a.samples[static_cast<size_t>(i)] ==
            doctest::Approx(b.samples[static_cast<size_t>(i)]).epsilon(1e-9));
  }
  SUBCASE("all-zero features give silence") {
    LogMagFeatures f;
    f.frames = noisy.frames;
    f.bins = noisy.bins;
    f.data.assign(noisy.data.size(), 0.0);
    WaveBuffer a = reconstruct_from_logmag(f, noisy);
    for (double s : a.samples) CHECK(std::abs(s) < 1e-12);
  }
  SUBCASE("unit mask end-to-end SI-SDR >= 40 dB on the interior") {
    LogMagFeatures f = log1p_features(noisy);
    WaveBuffer a = reconstruct_from_logmag(f, noisy);
    // interior comparison against the original
    double num = 0, den = 0;
    for (int64_t i = cfg.win_length; i < a.size() - cfg.win_length; ++i) {
      const double ref = w.samples[static_cast<size_t>(i)];
      const double err = a.samples[static_cast<size_t>(i)] - ref;
      num += ref * ref;
      den += err * err;
    }
    CHECK(10.0 * std::log10(num / std::max(den, 1e-300)) >= 40.0);
  }
  SUBCASE("shape mismatch is rejected") {
    LogMagFeatures f = log1p_features(noisy);
    f.frames -= 1;
    f.data.resize(static_cast<size_t>(f.frames * f.bins));
    CHECK_THROWS_AS(reconstruct_from_logmag(f, noisy), Error);
  }
}

TEST_CASE("streaming framer equals batch stft bit-for-bit") {
  StftConfig cfg;
  WaveBuffer w = random_wave(8000, 10);
  SpectrogramComplex batch = stft(w, cfg);

  SUBCASE("one-sample pushes") {
    StreamFramer framer(cfg);
    std::vector<StreamFrame> frames;
    for (double s : w.samples)
      for (auto& fr : framer.push(&s, 1)) frames.push_back(std::move(fr));
    REQUIRE(static_cast<int64_t>(frames.size()) == batch.frames);
    for (int64_t t = 0; t < batch.frames; ++t)
      for (int64_t f = 0; f < batch.bins; ++f)
        CHECK(frames[static_cast<size_t>(t)].bins[static_cast<size_t>(f)] == batch.at(t, f));
  }

  SUBCASE("random chunkings agree with each other and with batch") {
    Rng rng(11);
    for (int trial = 0; trial < 4; ++trial) {
      StreamFramer framer(cfg);
      std::vector<StreamFrame> frames;
      int64_t pos = 0;
      while (pos < w.size()) {
        const int64_t chunk = std::min<int64_t>(w.size() - pos,
                                                1 + static_cast<int64_t>(rng() % 700));
        for (auto& fr : framer.push(w.samples.data() + pos, chunk)) frames.push_back(std::move(fr));
        pos += chunk;
      }
      REQUIRE(static_cast<int64_t>(frames.size()) == batch.frames);
      for (int64_t t = 0; t < batch.frames; ++t) {
        CHECK(frames[static_cast<size_t>(t)].index == t);
        for (int64_t f = 0; f < batch.bins; ++f)
          CHECK(frames[static_cast<size_t>(t)].bins[static_cast<size_t>(f)] == batch.at(t, f));
      }
    }
  }

  SUBCASE("fewer than win samples emits nothing") {
    StreamFramer framer(cfg);
    WaveBuffer shorty = random_wave(cfg.win_length - 1, 12);
    CHECK(framer.push(shorty.samples).empty());
  }
}

TEST_CASE("stft causality: frame t ignores later samples") {
  StftConfig cfg;
  WaveBuffer w = random_wave(6400, 13);
  SpectrogramComplex base = stft(w, cfg);
  // Mutate everything from sample t*hop + win onward; frames <= t must not move.
  const int64_t t = 7;
  WaveBuffer w2 = w;
  for (int64_t i = t * cfg.hop_length + cfg.win_length; i < w2.size(); ++i)
    w2.samples[static_cast<size_t>(i)] = 0.33;
  SpectrogramComplex mod = stft(w2, cfg);
  for (int64_t tt = 0; tt <= t; ++tt)
    for (int64_t f = 0; f < base.bins; ++f) CHECK(mod.at(tt, f) == base.at(tt, f));
  // And at least one later frame differs.
  bool later_differs = false;
  for (int64_t f = 0; f < base.bins; ++f)
    if (mod.at(t + 1, f) != base.at(t + 1, f)) later_differs = true;
  CHECK(later_differs);
}

TEST_CASE("ola synthesizer incremental emission matches istft") {
  StftConfig cfg;
  WaveBuffer w = random_wave(6400, 14);
  SpectrogramComplex s = stft(w, cfg);
  WaveBuffer batch = istft(s, cfg);
  OlaSynthesizer ola(cfg);
  std::vector<double> streamed;
  for (int64_t t = 0; t < s.frames; ++t) {
    ola.push_frame(&s.at(t, 0));
    for (double v : ola.pop_ready()) streamed.push_back(v);
  }
  for (double v : ola.flush()) streamed.push_back(v);
  REQUIRE(static_cast<int64_t>(streamed.size()) == batch.size());
  for (size_t i = 0; i < streamed.size(); ++i) CHECK(streamed[i] == batch.samples[i]);
}

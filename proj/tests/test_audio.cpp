// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cse/audio.hpp"
#include "cse/error.hpp"

using namespace cse;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("wav round trip and fixed-point scaling") {
  const std::string path = temp_path("cse_test_rt.wav");

  SUBCASE("known int16 values decode to exact fractions") {
    WaveBuffer w;
    w.samples = {0.0, 0.5, -1.0};
    write_wav(path, w);
    WaveBuffer r = read_wav(path);
    REQUIRE(r.size() == 3);
    CHECK(r.samples[0] == 0.0);
    CHECK(r.samples[1] == 0.5);
    CHECK(r.samples[2] == -1.0);
    CHECK(r.sample_rate == kSampleRate);
  }

  SUBCASE("clamping and rounding") {
    WaveBuffer w;
    w.samples = {1.5, 0.0, -0.5, 1.0, -2.0};
    write_wav(path, w);
    WaveBuffer r = read_wav(path);
    CHECK(r.samples[0] == doctest::Approx(32767.0 / 32768.0));
    CHECK(r.samples[1] == 0.0);
    CHECK(r.samples[2] == -0.5);
    CHECK(r.samples[3] == doctest::Approx(32767.0 / 32768.0));
    CHECK(r.samples[4] == -1.0);
  }

  SUBCASE("any buffer on the 1/32768 grid round trips bit-exactly") {
    Rng rng(21);
    WaveBuffer w;
    for (int i = 0; i < 4096; ++i) {
      const int64_t q = static_cast<int64_t>(rng() % 65536) - 32768;
      w.samples.push_back(static_cast<double>(q) / 32768.0);
    }
    write_wav(path, w);
    WaveBuffer r = read_wav(path);
    REQUIRE(r.size() == w.size());
    for (size_t i = 0; i < w.samples.size(); ++i) CHECK(r.samples[i] == w.samples[i]);
  }

  SUBCASE("one second at 16 kHz is 16000 samples") {
    WaveBuffer w = synth_speechlike(1.0, 3);
    CHECK(w.size() == 16000);
    write_wav(path, w);
    CHECK(read_wav(path).size() == 16000);
  }
}

TEST_CASE("wav reader rejects bad inputs with distinct errors") {
  CHECK_THROWS_WITH_AS(read_wav(temp_path("cse_no_such_file.wav")), doctest::Contains("not found"),
                       Error);

  // Stereo file: hand-built header.
  const std::string stereo = temp_path("cse_test_stereo.wav");
  {
    WaveBuffer w;
    w.samples = {0.0, 0.0};
    write_wav(stereo, w);
    std::fstream f(stereo, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(22);
    const char two = 2;
    f.write(&two, 1);
  }
  CHECK_THROWS_WITH_AS(read_wav(stereo), doctest::Contains("not mono"), Error);

  const std::string deep = temp_path("cse_test_24bit.wav");
  {
    WaveBuffer w;
    w.samples = {0.0, 0.0};
    write_wav(deep, w);
    std::fstream f(deep, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(34);
    const char bits = 24;
    f.write(&bits, 1);
  }
  CHECK_THROWS_WITH_AS(read_wav(deep), doctest::Contains("bit depth"), Error);

  const std::string garbage = temp_path("cse_test_garbage.wav");
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "this is not a wav file at all, definitely not one";
  }
  CHECK_THROWS_AS(read_wav(garbage), Error);
}

TEST_CASE("mix_at_snr") {
  WaveBuffer clean = synth_speechlike(1.0, 42);
  WaveBuffer noise = synth_noise(2.0, NoiseKind::White, 7);

  SUBCASE("equal powers at 0 dB give alpha = 1") {
    // Construct equal-power signals directly.
    WaveBuffer a, b;
    for (int i = 0; i < 1000; ++i) {
      a.samples.push_back(i % 2 ? 0.25 : -0.25);
      b.samples.push_back(i % 2 ? -0.25 : 0.25);
    }
    WaveBuffer mixed = mix_at_snr(a, b, {0.0, NoiseKind::White, 1});
    for (int i = 0; i < 1000; ++i)
      CHECK(mixed.samples[static_cast<size_t>(i)] ==
            doctest::Approx(a.samples[static_cast<size_t>(i)] + b.samples[static_cast<size_t>(i)])
                .epsilon(1e-12));
  }

  SUBCASE("20 dB with equal powers gives alpha = 0.1") {
    WaveBuffer a, b;
    for (int i = 0; i < 1000; ++i) {
      a.samples.push_back(0.5);
      b.samples.push_back(i % 2 ? 0.5 : -0.5);
    }
    WaveBuffer mixed = mix_at_snr(a, b, {20.0, NoiseKind::White, 1});
    const double alpha = (mixed.samples[1] - a.samples[1]) / b.samples[1];
    CHECK(alpha == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("measured SNR matches the request within 0.01 dB") {
    for (double snr : {-5.0, 0.0, 7.5, 20.0}) {
      WaveBuffer mixed = mix_at_snr(clean, noise, {snr, NoiseKind::White, 9});
      WaveBuffer resid;
      for (int64_t i = 0; i < mixed.size(); ++i)
        resid.samples.push_back(mixed.samples[static_cast<size_t>(i)] -
                                clean.samples[static_cast<size_t>(i)]);
      const double measured = 10.0 * std::log10(signal_power(clean) / signal_power(resid));
      CHECK(std::abs(measured - snr) < 0.01);
    }
  }

  SUBCASE("deterministic given seed") {
    WaveBuffer m1 = mix_at_snr(clean, noise, {5.0, NoiseKind::White, 3});
    WaveBuffer m2 = mix_at_snr(clean, noise, {5.0, NoiseKind::White, 3});
    CHECK(m1.samples == m2.samples);
  }

  SUBCASE("zero-power clean is rejected") {
    WaveBuffer silent;
    silent.samples.assign(1000, 0.0);
    CHECK_THROWS_WITH_AS(mix_at_snr(silent, noise, {0.0, NoiseKind::White, 1}),
                         doctest::Contains("zero power"), Error);
  }

  SUBCASE("short noise is tiled") {
    WaveBuffer shortnoise;
    for (int i = 0; i < 100; ++i) shortnoise.samples.push_back(i % 2 ? 0.3 : -0.3);
    WaveBuffer mixed = mix_at_snr(clean, shortnoise, {10.0, NoiseKind::White, 2});
    CHECK(mixed.size() == clean.size());
  }
}

TEST_CASE("synth_speechlike properties") {
  SUBCASE("length and peak") {
    WaveBuffer w = synth_speechlike(1.0, 11);
    CHECK(w.size() == 16000);
    double peak = 0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak <= 0.9 + 1e-12);
    CHECK(peak > 0.1);
  }

  SUBCASE("deterministic per seed, different across seeds") {
    WaveBuffer a = synth_speechlike(0.7, 5);
    WaveBuffer b = synth_speechlike(0.7, 5);
    WaveBuffer c = synth_speechlike(0.7, 6);
    CHECK(a.samples == b.samples);
    // Normalized cross-correlation between different seeds stays low.
    double dot = 0, na = 0, nc = 0;
    for (size_t i = 0; i < a.samples.size(); ++i) {
      dot += a.samples[i] * c.samples[i];
      na += a.samples[i] * a.samples[i];
      nc += c.samples[i] * c.samples[i];
    }
    CHECK(std::abs(dot) / std::sqrt(na * nc) < 0.9);
  }

  SUBCASE("segment pitch recoverable by autocorrelation within 5%") {
    std::vector<PitchSegment> segs;
    WaveBuffer w = synth_speechlike(2.0, 33, &segs);
    REQUIRE(segs.size() >= 3);
    int checked = 0;
    for (const auto& seg : segs) {
      if (seg.length < 2400) continue;  // need a long enough stationary stretch
      // Autocorrelation oracle over the segment interior.
      const int64_t start = seg.start + seg.length / 4;
      const int64_t len = seg.length / 2;
      const int64_t min_lag = kSampleRate / 320;  // 320 Hz
      const int64_t max_lag = kSampleRate / 90;   //  90 Hz
      double best = -1e300;
      int64_t best_lag = min_lag;
      for (int64_t lag = min_lag; lag <= max_lag; ++lag) {
        double acc = 0;
        for (int64_t i = 0; i < len - lag; ++i)
          acc += w.samples[static_cast<size_t>(start + i)] *
                 w.samples[static_cast<size_t>(start + i + lag)];
        if (acc > best) {
          best = acc;
          best_lag = lag;
        }
      }
      const double est_f0 = static_cast<double>(kSampleRate) / static_cast<double>(best_lag);
      CHECK(std::abs(est_f0 - seg.f0) / seg.f0 < 0.05);
      ++checked;
    }
    CHECK(checked >= 1);
  }
}

TEST_CASE("noise generators are deterministic and distinct") {
  for (NoiseKind kind : {NoiseKind::White, NoiseKind::Pink, NoiseKind::BabbleSurrogate}) {
    WaveBuffer a = synth_noise(0.5, kind, 4);
    WaveBuffer b = synth_noise(0.5, kind, 4);
    CHECK(a.samples == b.samples);
    CHECK(signal_power(a) > 0.0);
  }
}

TEST_CASE("manifest round trip and pair loading") {
  const std::string dir = temp_path("cse_manifest_test");
  std::filesystem::create_directories(dir);
  WaveBuffer clean = synth_speechlike(0.5, 1);
  WaveBuffer noisy = mix_at_snr(clean, synth_noise(0.5, NoiseKind::Pink, 2), {5.0, NoiseKind::Pink, 3});
  write_wav(dir + "/c0.wav", clean);
  write_wav(dir + "/n0.wav", noisy);

  DatasetManifest m;
  m.entries.push_back({"utt0", "n0.wav", "c0.wav"});  // relative paths
  write_manifest(dir + "/manifest.jsonl", m);

  DatasetManifest r = read_manifest(dir + "/manifest.jsonl");
  REQUIRE(r.entries.size() == 1);
  CHECK(r.entries[0].id == "utt0");
  UtterancePair pair = load_pair(r.entries[0]);
  CHECK(pair.noisy.size() == pair.clean.size());

  CHECK_THROWS_AS(read_manifest(dir + "/nope.jsonl"), Error);
  {
    std::ofstream bad(dir + "/bad.jsonl");
    bad << "{\"id\": \"x\"}\n";
  }
  CHECK_THROWS_WITH_AS(read_manifest(dir + "/bad.jsonl"), doctest::Contains("missing"), Error);
}

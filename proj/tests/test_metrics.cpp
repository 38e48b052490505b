// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cse/metrics.hpp"

using namespace cse;

namespace {

WaveBuffer random_wave(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  WaveBuffer w;
  w.samples.resize(static_cast<size_t>(n));
  for (auto& s : w.samples) s = dist(rng);
  return w;
}

}  // namespace

TEST_CASE("si-sdr") {
  WaveBuffer ref = random_wave(8000, 1);

  SUBCASE("identical estimate caps at +60 dB") { CHECK(si_sdr_db(ref, ref) == 60.0); }

  SUBCASE("positive scaling leaves the value identical") {
    WaveBuffer twice = ref;
    for (auto& s : twice.samples) s *= 2.0;  // exact in floating point
    CHECK(si_sdr_db(ref, twice) == 60.0);
    WaveBuffer noisy = ref;
    for (size_t i = 0; i < noisy.samples.size(); ++i)
      noisy.samples[i] += (i % 2 ? 0.05 : -0.05);
    const double base = si_sdr_db(ref, noisy);
    WaveBuffer scaled = noisy;
    for (auto& s : scaled.samples) s *= 2.0;
    CHECK(si_sdr_db(ref, scaled) == base);
    WaveBuffer scaled17 = noisy;
    for (auto& s : scaled17.samples) s *= 1.7;
    CHECK(std::abs(si_sdr_db(ref, scaled17) - base) < 1e-9);
  }

  SUBCASE("orthogonal noise of equal power gives exactly 0 dB") {
    WaveBuffer a, est;
    for (int i = 0; i < 4000; ++i) {
      const double r = (i / 2) % 2 ? 0.5 : -0.5;   // period-4 square
      const double n = i % 2 ? 0.5 : -0.5;         // period-2 square, orthogonal
      a.samples.push_back(r);
      est.samples.push_back(r + n);
    }
    CHECK(si_sdr_db(a, est) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("zero reference is an error") {
    WaveBuffer zero;
    zero.samples.assign(100, 0.0);
    WaveBuffer est = random_wave(100, 2);
    CHECK_THROWS_AS(si_sdr_db(zero, est), Error);
    WaveBuffer shorter = random_wave(99, 3);
    CHECK_THROWS_AS(si_sdr_db(est, shorter), Error);
  }
}

TEST_CASE("log-spectral distance") {
  StftConfig cfg;
  WaveBuffer ref = random_wave(8000, 4);

  SUBCASE("identical signals give zero") { CHECK(log_spectral_distance(ref, ref, cfg) == 0.0); }

  SUBCASE("a constant 10x magnitude ratio gives exactly 20 dB") {
    WaveBuffer scaled = ref;
    for (auto& s : scaled.samples) s *= 10.0;
    CHECK(log_spectral_distance(ref, scaled, cfg) == doctest::Approx(20.0).epsilon(1e-9));
  }

  SUBCASE("symmetric") {
    WaveBuffer other = random_wave(8000, 5);
    CHECK(log_spectral_distance(ref, other, cfg) ==
          doctest::Approx(log_spectral_distance(other, ref, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("token accuracy") {
  SUBCASE("one-hot logits on the targets give accuracy 1") {
    const int64_t t = 20, n = 3, k = 5;
    Rng rng(6);
    std::vector<int64_t> tokens(t);
    for (auto& v : tokens) v = static_cast<int64_t>(rng() % k);
    Tensor<float> logits = Tensor<float>::zeros({t, n * k});
    for (int64_t tt = 0; tt + n < t; ++tt)
      for (int64_t nn = 1; nn <= n; ++nn)
        logits.data()[tt * n * k + (nn - 1) * k + tokens[static_cast<size_t>(tt + nn)]] = 5.0f;
    TokenAccuracy acc = token_accuracy(logits, n, k, tokens);
    CHECK(acc.mean == 1.0);
    for (double v : acc.per_n) CHECK(v == 1.0);
  }

  SUBCASE("uniform random logits over K=4 approach 0.25") {
    const int64_t t = 3000, n = 4, k = 4;
    Rng rng(7);
    std::vector<int64_t> tokens(t);
    for (auto& v : tokens) v = static_cast<int64_t>(rng() % k);
    Tensor<float> logits = Tensor<float>::randn({t, n * k}, rng);
    TokenAccuracy acc = token_accuracy(logits, n, k, tokens);
    CHECK(acc.positions >= 10000);
    CHECK(std::abs(acc.mean - 0.25) < 0.03);
  }

  SUBCASE("per-n accuracies average to the mean exactly") {
    const int64_t t = 50, n = 2, k = 3;
    Rng rng(8);
    std::vector<int64_t> tokens(t);
    for (auto& v : tokens) v = static_cast<int64_t>(rng() % k);
    Tensor<float> logits = Tensor<float>::randn({t, n * k}, rng);
    TokenAccuracy acc = token_accuracy(logits, n, k, tokens);
    double mean = 0;
    for (double v : acc.per_n) mean += v;
    mean /= static_cast<double>(n);
    CHECK(acc.mean == doctest::Approx(mean).epsilon(1e-12));
  }

  SUBCASE("Bayes predictor on a sticky Markov chain is non-increasing in n") {
    // P(stay) = 0.7, otherwise uniform over the other states. The n-step
    // self-transition dominates every other entry, so the Bayes prediction is
    // the current state and its accuracy decays monotonically toward 1/K.
    const int64_t k = 8, n = 5, t = 20000;
    const double stay = 0.7;
    Rng rng(9);
    std::vector<int64_t> tokens(t);
    tokens[0] = 0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int64_t i = 1; i < t; ++i) {
      if (unit(rng) < stay) {
        tokens[static_cast<size_t>(i)] = tokens[static_cast<size_t>(i - 1)];
      } else {
        int64_t next = static_cast<int64_t>(rng() % (k - 1));
        if (next >= tokens[static_cast<size_t>(i - 1)]) ++next;
        tokens[static_cast<size_t>(i)] = next;
      }
    }
    Tensor<float> logits = Tensor<float>::zeros({t, n * k});
    for (int64_t tt = 0; tt < t; ++tt)
      for (int64_t nn = 0; nn < n; ++nn)
        logits.data()[tt * n * k + nn * k + tokens[static_cast<size_t>(tt)]] = 1.0f;
    TokenAccuracy acc = token_accuracy(logits, n, k, tokens);
    for (size_t i = 1; i < acc.per_n.size(); ++i) CHECK(acc.per_n[i] <= acc.per_n[i - 1]);
    CHECK(acc.per_n[0] == doctest::Approx(stay).epsilon(0.05));
  }

  SUBCASE("T <= N is an error") {
    Tensor<float> logits = Tensor<float>::zeros({3, 3 * 4});
    CHECK_THROWS_AS(token_accuracy(logits, 3, 4, {0, 1, 2}), Error);
  }
}

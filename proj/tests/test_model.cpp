// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cse/model.hpp"
#include "fd_check.hpp"

using namespace cse;
using cse::testing::fd_check;

namespace {

// Tiny geometry: F = 9, T = 6 at 56 samples.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.stft.win_length = 16;
  cfg.stft.hop_length = 8;
  cfg.stft.fft_size = 16;
  cfg.ssl.layer_count = 2;
  cfg.ssl.width = 8;
  cfg.ssl.heads = 2;
  cfg.ssl.frame_samples = 16;
  cfg.vq.codebook_size = 8;
  cfg.vq.code_dim = 4;
  cfg.g_width = 8;
  cfg.f_width = 8;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.emb_dim = 4;
  cfg.predict_n = 2;
  return cfg;
}

WaveBuffer random_wave(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  WaveBuffer w;
  w.samples.resize(static_cast<size_t>(n));
  for (auto& s : w.samples) s = dist(rng);
  return w;
}

}  // namespace

TEST_CASE("film fusion") {
  Rng rng(61);

  SUBCASE("hand-computed one-frame instance") {
    // x' = [1, 2], h = [0.5, -1]
    // alpha = identity + bias(0.1, 0.2)        -> [1.1, 2.2]
    // gamma = diag(2, 1), zero bias            -> [1.0, -1.0]
    // beta  = swap(h) + bias(-0.5, 0.5)        -> [-1.5, 1.0]
    // fused = gamma*alpha + beta               -> [-0.4, -1.2]
    Linear<double> alpha, gamma, beta;
    alpha.w = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
    alpha.b = Tensor<double>::from({2}, {0.1, 0.2});
    gamma.w = Tensor<double>::from({2, 2}, {2, 0, 0, 1});
    gamma.b = Tensor<double>::zeros({2});
    beta.w = Tensor<double>::from({2, 2}, {0, 1, 1, 0});
    beta.b = Tensor<double>::from({2}, {-0.5, 0.5});
    Tensor<double> x = Tensor<double>::from({1, 2}, {1, 2});
    Tensor<double> h = Tensor<double>::from({1, 2}, {0.5, -1});
    Tensor<double> fused = film_fuse(x, h, alpha, gamma, beta);
    CHECK(fused.at(0, 0) == doctest::Approx(-0.4).epsilon(1e-12));
    CHECK(fused.at(0, 1) == doctest::Approx(-1.2).epsilon(1e-12));
  }

  SUBCASE("bias-only gamma of 1 and zero beta reduce to a plain projection") {
    Linear<double> alpha = Linear<double>::init(3, 4, rng);
    Linear<double> gamma, beta;
    gamma.w = Tensor<double>::zeros({2, 4});
    gamma.b = Tensor<double>::full({4}, 1.0);
    beta.w = Tensor<double>::zeros({2, 4});
    beta.b = Tensor<double>::zeros({4});
    Tensor<double> x = Tensor<double>::randn({5, 3}, rng);
    Tensor<double> h = Tensor<double>::randn({5, 2}, rng);
    Tensor<double> fused = film_fuse(x, h, alpha, gamma, beta);
    Tensor<double> plain = alpha.forward(x);
    for (int64_t i = 0; i < fused.numel(); ++i)
      CHECK(fused.data()[i] == doctest::Approx(plain.data()[i]).epsilon(1e-12));
  }

  SUBCASE("zero gamma gates the input features out entirely") {
    Linear<double> alpha = Linear<double>::init(3, 4, rng);
    Linear<double> gamma, beta;
    gamma.w = Tensor<double>::zeros({2, 4});
    gamma.b = Tensor<double>::zeros({4});
    beta = Linear<double>::init(2, 4, rng);
    Tensor<double> x1 = Tensor<double>::randn({5, 3}, rng);
    Tensor<double> x2 = Tensor<double>::randn({5, 3}, rng);
    Tensor<double> h = Tensor<double>::randn({5, 2}, rng);
    Tensor<double> f1 = film_fuse(x1, h, alpha, gamma, beta);
    Tensor<double> f2 = film_fuse(x2, h, alpha, gamma, beta);
    Tensor<double> bh = beta.forward(h);
    for (int64_t i = 0; i < f1.numel(); ++i) {
      CHECK(f1.data()[i] == f2.data()[i]);
      CHECK(f1.data()[i] == doctest::Approx(bh.data()[i]).epsilon(1e-12));
    }
  }

  SUBCASE("gradient check") {
    Linear<double> alpha = Linear<double>::init(3, 4, rng);
    Linear<double> gamma = Linear<double>::init(2, 4, rng);
    Linear<double> beta = Linear<double>::init(2, 4, rng);
    Tensor<double> x = Tensor<double>::randn({5, 3}, rng);
    Tensor<double> h = Tensor<double>::randn({5, 2}, rng);
    x.set_requires_grad(true);
    h.set_requires_grad(true);
    Tensor<double> r = Tensor<double>::randn({5, 4}, rng);
    auto loss = [&] { return sum_all(mul(film_fuse(x, h, alpha, gamma, beta), r)); };
    std::vector<Tensor<double>> params = {x,       h,       alpha.w, alpha.b, gamma.w,
                                          gamma.b, beta.w,  beta.b};
    CHECK(fd_check(loss, params, 120, rng) < 1e-4);
  }
}

TEST_CASE("input variant widths") {
  Rng rng(62);
  ModelConfig cfg = tiny_config();

  cfg.variant = InputVariant::RawSsl;
  CHECK(cfg.z_width() == 8);
  SeModel<double> raw(cfg, rng);
  CHECK(raw.g_in().in_dim() == 8);

  cfg.variant = InputVariant::PlusIndexEmbedding;
  CHECK(cfg.z_width() == 8 + 4);

  cfg.variant = InputVariant::PlusCodebookVector;
  CHECK(cfg.z_width() == 8 + 4);
  SeModel<double> cbv(cfg, rng);
  CHECK(cbv.g_in().in_dim() == 12);
}

TEST_CASE("forward shapes and mask bounds") {
  Rng rng(63);
  ModelConfig cfg = tiny_config();
  SeModel<double> model(cfg, rng);
  WaveBuffer wave = random_wave(56, 7);
  ForwardResult<double> out = model.forward(wave);

  CHECK(out.x_prime.shape() == Shape{6, 9});
  CHECK(out.x_hat.shape() == Shape{6, 9});
  CHECK(out.mask.shape() == Shape{6, 9});
  CHECK(out.h.shape() == Shape{6, 8});
  CHECK(out.sem_logits.shape() == Shape{6, 2 * 8});
  CHECK(out.c.shape() == Shape{6, 8});
  CHECK(static_cast<int64_t>(out.vq.indices.size()) == 6);
  for (int64_t idx : out.vq.indices) CHECK((idx >= 0 && idx < 8));

  for (int64_t i = 0; i < out.mask.numel(); ++i) {
    CHECK(out.mask.data()[i] > 0.0);
    CHECK(out.mask.data()[i] < 1.0);
    // Mask attenuation: enhanced features never exceed the noisy features.
    CHECK(out.x_hat.data()[i] <= out.x_prime.data()[i]);
    CHECK(out.x_hat.data()[i] >= 0.0);
  }
}

TEST_CASE("zeroed mask head gives a constant 0.5 mask") {
  Rng rng(64);
  ModelConfig cfg = tiny_config();
  SeModel<double> model(cfg, rng);
  SeModel<double> zeroed = model;
  // mask_out is the last affine; zero it through the collected handles.
  NamedTensors<double> named;
  zeroed.collect_params(named);
  for (auto& [name, t] : named.items)
    if (name.rfind("f.mask_out", 0) == 0) std::fill(t.values().begin(), t.values().end(), 0.0);
  ForwardResult<double> out = zeroed.forward(random_wave(56, 9));
  for (int64_t i = 0; i < out.mask.numel(); ++i) CHECK(out.mask.data()[i] == 0.5);
}

TEST_CASE("index-embedding variant: equal tokens get identical embedding slices") {
  Rng rng(65);
  ModelConfig cfg = tiny_config();
  cfg.variant = InputVariant::PlusIndexEmbedding;
  SeModel<double> model(cfg, rng);
  ForwardResult<double> out = model.forward(random_wave(56, 10));
  for (size_t a = 0; a < out.vq.indices.size(); ++a)
    for (size_t b = a + 1; b < out.vq.indices.size(); ++b) {
      if (out.vq.indices[a] != out.vq.indices[b]) continue;
      Tensor<double> ea = embedding_rows(model.emb_table(), {out.vq.indices[a]});
      Tensor<double> eb = embedding_rows(model.emb_table(), {out.vq.indices[b]});
      CHECK(ea.values() == eb.values());
    }
}

TEST_CASE("end-to-end causality: future samples never move earlier outputs") {
  Rng rng(66);
  ModelConfig cfg = tiny_config();
  for (InputVariant variant : {InputVariant::RawSsl, InputVariant::PlusIndexEmbedding,
                               InputVariant::PlusCodebookVector}) {
    cfg.variant = variant;
    SeModel<float> model(cfg, rng);
    WaveBuffer wave = random_wave(96, 11);  // T = 11
    ForwardResult<float> base = model.forward(wave);
    const int64_t t = 4;
    WaveBuffer mutated = wave;
    for (int64_t i = t * cfg.stft.hop_length + cfg.stft.win_length; i < mutated.size(); ++i)
      mutated.samples[static_cast<size_t>(i)] = -0.71;
    ForwardResult<float> mod = model.forward(mutated);
    for (int64_t tt = 0; tt <= t; ++tt) {
      CHECK(mod.vq.indices[static_cast<size_t>(tt)] == base.vq.indices[static_cast<size_t>(tt)]);
      for (int64_t f = 0; f < 9; ++f) {
        CHECK(mod.x_hat.at(tt, f) == base.x_hat.at(tt, f));
        CHECK(mod.mask.at(tt, f) == base.mask.at(tt, f));
      }
      for (int64_t j = 0; j < mod.sem_logits.dim(1); ++j)
        CHECK(mod.sem_logits.at(tt, j) == base.sem_logits.at(tt, j));
    }
  }
}

TEST_CASE("full-model finite-difference checks at T=6") {
  Rng rng(67);

  SUBCASE("smooth downstream paths, codebook-vector variant") {
    ModelConfig cfg = tiny_config();
    cfg.variant = InputVariant::PlusCodebookVector;
    SeModel<double> model(cfg, rng);
    WaveBuffer wave = random_wave(56, 12);
    WaveBuffer clean = random_wave(56, 13);
    Tensor<double> y_prime = logmag_to_tensor<double>(log1p_features(stft(clean, cfg.stft)));

    auto loss = [&] {
      ForwardResult<double> out = model.forward(wave);
      Tensor<double> l_se = l1_loss(y_prime, out.x_hat);
      Tensor<double> l_vq = add(out.vq.recon_loss, out.vq.commit_loss);
      std::vector<int64_t> tokens = out.vq.indices;
      Tensor<double> ce0 = cross_entropy_rows(
          slice_rows(slice_cols(out.sem_logits, 0, 8), 0, 4),
          std::vector<int64_t>(tokens.begin() + 1, tokens.begin() + 5));
      return add(add(l_se, l_vq), scale(ce0, 0.01));
    };
    // Probe parameters downstream of the quantizer; gradients through the
    // straight-through detour are estimators by construction and do not match
    // numeric differentiation (they are verified separately).
    NamedTensors<double> named;
    model.collect_params(named);
    std::vector<Tensor<double>> params;
    for (auto& [name, t] : named.items) {
      const bool downstream = name.rfind("g.", 0) == 0 || name.rfind("f.", 0) == 0 ||
                              name.rfind("film.", 0) == 0 || name.rfind("sem.", 0) == 0 ||
                              name.rfind("vq.decoder", 0) == 0;
      if (downstream && t.requires_grad()) params.push_back(t);
    }
    REQUIRE(params.size() > 10);
    CHECK(fd_check(loss, params, 150, rng) < 1e-4);
  }

  SUBCASE("upstream paths via the raw-ssl variant with se+ce loss") {
    ModelConfig cfg = tiny_config();
    cfg.variant = InputVariant::RawSsl;
    cfg.ssl.freeze_frontend = false;
    SeModel<double> model(cfg, rng);
    WaveBuffer wave = random_wave(56, 14);
    WaveBuffer clean = random_wave(56, 15);
    Tensor<double> y_prime = logmag_to_tensor<double>(log1p_features(stft(clean, cfg.stft)));

    auto loss = [&] {
      ForwardResult<double> out = model.forward(wave);
      Tensor<double> l_se = l1_loss(y_prime, out.x_hat);
      std::vector<int64_t> tokens = out.vq.indices;
      Tensor<double> ce0 = cross_entropy_rows(
          slice_rows(slice_cols(out.sem_logits, 0, 8), 0, 4),
          std::vector<int64_t>(tokens.begin() + 1, tokens.begin() + 5));
      return add(l_se, scale(ce0, 0.01));
    };
    NamedTensors<double> named;
    model.collect_params(named);
    std::vector<Tensor<double>> params;
    params.push_back(model.layer_logits());
    for (auto& [name, t] : named.items)
      if (name.rfind("ssl.", 0) == 0 && t.requires_grad()) params.push_back(t);
    REQUIRE(params.size() > 10);
    CHECK(fd_check(loss, params, 150, rng) < 1e-4);
  }
}

TEST_CASE("all variants and both fusion modes run a forward pass") {
  Rng rng(68);
  ModelConfig cfg = tiny_config();
  WaveBuffer wave = random_wave(96, 16);
  for (FusionMode fusion : {FusionMode::Film, FusionMode::Concat}) {
    for (InputVariant variant : {InputVariant::RawSsl, InputVariant::PlusIndexEmbedding,
                                 InputVariant::PlusCodebookVector}) {
      cfg.fusion = fusion;
      cfg.variant = variant;
      SeModel<float> model(cfg, rng);
      ForwardResult<float> out = model.forward(wave);
      CHECK(out.x_hat.shape() == Shape{11, 9});
    }
  }
}

TEST_CASE("non-causal toggle uses prefix evaluation for c") {
  Rng rng(69);
  ModelConfig cfg = tiny_config();
  cfg.ssl.causal = false;
  SeModel<double> model(cfg, rng);
  WaveBuffer wave = random_wave(56, 17);
  // c must equal explicit prefix evaluation (the faithful causal restriction
  // of a non-causal encoder).
  ForwardResult<double> out = model.forward(wave);
  Tensor<double> frames = frames_to_tensor<double>(wave, cfg.stft);
  Tensor<double> expect = causal_features_prefix(model.ssl(), frames, model.layer_logits());
  CHECK(out.c.values() == expect.values());
}

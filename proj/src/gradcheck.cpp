// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cse/model.hpp"
#include "cse/train.hpp"

namespace cse {

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

struct Component {
  std::string name;
  std::function<Tensor<double>()> loss;
  std::vector<Tensor<double>> params;
};

double check_component(const Component& comp, const GradcheckOptions& opt, Rng& rng) {
  const bool corrupt = comp.name == opt.corrupt_component;
  for (auto p : comp.params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Graph<double> g;
    Tensor<double> loss = comp.loss();
    g.backward(loss);
  }
  for (const auto& p : comp.params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (int probe = 0; probe < opt.probes; ++probe) {
    const size_t pi = std::uniform_int_distribution<size_t>(0, comp.params.size() - 1)(rng);
    Tensor<double> p = comp.params[pi];
    const int64_t idx = std::uniform_int_distribution<int64_t>(0, p.numel() - 1)(rng);
    const double orig = p.data()[idx];
    p.data()[idx] = orig + opt.h;
    const double up = comp.loss().item();
    p.data()[idx] = orig - opt.h;
    const double down = comp.loss().item();
    p.data()[idx] = orig;
    const double numeric = (up - down) / (2.0 * opt.h);
    double a = analytic[pi][static_cast<size_t>(idx)];
    if (corrupt) a = a * 1.01 + 1e-3;
    worst = std::max(worst, rel_err(a, numeric));
  }
  return worst;
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.stft = StftConfig{16, 8, 16};
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

WaveBuffer random_wave(int64_t n, Rng& rng) {
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  WaveBuffer w;
  w.samples.resize(static_cast<size_t>(n));
  for (auto& s : w.samples) s = dist(rng);
  return w;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, 0x6C));
  std::vector<Component> components;

  auto randn = [&rng](Shape shape, bool grad = true) {
    Tensor<double> t = Tensor<double>::randn(std::move(shape), rng);
    t.set_requires_grad(grad);
    return t;
  };

  {  // matmul + transpose
    Tensor<double> a = randn({5, 7}), b = randn({7, 4}), r = randn({4, 5}, false);
    components.push_back({"matmul", [=] { return sum_all(mul(transpose(matmul(a, b)), r)); },
                          {a, b}});
  }
  {  // elementwise, bias broadcast, scaling
    Tensor<double> a = randn({4, 6}), b = randn({4, 6});
    Tensor<double> bias = randn({6});
    Tensor<double> r = randn({4, 6}, false);
    components.push_back({"elementwise",
                          [=] {
                            Tensor<double> t = add(mul(a, b), scale(sub(a, b), 0.3));
                            return sum_all(mul(add_bias(t, bias), r));
                          },
                          {a, b, bias}});
  }
  {  // structural ops
    Tensor<double> a = randn({5, 4}), b = randn({5, 3});
    Tensor<double> r = randn({3, 7}, false);
    components.push_back({"concat_slice_shift",
                          [=] {
                            Tensor<double> cat = concat_cols<double>({a, shift_rows_down(b, 1)});
                            return sum_all(mul(reshape(transpose(slice_rows(cat, 1, 3)), {3, 7}), r));
                          },
                          {a, b}});
  }
  {  // nonlinearities
    Tensor<double> a = randn({5, 6});
    Tensor<double> r = randn({5, 6}, false);
    components.push_back(
        {"sigmoid_relu_gelu",
         [=] { return sum_all(mul(gelu(a), mul(sigmoid(a), mul(relu(a), r)))); },
         {a}});
  }
  {  // softmax
    Tensor<double> a = randn({6, 9});
    Tensor<double> r = randn({6, 9}, false);
    components.push_back({"softmax", [=] { return sum_all(mul(softmax_rows(a), r)); }, {a}});
  }
  {  // layer norm
    Tensor<double> a = randn({5, 8});
    Tensor<double> gain = randn({8}), bias = randn({8});
    Tensor<double> r = randn({5, 8}, false);
    components.push_back(
        {"layer_norm", [=] { return sum_all(mul(layer_norm_rows(a, gain, bias), r)); },
         {a, gain, bias}});
  }
  {  // embedding lookup
    Tensor<double> table = randn({9, 5});
    std::vector<int64_t> idx = {2, 2, 8, 0, 5};
    Tensor<double> r = randn({5, 5}, false);
    components.push_back(
        {"embedding", [=] { return sum_all(mul(embedding_rows(table, idx), r)); }, {table}});
  }
  {  // losses
    Tensor<double> a = randn({4, 5}), b = randn({4, 5});
    Tensor<double> logits = randn({6, 7});
    std::vector<int64_t> targets = {1, 0, 6, 3, 3, 2};
    components.push_back({"losses",
                          [=] {
                            return add(add(l1_loss(a, b), mse_loss(a, b)),
                                       cross_entropy_rows(logits, targets));
                          },
                          {a, b, logits}});
  }
  {  // causal multi-head attention
    AttentionParams<double> att = AttentionParams<double>::init(8, 2, rng);
    Tensor<double> x = randn({6, 8});
    Tensor<double> r = randn({6, 8}, false);
    components.push_back({"causal_mha",
                          [=] { return sum_all(mul(self_attention(x, att, true), r)); },
                          {x, att.wq.w, att.wq.b, att.wk.w, att.wv.w, att.wv.b, att.wo.w}});
  }
  {  // transformer block
    TransformerBlock<double> blk = TransformerBlock<double>::init(8, 2, rng);
    Tensor<double> x = randn({5, 8});
    Tensor<double> r = randn({5, 8}, false);
    NamedTensors<double> named;
    blk.collect("blk", named);
    std::vector<Tensor<double>> params = {x};
    for (auto& [n, t] : named.items) params.push_back(t);
    components.push_back(
        {"transformer_block", [=] { return sum_all(mul(blk.forward(x, true), r)); }, params});
  }
  {  // film fusion
    Linear<double> alpha = Linear<double>::init(6, 5, rng);
    Linear<double> gamma = Linear<double>::init(4, 5, rng);
    Linear<double> beta = Linear<double>::init(4, 5, rng);
    Tensor<double> x = randn({5, 6}), h = randn({5, 4});
    Tensor<double> r = randn({5, 5}, false);
    components.push_back({"film",
                          [=] { return sum_all(mul(film_fuse(x, h, alpha, gamma, beta), r)); },
                          {x, h, alpha.w, alpha.b, gamma.w, gamma.b, beta.w, beta.b}});
  }
  {  // weighted layer sum
    FeatureStack<double> stack;
    for (int i = 0; i < 3; ++i) stack.layers.push_back(randn({4, 6}, false));
    Tensor<double> logits = randn({3});
    Tensor<double> r = randn({4, 6}, false);
    components.push_back(
        {"weighted_sum", [=] { return sum_all(mul(weighted_sum(stack, logits), r)); }, {logits}});
  }
  {  // vq encoder/decoder projections
    VqConfig vcfg;
    vcfg.codebook_size = 6;
    vcfg.code_dim = 4;
    VectorQuantizer<double> vq(5, vcfg, rng);
    Tensor<double> c = randn({6, 5});
    Tensor<double> r1 = randn({6, 4}, false), r2 = randn({6, 5}, false);
    components.push_back({"vq_projections",
                          [=] {
                            Tensor<double> e = vq.encode(c);
                            return add(sum_all(mul(e, r1)), sum_all(mul(vq.decode(e), r2)));
                          },
                          {c, vq.encoder().w, vq.encoder().b, vq.decoder().w, vq.decoder().b}});
  }
  {  // semantic head
    Linear<double> head = Linear<double>::init(8, 2 * 6, rng);
    Tensor<double> h = randn({7, 8});
    std::vector<int64_t> tokens = {0, 5, 2, 2, 1, 3, 4};
    components.push_back({"semantic_head",
                          [=] { return semantic_ce_loss(head.forward(h), tokens, 2, 6); },
                          {h, head.w, head.b}});
  }
  {  // full model, smooth downstream paths (codebook-vector variant)
    ModelConfig mcfg = tiny_model_config();
    mcfg.variant = InputVariant::PlusCodebookVector;
    auto model = std::make_shared<SeModel<double>>(mcfg, rng);
    WaveBuffer wave = random_wave(56, rng);
    WaveBuffer clean = random_wave(56, rng);
    Tensor<double> y_prime = logmag_to_tensor<double>(log1p_features(stft(clean, mcfg.stft)));
    auto loss = [model, wave, y_prime, mcfg] {
      ForwardResult<double> out = model->forward(wave);
      Tensor<double> l_se = l1_loss(y_prime, out.x_hat);
      Tensor<double> l_vq = add(out.vq.recon_loss, out.vq.commit_loss);
      Tensor<double> l_ce = semantic_ce_loss(out.sem_logits, out.vq.indices, mcfg.predict_n,
                                             mcfg.vq.codebook_size);
      return add(add(l_se, l_vq), scale(l_ce, 0.01));
    };
    NamedTensors<double> named;
    model->collect_params(named);
    std::vector<Tensor<double>> params;
    for (auto& [name, t] : named.items) {
      const bool downstream = name.rfind("g.", 0) == 0 || name.rfind("f.", 0) == 0 ||
                              name.rfind("film.", 0) == 0 || name.rfind("sem.", 0) == 0 ||
                              name.rfind("vq.decoder", 0) == 0;
      if (downstream && t.requires_grad()) params.push_back(t);
    }
    components.push_back({"full_model_downstream", loss, params});
  }
  {  // full model, upstream paths (raw-ssl variant; straight-through inert)
    ModelConfig mcfg = tiny_model_config();
    mcfg.variant = InputVariant::RawSsl;
    mcfg.ssl.freeze_frontend = false;
    auto model = std::make_shared<SeModel<double>>(mcfg, rng);
    WaveBuffer wave = random_wave(56, rng);
    WaveBuffer clean = random_wave(56, rng);
    Tensor<double> y_prime = logmag_to_tensor<double>(log1p_features(stft(clean, mcfg.stft)));
    auto loss = [model, wave, y_prime, mcfg] {
      ForwardResult<double> out = model->forward(wave);
      Tensor<double> l_se = l1_loss(y_prime, out.x_hat);
      Tensor<double> l_ce = semantic_ce_loss(out.sem_logits, out.vq.indices, mcfg.predict_n,
                                             mcfg.vq.codebook_size);
      return add(l_se, scale(l_ce, 0.01));
    };
    NamedTensors<double> named;
    model->collect_params(named);
    std::vector<Tensor<double>> params = {model->layer_logits()};
    for (auto& [name, t] : named.items)
      if (name.rfind("ssl.", 0) == 0 && t.requires_grad()) params.push_back(t);
    components.push_back({"full_model_upstream", loss, params});
  }

  std::vector<GradcheckResult> results;
  for (const auto& comp : components) {
    GradcheckResult r;
    r.component = comp.name;
    r.probes = opt.probes;
    r.max_rel_err = check_component(comp, opt, rng);
    r.pass = r.max_rel_err < opt.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace cse

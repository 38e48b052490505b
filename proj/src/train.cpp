// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cse/container.hpp"

namespace cse {

namespace {

// Seed-derivation tags; never reused across purposes.
constexpr uint64_t kTagInit = 0x11;
constexpr uint64_t kTagShuffle = 0xE0;
constexpr uint64_t kTagCrop = 0xC0;
constexpr uint64_t kTagEma = 0xEE;
constexpr uint64_t kTagSeed = 0x5EED;
constexpr uint64_t kTagSplit = 0x52;

Tensor<float> clean_logmag(const WaveBuffer& clean, const StftConfig& stft_cfg) {
  return logmag_to_tensor<float>(log1p_features(stft(clean, stft_cfg)));
}

}  // namespace

Trainer::Trainer(const FullConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(cfg.train.seed, kTagInit));
  model_ = SeModel<float>(cfg_.model, rng);
  trainable_ = model_.trainable_params();
  adam_.lr = cfg_.train.lr;
  adam_.init_like(trainable_);
}

void Trainer::seed_codebook_from(const std::vector<TrainItem>& batch) {
  std::vector<Tensor<float>> encoded_rows;
  for (const auto& item : batch) {
    ForwardResult<float> fwd = model_.forward(item.noisy, item.external_ssl);
    encoded_rows.push_back(detach(fwd.vq.encoded));
  }
  Tensor<float> all = concat_rows(encoded_rows);
  Rng rng(mix_seed(cfg_.train.seed, kTagSeed));
  model_.vq().seed_codebook(all, rng);
}

LossBreakdown Trainer::step(const std::vector<TrainItem>& batch) {
  check(!batch.empty(), ErrorKind::State, "train step: empty batch");
  if (!model_.vq().codebook_seeded()) seed_codebook_from(batch);

  for (auto& p : trainable_) p.zero_grad();

  Graph<float> graph;
  Tensor<float> se_acc, recon_acc, cb_acc, commit_acc, ce_acc;
  std::vector<Tensor<float>> ema_rows;
  std::vector<int64_t> ema_assignments;

  for (const auto& item : batch) {
    ForwardResult<float> fwd = model_.forward(item.noisy, item.external_ssl);
    Tensor<float> y_prime = clean_logmag(item.clean, cfg_.model.stft);
    Tensor<float> l_se = se_loss(y_prime, fwd.x_hat);
    Tensor<float> l_ce = semantic_ce_loss(fwd.sem_logits, fwd.vq.indices, cfg_.model.predict_n,
                                          cfg_.model.vq.codebook_size);
    se_acc = se_acc.defined() ? add(se_acc, l_se) : l_se;
    recon_acc = recon_acc.defined() ? add(recon_acc, fwd.vq.recon_loss) : fwd.vq.recon_loss;
    cb_acc = cb_acc.defined() ? add(cb_acc, fwd.vq.codebook_loss) : fwd.vq.codebook_loss;
    commit_acc = commit_acc.defined() ? add(commit_acc, fwd.vq.commit_loss) : fwd.vq.commit_loss;
    ce_acc = ce_acc.defined() ? add(ce_acc, l_ce) : l_ce;
    ema_rows.push_back(detach(fwd.vq.encoded));
    ema_assignments.insert(ema_assignments.end(), fwd.vq.indices.begin(), fwd.vq.indices.end());
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Tensor<float> l_se = scale(se_acc, inv_b);
  Tensor<float> l_recon = scale(recon_acc, inv_b);
  Tensor<float> l_cb = scale(cb_acc, inv_b);
  Tensor<float> l_commit = scale(commit_acc, inv_b);
  Tensor<float> l_ce = scale(ce_acc, inv_b);
  Tensor<float> l_vq = add(add(l_recon, l_cb), l_commit);
  Tensor<float> total = add(add(scale(l_se, cfg_.train.lambda_se), scale(l_vq, cfg_.train.lambda_vq)),
                            scale(l_ce, cfg_.train.lambda_ce));

  graph.backward(total);

  NamedTensors<float> named;
  model_.collect_params(named);
  for (auto& [name, t] : named.items) {
    if (!t.requires_grad()) continue;
    const auto& g = std::as_const(t).grad();
    if (!g.empty() && !kernels::all_finite(g.data(), static_cast<int64_t>(g.size())))
      fail(ErrorKind::Numeric, "train step: non-finite gradient in '" + name + "'");
  }

  adam_.step(trainable_);

  // Gradient step first, then the EMA codebook update (fixed order).
  Rng ema_rng(mix_seed(cfg_.train.seed, kTagEma, static_cast<uint64_t>(adam_.step_count)));
  model_.vq().ema_update(concat_rows(ema_rows), ema_assignments, ema_rng);

  LossBreakdown out;
  out.l_se = static_cast<double>(l_se.item());
  out.l_vq_recon = static_cast<double>(l_recon.item());
  out.l_vq_codebook = static_cast<double>(l_cb.item());
  out.l_vq_commit = static_cast<double>(l_commit.item());
  out.l_vq = static_cast<double>(l_vq.item());
  out.l_ce = static_cast<double>(l_ce.item());
  out.total = static_cast<double>(total.item());
  return out;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

void Trainer::save_checkpoint(const std::string& path) const {
  TensorFileWriter writer;
  writer.add_blob("__config__", config_to_json(cfg_));

  NamedTensors<float> named;
  model_.collect_params(named);
  model_.collect_state(named);
  for (const auto& [name, t] : named.items) writer.add_f32(name, t.shape(), t.data());

  // Optimizer moments, aligned to trainable parameter names.
  size_t mi = 0;
  for (const auto& [name, t] : named.items) {
    if (!t.requires_grad()) continue;
    writer.add_f32("opt.m." + name, t.shape(), adam_.m[mi].data());
    writer.add_f32("opt.v." + name, t.shape(), adam_.v[mi].data());
    ++mi;
  }
  check(mi == adam_.m.size(), ErrorKind::State, "checkpoint: optimizer slot mismatch");

  const int64_t step = adam_.step_count;
  writer.add_i64("opt.step", {1}, &step);
  const int64_t epoch = epoch_;
  writer.add_i64("epoch", {1}, &epoch);
  const int64_t seeded = model_.vq().codebook_seeded() ? 1 : 0;
  writer.add_i64("vq.seeded", {1}, &seeded);
  const auto& unused = model_.vq().unused_updates();
  writer.add_i64("vq.unused", {static_cast<int64_t>(unused.size())}, unused.data());
  const float best = static_cast<float>(best_metric_);
  writer.add_f32("best.si_sdr", {1}, &best);

  writer.write(path);
}

Trainer Trainer::load_checkpoint(const std::string& path,
                                 const std::optional<FullConfig>& expected_config) {
  TensorFileReader reader(path);
  const std::string echo = reader.blob("__config__");
  FullConfig cfg = apply_config_json(echo, preset_desk());
  if (expected_config.has_value()) {
    check(config_architecture_json(*expected_config) == config_architecture_json(cfg),
          ErrorKind::Config,
          "checkpoint: config echo does not match the requested architecture");
    // Training parameters (epochs, lr, ...) follow the caller's request.
    cfg.train = expected_config->train;
  }

  Trainer trainer(cfg);
  NamedTensors<float> named;
  trainer.model_.collect_params(named);
  trainer.model_.collect_state(named);
  for (auto& [name, t] : named.items) {
    check(reader.has(name), ErrorKind::Format, "checkpoint: missing tensor '" + name + "'");
    const auto& info = reader.info(name);
    check(info.dims == t.shape(), ErrorKind::Config,
          "checkpoint: tensor '" + name + "' has shape inconsistent with the config echo");
    t.values() = reader.f32(name);
  }

  size_t mi = 0;
  for (auto& [name, t] : named.items) {
    if (!t.requires_grad()) continue;
    trainer.adam_.m[mi] = reader.f32("opt.m." + name);
    trainer.adam_.v[mi] = reader.f32("opt.v." + name);
    ++mi;
  }
  trainer.adam_.step_count = reader.i64("opt.step").at(0);
  trainer.epoch_ = reader.i64("epoch").at(0);
  trainer.model_.vq().set_codebook_seeded(reader.i64("vq.seeded").at(0) != 0);
  std::vector<int64_t> unused = reader.i64("vq.unused");
  check(unused.size() == trainer.model_.vq().unused_updates().size(), ErrorKind::Format,
        "checkpoint: vq.unused size mismatch");
  trainer.model_.vq().unused_updates() = unused;
  trainer.best_metric_ = static_cast<double>(reader.f32("best.si_sdr").at(0));
  return trainer;
}

// ---------------------------------------------------------------------------
// Validation and the training loop
// ---------------------------------------------------------------------------

ValidationReport validate(const SeModel<float>& model, const FullConfig& cfg,
                          const std::vector<UtterancePair>& pairs) {
  check(!pairs.empty(), ErrorKind::State, "validate: no utterances");
  ValidationReport report;
  std::vector<double> acc_per_n(static_cast<size_t>(cfg.model.predict_n), 0.0);
  int64_t acc_positions = 0;
  double acc_hits_mean = 0.0;
  for (const auto& pair : pairs) {
    ForwardResult<float> fwd = model.forward(pair.noisy);
    Tensor<float> y_prime = clean_logmag(pair.clean, cfg.model.stft);
    report.losses.l_se += static_cast<double>(se_loss(y_prime, fwd.x_hat).item());
    report.losses.l_vq_recon += static_cast<double>(fwd.vq.recon_loss.item());
    report.losses.l_vq_codebook += static_cast<double>(fwd.vq.codebook_loss.item());
    report.losses.l_vq_commit += static_cast<double>(fwd.vq.commit_loss.item());
    report.losses.l_ce += static_cast<double>(
        semantic_ce_loss(fwd.sem_logits, fwd.vq.indices, cfg.model.predict_n,
                         cfg.model.vq.codebook_size)
            .item());

    WaveBuffer enhanced = enhance_batch(model, pair.noisy);
    WaveBuffer clean_trim, noisy_trim;
    clean_trim.samples.assign(pair.clean.samples.begin(),
                              pair.clean.samples.begin() + enhanced.size());
    noisy_trim.samples.assign(pair.noisy.samples.begin(),
                              pair.noisy.samples.begin() + enhanced.size());
    report.si_sdr += si_sdr_db(clean_trim, enhanced);
    report.noisy_si_sdr += si_sdr_db(clean_trim, noisy_trim);

    TokenAccuracy acc = token_accuracy(fwd.sem_logits, cfg.model.predict_n,
                                       cfg.model.vq.codebook_size, fwd.vq.indices);
    for (size_t i = 0; i < acc_per_n.size(); ++i) acc_per_n[i] += acc.per_n[i];
    acc_positions += acc.positions;
    acc_hits_mean += acc.mean;
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  report.losses.l_se *= inv;
  report.losses.l_vq_recon *= inv;
  report.losses.l_vq_codebook *= inv;
  report.losses.l_vq_commit *= inv;
  report.losses.l_ce *= inv;
  report.losses.l_vq =
      report.losses.l_vq_recon + report.losses.l_vq_codebook + report.losses.l_vq_commit;
  report.losses.total = cfg.train.lambda_se * report.losses.l_se +
                        cfg.train.lambda_vq * report.losses.l_vq +
                        cfg.train.lambda_ce * report.losses.l_ce;
  report.si_sdr *= inv;
  report.noisy_si_sdr *= inv;
  report.token_acc.per_n.assign(acc_per_n.begin(), acc_per_n.end());
  for (auto& v : report.token_acc.per_n) v *= inv;
  report.token_acc.mean = acc_hits_mean * inv;
  report.token_acc.positions = acc_positions;
  return report;
}

TrainItem crop_pair(const UtterancePair& pair, const FeatureStack<float>* stack,
                    FeatureStack<float>* cropped_stack, int64_t crop_frames,
                    const StftConfig& stft_cfg, Rng& rng) {
  TrainItem item;
  const int64_t total_frames = stft_cfg.frame_count(pair.noisy.size());
  check(total_frames >= 1, ErrorKind::Shape, "crop: utterance shorter than one frame");
  const int64_t frames = std::min(crop_frames, total_frames);
  const int64_t max_off = total_frames - frames;
  const int64_t off = max_off > 0 ? static_cast<int64_t>(rng() % static_cast<uint64_t>(max_off + 1)) : 0;
  const int64_t s0 = off * stft_cfg.hop_length;
  const int64_t s1 = s0 + stft_cfg.win_length + (frames - 1) * stft_cfg.hop_length;
  item.noisy.samples.assign(pair.noisy.samples.begin() + s0, pair.noisy.samples.begin() + s1);
  item.clean.samples.assign(pair.clean.samples.begin() + s0, pair.clean.samples.begin() + s1);
  if (stack != nullptr && cropped_stack != nullptr) {
    cropped_stack->layers.clear();
    for (const auto& layer : stack->layers)
      cropped_stack->layers.push_back(slice_rows(layer, off, frames));
    item.external_ssl = cropped_stack;
  }
  return item;
}

TrainResult train_loop(const DatasetManifest& manifest, const FullConfig& cfg,
                       const std::string& out_dir, const DatasetManifest* val_manifest,
                       const std::string& resume_path) {
  check(!manifest.entries.empty(), ErrorKind::State, "train: empty manifest");
  std::filesystem::create_directories(out_dir);

  // Deterministic train/validation split when no explicit validation set.
  std::vector<ManifestEntry> train_entries = manifest.entries;
  std::vector<ManifestEntry> val_entries;
  if (val_manifest != nullptr && !val_manifest->entries.empty()) {
    val_entries = val_manifest->entries;
  } else if (train_entries.size() >= 2) {
    Rng split_rng(mix_seed(cfg.train.seed, kTagSplit));
    std::vector<size_t> order(train_entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), split_rng);
    const size_t val_count = std::max<size_t>(1, train_entries.size() / 10);
    std::vector<ManifestEntry> new_train;
    for (size_t i = 0; i < order.size(); ++i)
      (i < val_count ? val_entries : new_train).push_back(train_entries[order[i]]);
    train_entries = std::move(new_train);
  } else {
    val_entries = train_entries;  // single utterance: validate on it
  }

  std::vector<UtterancePair> train_pairs, val_pairs;
  for (const auto& e : train_entries) train_pairs.push_back(load_pair(e));
  for (const auto& e : val_entries) val_pairs.push_back(load_pair(e));

  // Optional externally computed feature stacks, one file per utterance id.
  std::vector<FeatureStack<float>> external;
  const bool use_external = !cfg.external_features_dir.empty();
  if (use_external) {
    for (const auto& e : train_entries)
      external.push_back(load_feature_stack(
          (std::filesystem::path(cfg.external_features_dir) / (e.id + ".cse1")).string()));
  }

  Trainer trainer = resume_path.empty()
                        ? Trainer(cfg)
                        : Trainer::load_checkpoint(resume_path, std::optional<FullConfig>(cfg));

  const std::string last_path = (std::filesystem::path(out_dir) / "last.ckpt").string();
  const std::string best_path = (std::filesystem::path(out_dir) / "best.ckpt").string();
  const std::string metrics_path = (std::filesystem::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) fail(ErrorKind::Io, "train: cannot open metrics log: " + metrics_path);

  const int64_t n_train = static_cast<int64_t>(train_pairs.size());
  const int64_t steps_per_epoch = (n_train + cfg.train.batch_size - 1) / cfg.train.batch_size;

  TrainResult result;
  result.last_path = last_path;
  result.best_path = best_path;
  result.metrics_path = metrics_path;

  for (int64_t epoch = trainer.epoch(); epoch < cfg.train.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.train.seed, kTagShuffle, static_cast<uint64_t>(epoch)));
    std::vector<int64_t> order(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown last_losses;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<TrainItem> batch;
      std::vector<FeatureStack<float>> cropped(static_cast<size_t>(cfg.train.batch_size));
      for (int64_t b = 0; b < cfg.train.batch_size; ++b) {
        const int64_t pos = s * cfg.train.batch_size + b;
        if (pos >= n_train) break;
        const int64_t idx = order[static_cast<size_t>(pos)];
        Rng crop_rng(mix_seed(cfg.train.seed, kTagCrop,
                              static_cast<uint64_t>(epoch) * 1000003ull +
                                  static_cast<uint64_t>(idx)));
        batch.push_back(crop_pair(train_pairs[static_cast<size_t>(idx)],
                                  use_external ? &external[static_cast<size_t>(idx)] : nullptr,
                                  &cropped[static_cast<size_t>(b)], cfg.train.crop_frames,
                                  cfg.model.stft, crop_rng));
      }
      last_losses = trainer.step(batch);
    }

    ValidationReport report = validate(trainer.model(), cfg, val_pairs);
    nlohmann::json line = {
        {"epoch", epoch},
        {"l_se", report.losses.l_se},
        {"l_vq", report.losses.l_vq},
        {"l_ce", report.losses.l_ce},
        {"total", report.losses.total},
        {"si_sdr", report.si_sdr},
        {"noisy_si_sdr", report.noisy_si_sdr},
        {"token_acc@N", report.token_acc.mean},
        {"token_acc_per_n", report.token_acc.per_n},
        {"train_total", last_losses.total},
    };
    metrics << line.dump() << "\n";
    metrics.flush();

    trainer.set_epoch(epoch + 1);
    trainer.save_checkpoint(last_path);
    if (report.si_sdr > trainer.best_metric()) {
      trainer.set_best_metric(report.si_sdr);
      trainer.save_checkpoint(best_path);
    }
    result.final_losses = last_losses;
    result.best_si_sdr = trainer.best_metric();
  }

  if (!std::filesystem::exists(best_path)) trainer.save_checkpoint(best_path);
  if (!std::filesystem::exists(last_path)) trainer.save_checkpoint(last_path);
  return result;
}

}  // namespace cse

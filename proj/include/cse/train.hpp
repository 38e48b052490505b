// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// One-stage multi-task optimization: L = lambda_se*L_se + lambda_vq*L_vq +
// lambda_ce*L_ce, with the exact assembly order
// ((lambda_se*l_se) + (lambda_vq*l_vq)) + (lambda_ce*l_ce). One step =
// forward, backward, Adam update, then the EMA codebook update (fixed order).

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cse/audio.hpp"
#include "cse/config.hpp"
#include "cse/metrics.hpp"
#include "cse/model.hpp"

namespace cse {

// Mean absolute error against the clean log1p features.
template <typename S>
Tensor<S> se_loss(const Tensor<S>& y_prime, const Tensor<S>& x_hat) {
  return l1_loss(y_prime, x_hat);
}

// Mean negative log-softmax of the realized future tokens: group n of the
// logits at frame t predicts token t+n; t ranges over [0, T-N). Targets are
// integer indices and carry no gradient.
template <typename S>
Tensor<S> semantic_ce_loss(const Tensor<S>& logits, const std::vector<int64_t>& tokens,
                           int64_t predict_n, int64_t codebook_size) {
  const int64_t t_total = logits.dim(0);
  check(logits.rank() == 2 && logits.dim(1) == predict_n * codebook_size, ErrorKind::Shape,
        "semantic_ce_loss: logits must be [T, N*K]");
  check(static_cast<int64_t>(tokens.size()) == t_total, ErrorKind::Shape,
        "semantic_ce_loss: token count mismatch");
  check(t_total > predict_n, ErrorKind::Shape,
        "semantic_ce_loss: no valid positions (T <= N)");
  const int64_t rows = t_total - predict_n;
  Tensor<S> acc;
  for (int64_t n = 1; n <= predict_n; ++n) {
    Tensor<S> group = slice_rows(slice_cols(logits, (n - 1) * codebook_size, codebook_size), 0, rows);
    std::vector<int64_t> targets(tokens.begin() + n, tokens.begin() + n + rows);
    Tensor<S> ce = cross_entropy_rows(group, targets);
    acc = n == 1 ? ce : add(acc, ce);
  }
  return scale(acc, 1.0 / static_cast<double>(predict_n));
}

struct LossBreakdown {
  double l_se = 0;
  double l_vq = 0;
  double l_vq_recon = 0;
  double l_vq_codebook = 0;
  double l_vq_commit = 0;
  double l_ce = 0;
  double total = 0;
};

struct TrainItem {
  WaveBuffer noisy;
  WaveBuffer clean;
  const FeatureStack<float>* external_ssl = nullptr;
};

class Trainer {
 public:
  explicit Trainer(const FullConfig& cfg);

  // One MTL step over a batch: forward each item, mean the losses, one
  // backward, one Adam step, one EMA codebook update.
  LossBreakdown step(const std::vector<TrainItem>& batch);

  SeModel<float>& model() { return model_; }
  const SeModel<float>& model() const { return model_; }
  const FullConfig& config() const { return cfg_; }
  AdamState<float>& adam() { return adam_; }
  int64_t epoch() const { return epoch_; }
  void set_epoch(int64_t e) { epoch_ = e; }
  double best_metric() const { return best_metric_; }
  void set_best_metric(double m) { best_metric_ = m; }

  void save_checkpoint(const std::string& path) const;
  // Rebuilds a trainer from a checkpoint. If expected_config is given, its
  // echo must match the stored one exactly (structural error otherwise).
  static Trainer load_checkpoint(const std::string& path,
                                 const std::optional<FullConfig>& expected_config = {});

 private:
  void seed_codebook_from(const std::vector<TrainItem>& batch);

  FullConfig cfg_;
  SeModel<float> model_;
  std::vector<Tensor<float>> trainable_;
  AdamState<float> adam_;
  int64_t epoch_ = 0;
  double best_metric_ = -1e300;
};

struct ValidationReport {
  LossBreakdown losses;      // averaged over utterances
  double si_sdr = 0;         // enhanced vs clean
  double noisy_si_sdr = 0;   // unprocessed baseline
  TokenAccuracy token_acc;
};

ValidationReport validate(const SeModel<float>& model, const FullConfig& cfg,
                          const std::vector<UtterancePair>& pairs);

struct TrainResult {
  std::string last_path;
  std::string best_path;
  std::string metrics_path;
  LossBreakdown final_losses;
  double best_si_sdr = 0;
};

// Full loop: epoch shuffling and crops are derived from (seed, epoch, item)
// so a resumed run reproduces an uninterrupted one exactly. Writes last.ckpt,
// best.ckpt (by validation SI-SDR), and metrics.jsonl under out_dir. When no
// validation manifest is given, a deterministic 10% split (at least one
// utterance) is carved from the training manifest.
TrainResult train_loop(const DatasetManifest& manifest, const FullConfig& cfg,
                       const std::string& out_dir,
                       const DatasetManifest* val_manifest = nullptr,
                       const std::string& resume_path = "");

// Fixed-frame random crop used by the training loop; exposed for tests.
TrainItem crop_pair(const UtterancePair& pair, const FeatureStack<float>* stack,
                    FeatureStack<float>* cropped_stack, int64_t crop_frames,
                    const StftConfig& stft, Rng& rng);

}  // namespace cse

// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// JSON configuration with strict schema (unknown keys rejected) and two
// shipped presets: "paper" (full-size hyperparameters) and "desk" (shrunk
// widths, 30 epochs — sized for a laptop CPU).

#pragma once

#include <string>

#include "cse/model.hpp"

namespace cse {

struct TrainConfig {
  double lambda_se = 1.0;
  double lambda_vq = 1.0;
  double lambda_ce = 0.01;
  double lr = 1e-4;
  int64_t epochs = 30;
  int64_t batch_size = 4;
  int64_t crop_frames = 96;
  uint64_t seed = 1234;

  void validate() const {
    check(lambda_se >= 0 && lambda_vq >= 0 && lambda_ce >= 0, ErrorKind::Config,
          "train: loss weights must be >= 0");
    check(epochs >= 1 && batch_size >= 1 && crop_frames >= 2, ErrorKind::Config,
          "train: epochs/batch/crop must be positive");
    check(lr > 0, ErrorKind::Config, "train: learning rate must be positive");
  }
};

struct FullConfig {
  ModelConfig model;
  TrainConfig train;
  std::string external_features_dir;  // optional: per-utterance feature files

  void validate() const {
    model.validate();
    train.validate();
  }
};

FullConfig preset_desk();
FullConfig preset_paper();
FullConfig preset_by_name(const std::string& name);

// Applies a JSON document on top of `base`. Unknown sections or keys raise
// ErrorKind::Config naming the offender.
FullConfig apply_config_json(const std::string& json_text, const FullConfig& base);

// Full round-trippable echo of every setting.
std::string config_to_json(const FullConfig& cfg);

// Echo of the architecture-determining sections only (everything except
// train); used for structural compatibility checks on checkpoint load.
std::string config_architecture_json(const FullConfig& cfg);

FullConfig load_config_file(const std::string& path, const FullConfig& base);

}  // namespace cse

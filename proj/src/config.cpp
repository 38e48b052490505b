// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cse/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cse {

using nlohmann::json;

namespace {

std::string variant_name(InputVariant v) {
  switch (v) {
    case InputVariant::RawSsl: return "raw_ssl";
    case InputVariant::PlusIndexEmbedding: return "index_embedding";
    case InputVariant::PlusCodebookVector: return "codebook_vector";
  }
  return "codebook_vector";
}

InputVariant variant_from(const std::string& s) {
  if (s == "raw_ssl") return InputVariant::RawSsl;
  if (s == "index_embedding") return InputVariant::PlusIndexEmbedding;
  if (s == "codebook_vector") return InputVariant::PlusCodebookVector;
  fail(ErrorKind::Config, "config: unknown input variant '" + s + "'");
}

std::string fusion_name(FusionMode f) { return f == FusionMode::Film ? "film" : "concat"; }

FusionMode fusion_from(const std::string& s) {
  if (s == "film") return FusionMode::Film;
  if (s == "concat") return FusionMode::Concat;
  fail(ErrorKind::Config, "config: unknown fusion mode '" + s + "'");
}

// Pulls a key of JSON type T, enforcing presence in the allowed set.
template <typename T>
void take(const json& obj, const std::string& section, const std::string& key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config: bad value for " + section + "." + key + ": " + e.what());
  }
}

void reject_unknown(const json& obj, const std::string& section, const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      fail(ErrorKind::Config, "config: unknown key '" + section + "." + it.key() + "'");
}

}  // namespace

FullConfig preset_desk() {
  FullConfig cfg;
  cfg.model.stft = StftConfig{640, 320, 1024};
  cfg.model.ssl.layer_count = 4;
  cfg.model.ssl.width = 128;
  cfg.model.ssl.heads = 4;
  cfg.model.ssl.frame_samples = 640;
  cfg.model.ssl.causal = true;
  cfg.model.ssl.freeze_frontend = true;
  cfg.model.vq.codebook_size = 256;
  cfg.model.vq.code_dim = 64;
  cfg.model.vq.commitment_xi = 0.1;
  cfg.model.vq.ema_decay = 0.99;
  cfg.model.g_width = 128;
  cfg.model.f_width = 128;
  cfg.model.heads = 4;
  cfg.model.layers = 3;
  cfg.model.variant = InputVariant::PlusCodebookVector;
  cfg.model.fusion = FusionMode::Film;
  cfg.model.emb_dim = 64;
  cfg.model.predict_n = 5;
  cfg.train = TrainConfig{};  // lambdas {1, 1, 0.01}, 30 epochs
  cfg.train.lr = 3e-4;        // desk-sized models train from scratch; see paper preset for 1e-4
  return cfg;
}

FullConfig preset_paper() {
  FullConfig cfg = preset_desk();
  // Full-size settings: WavLM-base-sized surrogate, 1024 codewords,
  // 512/256-wide encoders, 200 epochs.
  cfg.model.ssl.layer_count = 12;
  cfg.model.ssl.width = 768;
  cfg.model.vq.codebook_size = 1024;
  cfg.model.g_width = 512;
  cfg.model.f_width = 256;
  cfg.train.lr = 1e-4;
  cfg.train.epochs = 200;
  cfg.train.batch_size = 16;
  cfg.train.crop_frames = 256;
  return cfg;
}

FullConfig preset_by_name(const std::string& name) {
  if (name == "desk") return preset_desk();
  if (name == "paper") return preset_paper();
  fail(ErrorKind::Config, "config: unknown preset '" + name + "' (want desk|paper)");
}

FullConfig apply_config_json(const std::string& json_text, const FullConfig& base) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config: parse error: ") + e.what());
  }
  check(root.is_object(), ErrorKind::Config, "config: top level must be an object");
  reject_unknown(root, "", {"stft", "ssl", "vq", "model", "train"});

  FullConfig cfg = base;
  if (root.contains("stft")) {
    const json& s = root["stft"];
    reject_unknown(s, "stft", {"win", "hop", "fft"});
    take(s, "stft", "win", cfg.model.stft.win_length);
    take(s, "stft", "hop", cfg.model.stft.hop_length);
    take(s, "stft", "fft", cfg.model.stft.fft_size);
    cfg.model.ssl.frame_samples = cfg.model.stft.win_length;
  }
  if (root.contains("ssl")) {
    const json& s = root["ssl"];
    reject_unknown(s, "ssl",
                   {"I", "D_ssl", "causal", "freeze_frontend", "external_features_path"});
    take(s, "ssl", "I", cfg.model.ssl.layer_count);
    take(s, "ssl", "D_ssl", cfg.model.ssl.width);
    take(s, "ssl", "causal", cfg.model.ssl.causal);
    take(s, "ssl", "freeze_frontend", cfg.model.ssl.freeze_frontend);
    take(s, "ssl", "external_features_path", cfg.external_features_dir);
  }
  if (root.contains("vq")) {
    const json& s = root["vq"];
    reject_unknown(s, "vq", {"K", "D_code", "xi", "gamma_ema"});
    take(s, "vq", "K", cfg.model.vq.codebook_size);
    take(s, "vq", "D_code", cfg.model.vq.code_dim);
    take(s, "vq", "xi", cfg.model.vq.commitment_xi);
    take(s, "vq", "gamma_ema", cfg.model.vq.ema_decay);
  }
  if (root.contains("model")) {
    const json& s = root["model"];
    reject_unknown(s, "model",
                   {"D_g", "D_f", "heads", "layers", "variant", "fusion", "D_emb", "N"});
    take(s, "model", "D_g", cfg.model.g_width);
    take(s, "model", "D_f", cfg.model.f_width);
    take(s, "model", "heads", cfg.model.heads);
    take(s, "model", "layers", cfg.model.layers);
    if (s.contains("variant")) cfg.model.variant = variant_from(s["variant"].get<std::string>());
    if (s.contains("fusion")) cfg.model.fusion = fusion_from(s["fusion"].get<std::string>());
    take(s, "model", "D_emb", cfg.model.emb_dim);
    take(s, "model", "N", cfg.model.predict_n);
  }
  if (root.contains("train")) {
    const json& s = root["train"];
    reject_unknown(s, "train",
                   {"lambda_se", "lambda_vq", "lambda_ce", "lr", "epochs", "batch", "crop_frames",
                    "seed"});
    take(s, "train", "lambda_se", cfg.train.lambda_se);
    take(s, "train", "lambda_vq", cfg.train.lambda_vq);
    take(s, "train", "lambda_ce", cfg.train.lambda_ce);
    take(s, "train", "lr", cfg.train.lr);
    take(s, "train", "epochs", cfg.train.epochs);
    take(s, "train", "batch", cfg.train.batch_size);
    take(s, "train", "crop_frames", cfg.train.crop_frames);
    take(s, "train", "seed", cfg.train.seed);
  }
  // Pseudo-ssl attention heads follow the model head count.
  cfg.model.ssl.heads = cfg.model.heads;
  cfg.validate();
  return cfg;
}

std::string config_to_json(const FullConfig& cfg) {
  json root;
  root["stft"] = {{"win", cfg.model.stft.win_length},
                  {"hop", cfg.model.stft.hop_length},
                  {"fft", cfg.model.stft.fft_size}};
  root["ssl"] = {{"I", cfg.model.ssl.layer_count},
                 {"D_ssl", cfg.model.ssl.width},
                 {"causal", cfg.model.ssl.causal},
                 {"freeze_frontend", cfg.model.ssl.freeze_frontend}};
  if (!cfg.external_features_dir.empty())
    root["ssl"]["external_features_path"] = cfg.external_features_dir;
  root["vq"] = {{"K", cfg.model.vq.codebook_size},
                {"D_code", cfg.model.vq.code_dim},
                {"xi", cfg.model.vq.commitment_xi},
                {"gamma_ema", cfg.model.vq.ema_decay}};
  root["model"] = {{"D_g", cfg.model.g_width},     {"D_f", cfg.model.f_width},
                   {"heads", cfg.model.heads},     {"layers", cfg.model.layers},
                   {"variant", variant_name(cfg.model.variant)},
                   {"fusion", fusion_name(cfg.model.fusion)},
                   {"D_emb", cfg.model.emb_dim},   {"N", cfg.model.predict_n}};
  root["train"] = {{"lambda_se", cfg.train.lambda_se},
                   {"lambda_vq", cfg.train.lambda_vq},
                   {"lambda_ce", cfg.train.lambda_ce},
                   {"lr", cfg.train.lr},
                   {"epochs", cfg.train.epochs},
                   {"batch", cfg.train.batch_size},
                   {"crop_frames", cfg.train.crop_frames},
                   {"seed", cfg.train.seed}};
  return root.dump(2);
}

std::string config_architecture_json(const FullConfig& cfg) {
  json root = json::parse(config_to_json(cfg));
  root.erase("train");
  return root.dump(2);
}

FullConfig load_config_file(const std::string& path, const FullConfig& base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "config: file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return apply_config_json(ss.str(), base);
}

}  // namespace cse

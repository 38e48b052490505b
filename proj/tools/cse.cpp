// Copyright 2026 the cse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Command-line surface: train, enhance (batch/streaming), eval, tokens,
// gradcheck, mkdata. Exit codes: 0 success, 2 usage/config, 3 numerical
// failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "cse/gradcheck.hpp"
#include "cse/metrics.hpp"
#include "cse/streaming.hpp"
#include "cse/train.hpp"

namespace {

using namespace cse;

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Numeric: return 3;
    case ErrorKind::Io: return 4;
    case ErrorKind::Format: return 4;
    default: return 2;
  }
}

FullConfig resolve_config(const std::string& preset, const std::string& config_path) {
  FullConfig cfg = preset_by_name(preset);
  if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
  return cfg;
}

int cmd_train(const std::string& preset, const std::string& config_path,
              const std::string& manifest_path, const std::string& out_dir,
              const std::string& val_manifest_path, const std::string& resume) {
  FullConfig cfg = resolve_config(preset, config_path);
  DatasetManifest manifest = read_manifest(manifest_path);
  std::optional<DatasetManifest> val;
  if (!val_manifest_path.empty()) val = read_manifest(val_manifest_path);
  TrainResult result =
      train_loop(manifest, cfg, out_dir, val.has_value() ? &*val : nullptr, resume);
  std::printf("training done: last=%s best=%s metrics=%s best_si_sdr=%.2f dB\n",
              result.last_path.c_str(), result.best_path.c_str(), result.metrics_path.c_str(),
              result.best_si_sdr);
  return 0;
}

int cmd_enhance(const std::string& checkpoint, const std::string& input,
                const std::string& output, bool streaming, double chunk_ms) {
  Trainer trainer = Trainer::load_checkpoint(checkpoint);
  WaveBuffer noisy = read_wav(input);
  check(noisy.sample_rate == kSampleRate, ErrorKind::Config,
        "enhance: input must be 16 kHz (got " + std::to_string(noisy.sample_rate) + " Hz)");
  WaveBuffer enhanced;
  if (streaming) {
    const int64_t chunk = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(chunk_ms * 1e-3 * kSampleRate)));
    enhanced = enhance_streaming(trainer.model(), noisy, chunk);
  } else {
    enhanced = enhance_batch(trainer.model(), noisy);
  }
  enhanced.sample_rate = noisy.sample_rate;
  write_wav(output, enhanced);
  std::printf("enhanced %s -> %s (%lld samples, %s)\n", input.c_str(), output.c_str(),
              static_cast<long long>(enhanced.size()), streaming ? "streaming" : "batch");
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& report_path, bool force_unit_mask) {
  Trainer trainer = Trainer::load_checkpoint(checkpoint);
  const SeModel<float>& model = trainer.model();
  DatasetManifest manifest = read_manifest(manifest_path);
  check(!manifest.entries.empty(), ErrorKind::Config, "eval: empty manifest");

  nlohmann::json utterances = nlohmann::json::array();
  double noisy_si = 0, enh_si = 0, noisy_lsd = 0, enh_lsd = 0, tok_acc = 0;
  for (const auto& entry : manifest.entries) {
    UtterancePair pair = load_pair(entry);
    WaveBuffer enhanced;
    if (force_unit_mask) {
      SpectrogramComplex spec = stft(pair.noisy, model.config().stft);
      enhanced = reconstruct_from_logmag(log1p_features(spec), spec);
    } else {
      enhanced = enhance_batch(model, pair.noisy);
    }
    WaveBuffer clean_trim, noisy_trim;
    clean_trim.samples.assign(pair.clean.samples.begin(),
                              pair.clean.samples.begin() + enhanced.size());
    noisy_trim.samples.assign(pair.noisy.samples.begin(),
                              pair.noisy.samples.begin() + enhanced.size());
    ForwardResult<float> fwd = model.forward(pair.noisy);
    TokenAccuracy acc = token_accuracy(fwd.sem_logits, model.config().predict_n,
                                       model.config().vq.codebook_size, fwd.vq.indices);
    nlohmann::json u = {
        {"id", entry.id},
        {"noisy_si_sdr", si_sdr_db(clean_trim, noisy_trim)},
        {"enhanced_si_sdr", si_sdr_db(clean_trim, enhanced)},
        {"noisy_lsd", log_spectral_distance(clean_trim, noisy_trim, model.config().stft)},
        {"enhanced_lsd", log_spectral_distance(clean_trim, enhanced, model.config().stft)},
        {"token_acc", acc.mean},
        {"token_acc_per_n", acc.per_n},
    };
    noisy_si += u["noisy_si_sdr"].get<double>();
    enh_si += u["enhanced_si_sdr"].get<double>();
    noisy_lsd += u["noisy_lsd"].get<double>();
    enh_lsd += u["enhanced_lsd"].get<double>();
    tok_acc += acc.mean;
    utterances.push_back(std::move(u));
  }
  const double inv = 1.0 / static_cast<double>(manifest.entries.size());
  nlohmann::json report = {
      {"utterances", utterances},
      {"aggregate",
       {{"noisy_si_sdr", noisy_si * inv},
        {"enhanced_si_sdr", enh_si * inv},
        {"si_sdr_improvement", (enh_si - noisy_si) * inv},
        {"noisy_lsd", noisy_lsd * inv},
        {"enhanced_lsd", enh_lsd * inv},
        {"token_acc", tok_acc * inv}}},
  };
  if (report_path.empty() || report_path == "-") {
    std::cout << report.dump(2) << "\n";
  } else {
    std::ofstream out(report_path);
    if (!out) fail(ErrorKind::Io, "eval: cannot open report file: " + report_path);
    out << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_tokens(const std::string& checkpoint, const std::string& input, int64_t predict) {
  Trainer trainer = Trainer::load_checkpoint(checkpoint);
  const SeModel<float>& model = trainer.model();
  check(predict <= model.config().predict_n, ErrorKind::Config,
        "tokens: --predict exceeds the model's configured N");
  WaveBuffer wave = read_wav(input);
  ForwardResult<float> fwd = model.forward(wave);
  const int64_t k = model.config().vq.codebook_size;
  const int64_t n_total = model.config().predict_n;
  for (int64_t t = 0; t < static_cast<int64_t>(fwd.vq.indices.size()); ++t) {
    std::printf("%lld\t%lld", static_cast<long long>(t),
                static_cast<long long>(fwd.vq.indices[static_cast<size_t>(t)]));
    for (int64_t n = 1; n <= predict; ++n) {
      const float* group = fwd.sem_logits.data() + t * n_total * k + (n - 1) * k;
      int64_t best = 0;
      for (int64_t kk = 1; kk < k; ++kk)
        if (group[kk] > group[best]) best = kk;
      std::printf("\t%lld", static_cast<long long>(best));
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed, const std::string& corrupt) {
  GradcheckOptions opt;
  opt.seed = seed;
  opt.corrupt_component = corrupt;
  std::vector<GradcheckResult> results = run_gradcheck(opt);
  bool all_pass = true;
  std::printf("%-24s %-12s %s\n", "component", "max_rel_err", "status");
  for (const auto& r : results) {
    std::printf("%-24s %-12.3e %s\n", r.component.c_str(), r.max_rel_err,
                r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) fail(ErrorKind::Numeric, "gradcheck: at least one component failed");
  return 0;
}

int cmd_mkdata(const std::string& out_dir, int count, double duration, uint64_t seed,
               double snr_lo, double snr_hi) {
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  Rng rng(mix_seed(seed, 0xDA7A));
  std::uniform_real_distribution<double> snr_dist(snr_lo, snr_hi);
  std::uniform_real_distribution<double> dur_jitter(0.85, 1.15);
  for (int i = 0; i < count; ++i) {
    const uint64_t item_seed = mix_seed(seed, static_cast<uint64_t>(i));
    const double dur = duration * dur_jitter(rng);
    WaveBuffer clean = synth_speechlike(dur, item_seed);
    const NoiseKind kind = i % 3 == 0   ? NoiseKind::White
                           : i % 3 == 1 ? NoiseKind::Pink
                                        : NoiseKind::BabbleSurrogate;
    WaveBuffer noise = synth_noise(dur + 0.3, kind, mix_seed(item_seed, 1));
    MixSpec spec{snr_dist(rng), kind, mix_seed(item_seed, 2)};
    WaveBuffer noisy = mix_at_snr(clean, noise, spec);
    const std::string id = "utt" + std::to_string(i);
    write_wav(out_dir + "/" + id + "_clean.wav", clean);
    write_wav(out_dir + "/" + id + "_noisy.wav", noisy);
    manifest.entries.push_back({id, id + "_noisy.wav", id + "_clean.wav"});
  }
  const std::string manifest_path = out_dir + "/manifest.jsonl";
  write_manifest(manifest_path, manifest);
  std::printf("wrote %d pairs and %s\n", count, manifest_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal speech enhancement with quantized semantic token prediction"};
  app.require_subcommand(1);

  std::string preset = "desk", config_path, manifest_path, out_dir, val_manifest, resume;
  auto* train = app.add_subcommand("train", "train a model on a manifest of noisy/clean pairs");
  train->add_option("--preset", preset, "configuration preset (desk|paper)");
  train->add_option("--config", config_path, "JSON config overriding the preset");
  train->add_option("--manifest", manifest_path, "training manifest (JSON lines)")->required();
  train->add_option("--out-dir", out_dir, "output directory for checkpoints and metrics")
      ->required();
  train->add_option("--val-manifest", val_manifest, "explicit validation manifest");
  train->add_option("--resume", resume, "checkpoint to resume from");

  std::string checkpoint, input, output;
  bool streaming = false;
  double chunk_ms = 20.0;
  auto* enhance = app.add_subcommand("enhance", "enhance a wav file");
  enhance->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  enhance->add_option("--input", input, "noisy input wav")->required();
  enhance->add_option("--output", output, "enhanced output wav")->required();
  enhance->add_flag("--streaming", streaming, "process incrementally in chunks");
  enhance->add_option("--chunk-ms", chunk_ms, "streaming chunk size in milliseconds");

  std::string report_path;
  bool force_unit_mask = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--manifest", manifest_path, "evaluation manifest")->required();
  eval->add_option("--report", report_path, "report path ('-' for stdout)");
  eval->add_flag("--force-unit-mask", force_unit_mask,
                 "debug: bypass the model with an all-ones mask");

  int64_t predict = 0;
  auto* tokens = app.add_subcommand("tokens", "dump semantic tokens per frame");
  tokens->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  tokens->add_option("--input", input, "input wav")->required();
  tokens->add_option("--predict", predict, "also print the predicted next n tokens");

  uint64_t seed = 1;
  std::string corrupt;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--config", config_path, "accepted for symmetry; the suite runs tiny");
  gradcheck->add_option("--seed", seed, "probe seed");
  auto* corrupt_opt = gradcheck->add_option("--corrupt", corrupt, "fault injection (testing)");
  corrupt_opt->group("");  // hidden

  int count = 20;
  double duration = 2.0, snr_lo = 0.0, snr_hi = 10.0;
  auto* mkdata = app.add_subcommand("mkdata", "generate a synthetic noisy/clean dataset");
  mkdata->add_option("--out-dir", out_dir, "output directory")->required();
  mkdata->add_option("--count", count, "number of utterance pairs");
  mkdata->add_option("--duration", duration, "nominal utterance length in seconds");
  mkdata->add_option("--seed", seed, "generation seed");
  mkdata->add_option("--snr-lo", snr_lo, "lowest mixing SNR in dB");
  mkdata->add_option("--snr-hi", snr_hi, "highest mixing SNR in dB");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(train))
      return cmd_train(preset, config_path, manifest_path, out_dir, val_manifest, resume);
    if (app.got_subcommand(enhance))
      return cmd_enhance(checkpoint, input, output, streaming, chunk_ms);
    if (app.got_subcommand(eval))
      return cmd_eval(checkpoint, manifest_path, report_path, force_unit_mask);
    if (app.got_subcommand(tokens)) return cmd_tokens(checkpoint, input, predict);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(seed, corrupt);
    if (app.got_subcommand(mkdata))
      return cmd_mkdata(out_dir, count, duration, seed, snr_lo, snr_hi);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}

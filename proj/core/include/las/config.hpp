#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "las/decoder.hpp"
#include "las/frontend.hpp"
#include "las/model.hpp"
#include "las/training.hpp"

namespace las {

// Flat key = value configuration ('#' starts a comment). Unknown keys are
// rejected with the key name and line number; every key below has the
// shipped default. load_config on an empty file returns exactly these
// defaults.
struct Config {
  std::uint64_t seed = 0;

  // frontend
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double preemphasis = 0.97;
  std::int64_t mel_bins = 40;
  double mel_low_hz = 20.0;
  bool cmvn = false;

  // word pieces
  std::int64_t bpe_target_size = 500;

  // model
  std::int64_t feat_dim = 40;
  std::int64_t listener_layers = 3;
  std::int64_t listener_width = 1024;
  std::int64_t speller_layers = 2;
  std::int64_t speller_width = 512;
  std::int64_t embed_dim = 0;      // 0 -> speller_width
  std::int64_t attention_dim = 0;  // 0 -> speller_width
  std::int64_t attention_filters = 20;
  std::int64_t attention_kernel = 100;
  std::string attention_mode = "accumulated";  // or "previous"

  // CE training
  std::int64_t epochs = 20;
  std::int64_t batch_size = 4;
  double lr_start = 0.0002;
  double lr_end = 0.002;
  std::int64_t warmup_steps = 2000;
  double newbob_decay = 0.9;
  double newbob_threshold = 1e-3;
  double label_smoothing = 0.01;
  std::string sampling_strategy = "plateau-step";  // linear-ramp | constant
  double sampling_base = 0.1;
  double sampling_boosted = 0.2;
  double sampling_fixed = 0.1;
  double sampling_start = 0.0;
  double sampling_end = 0.2;
  std::int64_t sampling_ramp_steps = 10000;
  double grad_ema_decay = 0.95;
  double grad_std_factor = 2.0;
  double grad_static_cap = 5.0;

  // MWER
  std::int64_t mwer_n = 4;
  double mwer_gamma = 0.5;
  double mwer_lambda = 0.01;
  std::int64_t mwer_epochs = 2;
  double mwer_lr = 0.001;
  std::int64_t mwer_beam = 8;

  // decoding
  std::int64_t beam = 16;
  std::int64_t nbest = 16;
  double lm_weight = 0.3;
  double length_alpha = 0.6;
  std::int64_t max_steps = 0;  // 0 -> 2U+10

  // language models
  double unk_penalty = -10.0;  // log10
  std::int64_t ngram_order = 3;
  double ngram_discount = 0.4;
  std::int64_t nnlm_layers = 2;
  std::int64_t nnlm_width = 1024;
  std::int64_t nnlm_embed = 256;
  double nnlm_lr = 0.001;
  std::int64_t nnlm_epochs = 20;
  std::int64_t nnlm_batch_size = 8;

  ModelConfig model_config() const;
  FrontendConfig frontend_config() const;
  TrainOptions train_options() const;
  MwerOptions mwer_options() const;
  BeamConfig beam_config() const;
  NnLmConfig nnlm_config(std::int64_t vocab_size) const;
};

Config load_config(const std::filesystem::path& path);
// Validation shared by load_config and programmatic setup; throws
// ConfigError on out-of-range values.
void validate_config(const Config& cfg);

}  // namespace las

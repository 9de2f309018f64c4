#include <doctest.h>

#include <fstream>

#include "las/config.hpp"
#include "las/errors.hpp"
#include "testutil.hpp"

using namespace las;

namespace {
std::filesystem::path write_cfg(const std::string& body) {
  static int counter = 0;
  const auto dir = lastest::test_tmpdir("cfg" + std::to_string(counter++));
  const auto p = dir / "c.cfg";
  std::ofstream os(p, std::ios::binary);
  os << body;
  return p;
}
}  // namespace

TEST_CASE("empty config file gives the shipped defaults") {
  const Config cfg = load_config(write_cfg(""));
  CHECK(cfg.lr_end == 0.002);
  CHECK(cfg.lr_start == 0.0002);
  CHECK(cfg.newbob_decay == 0.9);
  CHECK(cfg.grad_ema_decay == 0.95);
  CHECK(cfg.grad_std_factor == 2.0);
  CHECK(cfg.grad_static_cap == 5.0);
  CHECK(cfg.bpe_target_size == 500);
  CHECK(cfg.attention_filters == 20);
  CHECK(cfg.attention_kernel == 100);
  CHECK(cfg.label_smoothing == 0.01);
  CHECK(cfg.mwer_n == 4);
  CHECK(cfg.mwer_lambda == 0.01);
  CHECK(cfg.mwer_gamma == 0.5);
  CHECK(cfg.beam == 16);
  CHECK(cfg.nbest == 16);
  CHECK(cfg.listener_layers == 3);
  CHECK(cfg.listener_width == 1024);
  CHECK(cfg.speller_layers == 2);
  CHECK(cfg.speller_width == 512);
  CHECK(cfg.mel_bins == 40);
}

TEST_CASE("config parsing, comments and aliases") {
  const Config cfg = load_config(write_cfg(
      "# a comment\n"
      "label_smoothing = 0.01\n"
      "beam = 8   # trailing comment\n"
      "nbest = 8\n"
      "sampling_strategy = constant\n"
      "seed = 77\n"));
  CHECK(cfg.label_smoothing == 0.01);
  CHECK(cfg.beam == 8);
  CHECK(cfg.seed == 77);
  CHECK(cfg.sampling_strategy == "constant");

  // "smoothing" is an accepted alias
  CHECK(load_config(write_cfg("smoothing = 0.05\n")).label_smoothing == 0.05);
}

TEST_CASE("config rejects unknown keys, bad types and out-of-range values") {
  CHECK_THROWS_AS(load_config(write_cfg("no_such_key = 1\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("beam = fast\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("label_smoothing = 2.0\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("mwer_gamma = 0\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("mwer_gamma = 1.5\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("beam = 2\nnbest = 4\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("unk_penalty = 3\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("attention_mode = sideways\n")), ConfigError);
  CHECK_THROWS_AS(load_config(write_cfg("this line has no equals\n")), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/path.cfg"), IoError);

  // the error names the key and line
  try {
    load_config(write_cfg("beam = 8\nwat = 1\n"));
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(e.key() == "wat");
    CHECK(e.line() == 2);
  }
}

TEST_CASE("config maps into module option structs") {
  const Config cfg = load_config(write_cfg(
      "attention_mode = previous\n"
      "sampling_strategy = linear-ramp\n"
      "lm_weight = 0.25\n"
      "length_alpha = 0.3\n"));
  CHECK(cfg.model_config().attention_mode == AttentionMode::previous);
  CHECK(cfg.train_options().sampling.strategy == SamplingSchedule::Strategy::linear_ramp);
  CHECK(cfg.beam_config().lm_weight == 0.25);
  CHECK(cfg.beam_config().length_alpha == 0.3);
  CHECK(cfg.mwer_options().nbest == 4);
  CHECK(cfg.frontend_config().mel_bins == 40);
  CHECK(cfg.nnlm_config(100).vocab_size == 100);
}

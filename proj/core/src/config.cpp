#include "las/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "las/errors.hpp"

namespace las {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

struct Setter {
  std::function<void(Config&, const std::string&, long)> apply;
};

std::int64_t parse_int(const std::string& key, const std::string& v, long line) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, line, "expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v, long line) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, line, "expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v, long line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, line, "expected true/false, got '" + v + "'");
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto add_i64 = [&t](const char* key, std::int64_t Config::* field) {
      t[key] = Setter{[key, field](Config& c, const std::string& v, long line) { c.*field = parse_int(key, v, line); }};
    };
    auto add_f64 = [&t](const char* key, double Config::* field) {
      t[key] = Setter{[key, field](Config& c, const std::string& v, long line) { c.*field = parse_double(key, v, line); }};
    };
    auto add_bool = [&t](const char* key, bool Config::* field) {
      t[key] = Setter{[key, field](Config& c, const std::string& v, long line) { c.*field = parse_bool(key, v, line); }};
    };
    auto add_str = [&t](const char* key, std::string Config::* field) {
      t[key] = Setter{[field](Config& c, const std::string& v, long) { c.*field = v; }};
    };

    t["seed"] = Setter{[](Config& c, const std::string& v, long line) {
      c.seed = static_cast<std::uint64_t>(parse_int("seed", v, line));
    }};
    add_f64("window_ms", &Config::window_ms);
    add_f64("hop_ms", &Config::hop_ms);
    add_f64("preemphasis", &Config::preemphasis);
    add_i64("mel_bins", &Config::mel_bins);
    add_f64("mel_low_hz", &Config::mel_low_hz);
    add_bool("cmvn", &Config::cmvn);
    add_i64("bpe_target_size", &Config::bpe_target_size);
    add_i64("feat_dim", &Config::feat_dim);
    add_i64("listener_layers", &Config::listener_layers);
    add_i64("listener_width", &Config::listener_width);
    add_i64("speller_layers", &Config::speller_layers);
    add_i64("speller_width", &Config::speller_width);
    add_i64("embed_dim", &Config::embed_dim);
    add_i64("attention_dim", &Config::attention_dim);
    add_i64("attention_filters", &Config::attention_filters);
    add_i64("attention_kernel", &Config::attention_kernel);
    add_str("attention_mode", &Config::attention_mode);
    add_i64("epochs", &Config::epochs);
    add_i64("batch_size", &Config::batch_size);
    add_f64("lr_start", &Config::lr_start);
    add_f64("lr_end", &Config::lr_end);
    add_i64("warmup_steps", &Config::warmup_steps);
    add_f64("newbob_decay", &Config::newbob_decay);
    add_f64("newbob_threshold", &Config::newbob_threshold);
    add_f64("label_smoothing", &Config::label_smoothing);
    t["smoothing"] = t["label_smoothing"];  // accepted alias
    add_str("sampling_strategy", &Config::sampling_strategy);
    add_f64("sampling_base", &Config::sampling_base);
    add_f64("sampling_boosted", &Config::sampling_boosted);
    add_f64("sampling_fixed", &Config::sampling_fixed);
    add_f64("sampling_start", &Config::sampling_start);
    add_f64("sampling_end", &Config::sampling_end);
    add_i64("sampling_ramp_steps", &Config::sampling_ramp_steps);
    add_f64("grad_ema_decay", &Config::grad_ema_decay);
    add_f64("grad_std_factor", &Config::grad_std_factor);
    add_f64("grad_static_cap", &Config::grad_static_cap);
    add_i64("mwer_n", &Config::mwer_n);
    add_f64("mwer_gamma", &Config::mwer_gamma);
    add_f64("mwer_lambda", &Config::mwer_lambda);
    add_i64("mwer_epochs", &Config::mwer_epochs);
    add_f64("mwer_lr", &Config::mwer_lr);
    add_i64("mwer_beam", &Config::mwer_beam);
    add_i64("beam", &Config::beam);
    add_i64("nbest", &Config::nbest);
    add_f64("lm_weight", &Config::lm_weight);
    add_f64("length_alpha", &Config::length_alpha);
    add_i64("max_steps", &Config::max_steps);
    add_f64("unk_penalty", &Config::unk_penalty);
    add_i64("ngram_order", &Config::ngram_order);
    add_f64("ngram_discount", &Config::ngram_discount);
    add_i64("nnlm_layers", &Config::nnlm_layers);
    add_i64("nnlm_width", &Config::nnlm_width);
    add_i64("nnlm_embed", &Config::nnlm_embed);
    add_f64("nnlm_lr", &Config::nnlm_lr);
    add_i64("nnlm_epochs", &Config::nnlm_epochs);
    add_i64("nnlm_batch_size", &Config::nnlm_batch_size);
    return t;
  }();
  return table;
}

void check(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ConfigError(key, 0, what);
}

}  // namespace

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("config: cannot open: " + path.string());
  Config cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(t, line_no, "expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, line_no, "unknown key");
    it->second.apply(cfg, value, line_no);
  }
  validate_config(cfg);
  return cfg;
}

void validate_config(const Config& c) {
  check(c.window_ms > 0 && c.hop_ms > 0, "window_ms", "window and hop must be positive");
  check(c.preemphasis >= 0 && c.preemphasis < 1, "preemphasis", "must be in [0, 1)");
  check(c.mel_bins >= 1, "mel_bins", "must be >= 1");
  check(c.mel_low_hz >= 0, "mel_low_hz", "must be >= 0");
  check(c.bpe_target_size >= 5, "bpe_target_size", "must be >= 5");
  check(c.feat_dim >= 1, "feat_dim", "must be >= 1");
  check(c.listener_layers >= 1 && c.listener_width >= 1, "listener_layers", "listener shape must be positive");
  check(c.speller_layers >= 1 && c.speller_width >= 1, "speller_layers", "speller shape must be positive");
  check(c.embed_dim >= 0 && c.attention_dim >= 0, "embed_dim", "must be >= 0 (0 means speller_width)");
  check(c.attention_filters >= 1 && c.attention_kernel >= 1, "attention_filters", "must be >= 1");
  check(c.attention_mode == "accumulated" || c.attention_mode == "previous", "attention_mode",
        "must be 'accumulated' or 'previous'");
  check(c.epochs >= 1 && c.batch_size >= 1, "epochs", "must be >= 1");
  check(c.lr_start > 0 && c.lr_end > 0, "lr_start", "learning rates must be positive");
  check(c.warmup_steps >= 0, "warmup_steps", "must be >= 0");
  check(c.newbob_decay > 0 && c.newbob_decay <= 1, "newbob_decay", "must be in (0, 1]");
  check(c.newbob_threshold >= 0, "newbob_threshold", "must be >= 0");
  check(c.label_smoothing >= 0 && c.label_smoothing < 1, "label_smoothing", "must be in [0, 1)");
  check(c.sampling_strategy == "plateau-step" || c.sampling_strategy == "linear-ramp" ||
            c.sampling_strategy == "constant",
        "sampling_strategy", "must be plateau-step, linear-ramp or constant");
  for (double p : {c.sampling_base, c.sampling_boosted, c.sampling_fixed, c.sampling_start, c.sampling_end}) {
    check(p >= 0 && p <= 1, "sampling_base", "sampling probabilities must be in [0, 1]");
  }
  check(c.sampling_ramp_steps >= 1, "sampling_ramp_steps", "must be >= 1");
  check(c.grad_ema_decay > 0 && c.grad_ema_decay < 1, "grad_ema_decay", "must be in (0, 1)");
  check(c.grad_std_factor >= 0, "grad_std_factor", "must be >= 0");
  check(c.grad_static_cap > 0, "grad_static_cap", "must be positive");
  check(c.mwer_n >= 1, "mwer_n", "must be >= 1");
  check(c.mwer_gamma > 0 && c.mwer_gamma <= 1, "mwer_gamma", "must be in (0, 1]");
  check(c.mwer_lambda >= 0, "mwer_lambda", "must be >= 0");
  check(c.mwer_epochs >= 1 && c.mwer_lr > 0, "mwer_epochs", "must be positive");
  check(c.mwer_beam >= c.mwer_n, "mwer_beam", "must be >= mwer_n");
  check(c.beam >= c.nbest && c.nbest >= 1, "beam", "need beam >= nbest >= 1");
  check(c.lm_weight >= 0, "lm_weight", "must be >= 0");
  check(c.length_alpha >= 0, "length_alpha", "must be >= 0");
  check(c.max_steps >= 0, "max_steps", "must be >= 0");
  check(c.unk_penalty <= 0, "unk_penalty", "must be <= 0 (log10)");
  check(c.ngram_order >= 1, "ngram_order", "must be >= 1");
  check(c.ngram_discount >= 0 && c.ngram_discount < 1, "ngram_discount", "must be in [0, 1)");
  check(c.nnlm_layers >= 1 && c.nnlm_width >= 1 && c.nnlm_embed >= 1, "nnlm_layers", "must be >= 1");
  check(c.nnlm_lr > 0 && c.nnlm_epochs >= 1 && c.nnlm_batch_size >= 1, "nnlm_lr", "must be positive");
}

ModelConfig Config::model_config() const {
  ModelConfig m;
  m.feat_dim = feat_dim;
  m.listener_layers = listener_layers;
  m.listener_width = listener_width;
  m.speller_layers = speller_layers;
  m.speller_width = speller_width;
  m.embed_dim = embed_dim;
  m.attention_dim = attention_dim;
  m.attention_filters = attention_filters;
  m.attention_kernel = attention_kernel;
  m.attention_mode = attention_mode == "previous" ? AttentionMode::previous : AttentionMode::accumulated;
  return m;
}

FrontendConfig Config::frontend_config() const {
  FrontendConfig f;
  f.window_ms = window_ms;
  f.hop_ms = hop_ms;
  f.preemphasis = preemphasis;
  f.mel_bins = static_cast<int>(mel_bins);
  f.mel_low_hz = mel_low_hz;
  f.cmvn = cmvn;
  return f;
}

TrainOptions Config::train_options() const {
  TrainOptions t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.warmup = {lr_start, lr_end, warmup_steps};
  t.newbob_decay = newbob_decay;
  t.newbob_threshold = newbob_threshold;
  t.label_smoothing = label_smoothing;
  if (sampling_strategy == "constant") {
    t.sampling.strategy = SamplingSchedule::Strategy::constant;
  } else if (sampling_strategy == "linear-ramp") {
    t.sampling.strategy = SamplingSchedule::Strategy::linear_ramp;
  } else {
    t.sampling.strategy = SamplingSchedule::Strategy::plateau_step;
  }
  t.sampling.fixed = sampling_fixed;
  t.sampling.ramp_start = sampling_start;
  t.sampling.ramp_end = sampling_end;
  t.sampling.ramp_steps = sampling_ramp_steps;
  t.sampling.base = sampling_base;
  t.sampling.boosted = sampling_boosted;
  t.grad_ema_decay = grad_ema_decay;
  t.grad_std_factor = grad_std_factor;
  t.grad_static_cap = grad_static_cap;
  return t;
}

MwerOptions Config::mwer_options() const {
  MwerOptions m;
  m.epochs = mwer_epochs;
  m.nbest = mwer_n;
  m.gamma = mwer_gamma;
  m.lambda = mwer_lambda;
  m.lr = mwer_lr;
  m.label_smoothing = label_smoothing;
  m.grad_static_cap = grad_static_cap;
  m.beam = mwer_beam;
  m.length_alpha = 0.0;
  return m;
}

BeamConfig Config::beam_config() const {
  BeamConfig b;
  b.beam = static_cast<int>(beam);
  b.nbest = static_cast<int>(nbest);
  b.lm_weight = lm_weight;
  b.length_alpha = length_alpha;
  b.max_steps = max_steps;
  return b;
}

NnLmConfig Config::nnlm_config(std::int64_t vocab_size) const {
  NnLmConfig n;
  n.vocab_size = vocab_size;
  n.embed_dim = nnlm_embed;
  n.layers = nnlm_layers;
  n.width = nnlm_width;
  return n;
}

}  // namespace las

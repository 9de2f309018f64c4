// Single entry point for the whole pipeline: feature extraction, speed
// perturbation, BPE, CE/MWER training, LM building, decoding, rescoring
// and WER scoring. Batch operation only; every subcommand is a pure
// function of (inputs, config, seed).

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "las/config.hpp"
#include "las/decoder.hpp"
#include "las/errors.hpp"
#include "las/frontend.hpp"
#include "las/lm.hpp"
#include "las/manifest.hpp"
#include "las/model.hpp"
#include "las/training.hpp"
#include "las/wordpiece.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  int jobs = 1;
  std::int64_t seed_flag = -1;  // -1: not set
};

las::Config load_effective_config(const CommonArgs& common) {
  las::Config cfg;
  if (!common.config_path.empty()) cfg = las::load_config(common.config_path);
  if (const char* env = std::getenv("LAS_SEED")) cfg.seed = std::strtoull(env, nullptr, 10);
  if (common.seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(common.seed_flag);
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw las::IoError("cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

las::FeatureSequence load_record_features(const las::ManifestRecord& r, const las::FrontendConfig& fcfg) {
  if (!r.feats.empty()) {
    las::FeatureSequence f = las::read_features(r.feats);
    f.utterance_id = r.id;
    return f;
  }
  las::FeatureSequence f = las::compute_fbank(las::read_wav(r.audio), fcfg);
  f.utterance_id = r.id;
  return f;
}

std::vector<las::Utterance> load_utterances(const std::vector<las::ManifestRecord>& records,
                                            const las::FrontendConfig& fcfg, const las::WordPieceVocab& vocab) {
  std::vector<las::Utterance> utts;
  utts.reserve(records.size());
  for (const auto& r : records) {
    las::Utterance u;
    u.id = r.id;
    u.feats = load_record_features(r, fcfg);
    u.tokens = vocab.encode(r.text);
    u.tokens.push_back(las::WordPieceVocab::kEos);
    utts.push_back(std::move(u));
  }
  return utts;
}

// feat_dim follows the data; everything else follows the config.
las::ModelConfig model_config_for(const las::Config& cfg, const std::vector<las::Utterance>& utts,
                                  std::int64_t vocab_size) {
  las::ModelConfig m = cfg.model_config();
  if (!utts.empty()) m.feat_dim = utts.front().feats.dim();
  m.vocab_size = vocab_size;
  return m;
}

void run_parallel(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n)); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

// ---- subcommands ------------------------------------------------------------

int cmd_features(const CommonArgs& common, const std::string& manifest_path, const std::string& outdir,
                 const std::string& out_manifest) {
  const las::Config cfg = load_effective_config(common);
  const las::FrontendConfig fcfg = cfg.frontend_config();
  const auto records = las::read_manifest(manifest_path);
  fs::create_directories(outdir);
  std::vector<las::ManifestRecord> out(records.size());
  std::vector<std::string> errors(records.size());
  run_parallel(records.size(), common.jobs, [&](std::size_t i) {
    const auto& r = records[i];
    las::ManifestRecord n = r;
    try {
      if (r.feats.empty()) {
        const las::FeatureSequence f = las::compute_fbank(las::read_wav(r.audio), fcfg);
        const fs::path p = fs::path(outdir) / (r.id + ".fbnk");
        las::write_features(p, f);
        n.feats = p.string();
        n.audio.clear();
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
    out[i] = std::move(n);
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw las::IoError("features: " + records[i].id + ": " + errors[i]);
  }
  las::write_manifest(out_manifest, out);
  std::printf("wrote %zu feature files to %s\n", records.size(), outdir.c_str());
  return 0;
}

int cmd_augment(double factor, const std::string& in_wav, const std::string& out_wav) {
  const las::Waveform w = las::read_wav(in_wav);
  las::write_wav(out_wav, las::speed_perturb(w, factor));
  std::printf("%s -> %s (factor %g)\n", in_wav.c_str(), out_wav.c_str(), factor);
  return 0;
}

int cmd_bpe_learn(const CommonArgs& common, const std::string& input, const std::string& out,
                  std::int64_t size_flag) {
  const las::Config cfg = load_effective_config(common);
  const std::int64_t target = size_flag > 0 ? size_flag : cfg.bpe_target_size;
  const auto vocab = las::WordPieceVocab::learn(read_lines(input), target);
  vocab.save(out);
  std::printf("learned %lld pieces (%zu merges) -> %s\n", static_cast<long long>(vocab.size()),
              vocab.merges().size(), out.c_str());
  return 0;
}

int cmd_bpe_apply(const std::string& vocab_path, const std::string& input, const std::string& output,
                  bool decode_mode, bool ids_mode) {
  const auto vocab = las::WordPieceVocab::load(vocab_path);
  const auto lines = read_lines(input);
  std::ofstream os(output, std::ios::binary);
  if (!os) throw las::IoError("cannot open for writing: " + output);
  for (const std::string& line : lines) {
    if (decode_mode) {
      std::vector<std::int32_t> ids;
      std::istringstream ss(line);
      std::int64_t id;
      while (ss >> id) ids.push_back(static_cast<std::int32_t>(id));
      os << vocab.decode(ids) << "\n";
      continue;
    }
    const auto ids = vocab.encode(line);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) os << ' ';
      if (ids_mode) {
        os << ids[i];
      } else {
        os << vocab.piece(ids[i]);
      }
    }
    os << "\n";
  }
  return 0;
}

int cmd_train(const CommonArgs& common, const std::string& train_path, const std::string& val_path,
              const std::string& vocab_path, const std::string& out_dir) {
  const las::Config cfg = load_effective_config(common);
  const auto vocab = las::WordPieceVocab::load(vocab_path);
  const las::FrontendConfig fcfg = cfg.frontend_config();
  const auto train_utts = load_utterances(las::read_manifest(train_path), fcfg, vocab);
  const auto val_utts =
      val_path.empty() ? std::vector<las::Utterance>{} : load_utterances(las::read_manifest(val_path), fcfg, vocab);
  const las::ModelConfig mcfg = model_config_for(cfg, train_utts, vocab.size());

  las::Prng prng(cfg.seed);
  las::ParameterStore params = las::init_las_params(mcfg, prng);
  const las::FitResult r = las::fit(params, mcfg, train_utts, val_utts, cfg.train_options(), out_dir, prng);
  std::printf("trained %lld epochs, train_loss %.6f, val_loss %.6f\n", static_cast<long long>(r.epochs_run),
              r.train_loss, r.val_loss);
  std::printf("checkpoint: %s\n", r.final_checkpoint.c_str());
  return 0;
}

int cmd_mwer_train(const CommonArgs& common, const std::string& train_path, const std::string& vocab_path,
                   const std::string& init_ckpt, const std::string& out_dir) {
  const las::Config cfg = load_effective_config(common);
  const auto vocab = las::WordPieceVocab::load(vocab_path);
  const auto train_utts = load_utterances(las::read_manifest(train_path), cfg.frontend_config(), vocab);
  const las::ModelConfig mcfg = model_config_for(cfg, train_utts, vocab.size());
  las::ParameterStore params = las::load_checkpoint(init_ckpt);
  las::validate_las_params(params, mcfg);
  const las::MwerResult r = las::mwer_fit(params, mcfg, train_utts, vocab, cfg.mwer_options(), out_dir);
  std::printf("mwer: expected error %.6f -> %.6f over %lld epochs\n", r.initial_expected_error,
              r.final_expected_error, static_cast<long long>(r.epochs_run));
  std::printf("checkpoint: %s\n", r.final_checkpoint.c_str());
  return 0;
}

int cmd_ngram_build(const CommonArgs& common, const std::string& input, const std::string& out, int order_flag,
                    double discount_flag) {
  const las::Config cfg = load_effective_config(common);
  const int order = order_flag > 0 ? order_flag : static_cast<int>(cfg.ngram_order);
  const double discount = discount_flag >= 0 ? discount_flag : cfg.ngram_discount;
  const auto lines = read_lines(input);
  const las::NGramLm lm = las::train_ngram(lines, order, discount);
  lm.write_arpa(out);
  std::printf("trained %d-gram (discount %g), ppl %.3f -> %s\n", order, discount, las::perplexity(lm, lines),
              out.c_str());
  return 0;
}

int cmd_nnlm_train(const CommonArgs& common, const std::string& input, const std::string& vocab_path,
                   const std::string& level, const std::string& out) {
  const las::Config cfg = load_effective_config(common);
  const auto lines = read_lines(input);
  std::vector<std::vector<std::int32_t>> sequences;
  std::int64_t vocab_size = 0;
  if (level == "word") {
    const las::WordVocab wv = las::WordVocab::build(lines);
    wv.save(out + ".vocab");
    for (const auto& line : lines) {
      sequences.push_back(wv.encode_words(las::WordPieceVocab::split_words(las::WordPieceVocab::normalize(line))));
    }
    vocab_size = wv.size();
  } else {
    if (vocab_path.empty()) throw las::IoError("nnlm-train: --vocab required at wordpiece level");
    const auto vocab = las::WordPieceVocab::load(vocab_path);
    for (const auto& line : lines) sequences.push_back(vocab.encode(line));
    vocab_size = vocab.size();
  }
  las::Prng prng(cfg.seed);
  las::NeuralLm lm(cfg.nnlm_config(vocab_size), prng);
  las::NnLmTrainOptions opt;
  opt.epochs = cfg.nnlm_epochs;
  opt.batch_size = cfg.nnlm_batch_size;
  opt.lr = cfg.nnlm_lr;
  opt.seed = cfg.seed + 1;
  const double loss = lm.train(sequences, opt);
  las::save_checkpoint(out, lm.params());
  std::printf("nnlm (%s level, vocab %lld): final loss %.6f, ppl %.3f -> %s\n", level.c_str(),
              static_cast<long long>(vocab_size), loss, las::perplexity(lm, sequences), out.c_str());
  return 0;
}

int cmd_decode(const CommonArgs& common, const std::string& manifest_path, const std::string& vocab_path,
               const std::string& ckpt, const std::string& fusion_ckpt, const std::string& out_nbest,
               const std::string& out_report) {
  const las::Config cfg = load_effective_config(common);
  const auto vocab = las::WordPieceVocab::load(vocab_path);
  const auto records = las::read_manifest(manifest_path);
  const las::FrontendConfig fcfg = cfg.frontend_config();
  std::vector<las::DecodeInput> inputs;
  inputs.reserve(records.size());
  for (const auto& r : records) {
    las::DecodeInput in;
    in.id = r.id;
    in.feats = load_record_features(r, fcfg);
    in.ref_text = r.text;
    inputs.push_back(std::move(in));
  }
  las::ModelConfig mcfg = cfg.model_config();
  if (!inputs.empty()) mcfg.feat_dim = inputs.front().feats.dim();
  mcfg.vocab_size = vocab.size();
  const las::ParameterStore params = las::load_checkpoint(ckpt);
  las::validate_las_params(params, mcfg);

  std::unique_ptr<las::NeuralLm> fusion;
  if (!fusion_ckpt.empty()) {
    fusion = std::make_unique<las::NeuralLm>(cfg.nnlm_config(vocab.size()), las::load_checkpoint(fusion_ckpt));
  }
  const las::DecodeReport report = las::decode_corpus(params, mcfg, inputs, vocab, cfg.beam_config(), fusion.get(),
                                                      common.jobs, out_nbest, out_report);
  if (report.has_refs) std::printf("WER %.2f%%\n", report.wer_percent);
  std::printf("n-best: %s\n", out_nbest.c_str());
  if (report.errors > 0) {
    std::fprintf(stderr, "decode: %lld utterances failed\n", static_cast<long long>(report.errors));
  }
  return 0;
}

int cmd_rescore(const CommonArgs& common, const std::string& nbest_path, const std::string& out_path,
                const std::string& vocab_path, const std::string& arpa_path, const std::string& nnlm_ckpt,
                const std::string& word_vocab_path, const std::string& level, double lambda_flag) {
  const las::Config cfg = load_effective_config(common);
  const double lambda = lambda_flag >= 0 ? lambda_flag : cfg.lm_weight;
  const auto vocab = las::WordPieceVocab::load(vocab_path);
  auto results = las::read_nbest_jsonl(nbest_path);

  if (arpa_path.empty() == nnlm_ckpt.empty()) {
    throw las::IoError("rescore: exactly one of --lm (ARPA) or --nnlm (checkpoint) is required");
  }
  if (!arpa_path.empty()) {
    const las::NGramLm lm = las::NGramLm::load_arpa(arpa_path, cfg.unk_penalty);
    for (auto& r : results) {
      if (r.error.empty() && !r.nbest.empty()) las::rescore_nbest(r.nbest, lm, lambda, vocab);
    }
  } else {
    const las::LmLevel lvl = level == "word" ? las::LmLevel::word : las::LmLevel::wordpiece;
    std::unique_ptr<las::WordVocab> wv;
    std::int64_t vocab_size = vocab.size();
    if (lvl == las::LmLevel::word) {
      if (word_vocab_path.empty()) throw las::IoError("rescore: --word-vocab required at word level");
      wv = std::make_unique<las::WordVocab>(las::WordVocab::load(word_vocab_path));
      vocab_size = wv->size();
    }
    const las::NeuralLm lm(cfg.nnlm_config(vocab_size), las::load_checkpoint(nnlm_ckpt));
    for (auto& r : results) {
      if (r.error.empty() && !r.nbest.empty()) las::rescore_nbest(r.nbest, lm, lambda, lvl, vocab, wv.get());
    }
  }
  las::write_nbest_jsonl(out_path, results, &vocab);
  std::printf("rescored %zu utterances (lambda %g) -> %s\n", results.size(), lambda, out_path.c_str());
  return 0;
}

int cmd_wer(const std::string& ref_path, const std::string& hyp_path) {
  const auto ref_lines = read_lines(ref_path);
  const auto hyp_lines = read_lines(hyp_path);
  if (ref_lines.size() != hyp_lines.size()) {
    throw std::invalid_argument("wer: ref has " + std::to_string(ref_lines.size()) + " lines, hyp has " +
                                std::to_string(hyp_lines.size()));
  }
  std::vector<std::vector<std::string>> refs, hyps;
  for (std::size_t i = 0; i < ref_lines.size(); ++i) {
    refs.push_back(las::WordPieceVocab::split_words(las::WordPieceVocab::normalize(ref_lines[i])));
    hyps.push_back(las::WordPieceVocab::split_words(las::WordPieceVocab::normalize(hyp_lines[i])));
  }
  std::printf("WER %.2f%%\n", las::wer(refs, hyps));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based sequence-to-sequence speech recognizer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for all subcommands");

  CommonArgs common;
  app.add_option("--config", common.config_path, "key = value configuration file");
  app.add_option("--jobs", common.jobs, "Parallel workers for per-utterance work")->capture_default_str();
  app.add_option("--seed", common.seed_flag, "Override the RNG seed (also LAS_SEED env)");

  auto* features = app.add_subcommand("features", "Extract log-mel filter-bank features for a manifest");
  std::string f_manifest, f_outdir, f_outmanifest;
  features->add_option("--manifest", f_manifest, "Input manifest (JSONL)")->required();
  features->add_option("--outdir", f_outdir, "Directory for .fbnk files")->required();
  features->add_option("--out-manifest", f_outmanifest, "Manifest rewritten with feats paths")->required();

  auto* augment = app.add_subcommand("augment", "Speed-perturb a WAV file by resampling");
  double a_factor = 1.0;
  std::string a_in, a_out;
  augment->add_option("--factor", a_factor, "Speed factor (0.9 / 1.1 are the usual choices)")->required();
  augment->add_option("input", a_in, "Input WAV")->required();
  augment->add_option("output", a_out, "Output WAV")->required();

  auto* bpe_learn = app.add_subcommand("bpe-learn", "Learn a BPE word-piece vocabulary from text");
  std::string bl_input, bl_out;
  std::int64_t bl_size = 0;
  bpe_learn->add_option("--input", bl_input, "Training text, one sentence per line")->required();
  bpe_learn->add_option("--out", bl_out, "Output vocabulary file")->required();
  bpe_learn->add_option("--size", bl_size, "Target vocabulary size (default from config)");

  auto* bpe_apply = app.add_subcommand("bpe-apply", "Encode text to word pieces (or decode back)");
  std::string ba_vocab, ba_input, ba_output;
  bool ba_decode = false, ba_ids = false;
  bpe_apply->add_option("--vocab", ba_vocab, "Vocabulary file")->required();
  bpe_apply->add_option("--input", ba_input, "Input text file")->required();
  bpe_apply->add_option("--output", ba_output, "Output file")->required();
  bpe_apply->add_flag("--decode", ba_decode, "Decode id sequences back to text");
  bpe_apply->add_flag("--ids", ba_ids, "Emit numeric ids instead of piece strings");

  auto* train = app.add_subcommand("train", "Cross-entropy training with warmup/new-bob/scheduled sampling");
  std::string t_train, t_val, t_vocab, t_out;
  train->add_option("--train", t_train, "Training manifest")->required();
  train->add_option("--val", t_val, "Validation manifest (defaults to the training set)");
  train->add_option("--vocab", t_vocab, "Word-piece vocabulary")->required();
  train->add_option("--out", t_out, "Output directory for checkpoints and the log")->required();

  auto* mwer = app.add_subcommand("mwer-train", "MWER n-best fine-tuning from a CE checkpoint");
  std::string m_train, m_vocab, m_init, m_out;
  mwer->add_option("--train", m_train, "Training manifest")->required();
  mwer->add_option("--vocab", m_vocab, "Word-piece vocabulary")->required();
  mwer->add_option("--init", m_init, "Converged CE checkpoint to start from")->required();
  mwer->add_option("--out", m_out, "Output directory")->required();

  auto* ngram = app.add_subcommand("ngram-build", "Train a small backoff n-gram and write ARPA");
  std::string g_input, g_out;
  int g_order = 0;
  double g_discount = -1.0;
  ngram->add_option("--input", g_input, "Training text")->required();
  ngram->add_option("--out", g_out, "Output ARPA file")->required();
  ngram->add_option("--order", g_order, "N-gram order (default from config)");
  ngram->add_option("--discount", g_discount, "Absolute discount in [0,1) (default from config)");

  auto* nnlm = app.add_subcommand("nnlm-train", "Train the LSTM language model (Adam, fixed rate)");
  std::string n_input, n_vocab, n_level = "wordpiece", n_out;
  nnlm->add_option("--input", n_input, "Training text")->required();
  nnlm->add_option("--vocab", n_vocab, "Word-piece vocabulary (wordpiece level)");
  nnlm->add_option("--level", n_level, "wordpiece | word")->check(CLI::IsMember({"wordpiece", "word"}));
  nnlm->add_option("--out", n_out, "Output checkpoint (word level also writes .vocab)")->required();

  auto* decode = app.add_subcommand("decode", "Beam-search decode a manifest (optional shallow fusion)");
  std::string d_manifest, d_vocab, d_ckpt, d_fusion, d_nbest, d_report;
  decode->add_option("--manifest", d_manifest, "Manifest to decode")->required();
  decode->add_option("--vocab", d_vocab, "Word-piece vocabulary")->required();
  decode->add_option("--ckpt", d_ckpt, "Model checkpoint")->required();
  decode->add_option("--fusion-lm", d_fusion, "Word-piece LSTM LM checkpoint for shallow fusion");
  decode->add_option("--out", d_nbest, "Output n-best JSONL")->required();
  decode->add_option("--report", d_report, "WER summary JSON");

  auto* rescore = app.add_subcommand("rescore", "Second-pass rescoring of an n-best file");
  std::string r_nbest, r_out, r_vocab, r_arpa, r_nnlm, r_wordvocab, r_level = "wordpiece";
  double r_lambda = -1.0;
  rescore->add_option("--nbest", r_nbest, "Input n-best JSONL")->required();
  rescore->add_option("--out", r_out, "Output n-best JSONL")->required();
  rescore->add_option("--vocab", r_vocab, "Word-piece vocabulary")->required();
  rescore->add_option("--lm", r_arpa, "ARPA n-gram (word level)");
  rescore->add_option("--nnlm", r_nnlm, "Neural LM checkpoint");
  rescore->add_option("--word-vocab", r_wordvocab, "Word vocabulary sidecar for word-level neural LMs");
  rescore->add_option("--level", r_level, "wordpiece | word")->check(CLI::IsMember({"wordpiece", "word"}));
  rescore->add_option("--lambda", r_lambda, "LM interpolation weight (default lm_weight from config)");

  auto* werc = app.add_subcommand("wer", "Word error rate between line-aligned text files");
  std::string w_ref, w_hyp;
  werc->add_option("--ref", w_ref, "Reference text, one utterance per line")->required();
  werc->add_option("--hyp", w_hyp, "Hypothesis text, one utterance per line")->required();

  // --config/--jobs/--seed may appear before or after the subcommand name.
  for (CLI::App* sc : app.get_subcommands(nullptr)) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (features->parsed()) return cmd_features(common, f_manifest, f_outdir, f_outmanifest);
    if (augment->parsed()) return cmd_augment(a_factor, a_in, a_out);
    if (bpe_learn->parsed()) return cmd_bpe_learn(common, bl_input, bl_out, bl_size);
    if (bpe_apply->parsed()) return cmd_bpe_apply(ba_vocab, ba_input, ba_output, ba_decode, ba_ids);
    if (train->parsed()) return cmd_train(common, t_train, t_val, t_vocab, t_out);
    if (mwer->parsed()) return cmd_mwer_train(common, m_train, m_vocab, m_init, m_out);
    if (ngram->parsed()) return cmd_ngram_build(common, g_input, g_out, g_order, g_discount);
    if (nnlm->parsed()) return cmd_nnlm_train(common, n_input, n_vocab, n_level, n_out);
    if (decode->parsed()) return cmd_decode(common, d_manifest, d_vocab, d_ckpt, d_fusion, d_nbest, d_report);
    if (rescore->parsed())
      return cmd_rescore(common, r_nbest, r_out, r_vocab, r_arpa, r_nnlm, r_wordvocab, r_level, r_lambda);
    if (werc->parsed()) return cmd_wer(w_ref, w_hyp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

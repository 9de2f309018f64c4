#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "las/net.hpp"
#include "las/prng.hpp"

namespace las {

constexpr double kLog10Zero = -99.0;  // ARPA stand-in for log10(0)
constexpr double kLn10 = 2.302585092994045684;

// Backoff n-gram over words, log10 throughout (the ARPA convention).
// Immutable after load/training; queries are safe in parallel.
class NGramLm {
 public:
  struct Entry {
    double logp = 0.0;
    double bow = 0.0;
    bool has_bow = false;
  };

  int order() const { return order_; }
  std::int64_t vocab_size() const { return static_cast<std::int64_t>(vocab_.size()); }
  const std::string& word(std::int32_t id) const { return vocab_[static_cast<std::size_t>(id)]; }
  std::int32_t word_id(std::string_view w) const;        // -1 when absent
  std::int32_t word_or_unk(std::string_view w) const;

  // Longest-match backoff query; log10. History longer than order-1 is
  // truncated on the left. Worst case falls through to the <unk> unigram.
  double logprob_ids(const std::vector<std::int32_t>& history, std::int32_t word) const;
  double logprob(const std::vector<std::string>& history, std::string_view word) const;
  // log10 of p(w1..wn </s> | <s>).
  double sentence_logprob(const std::vector<std::string>& words) const;
  double sentence_logprob_ln(const std::vector<std::string>& words) const {
    return sentence_logprob(words) * kLn10;
  }

  // Entries of order > 1 containing <unk> are dropped at load; the <unk>
  // unigram gets unk_penalty (log10, <= 0) added.
  static NGramLm load_arpa(const std::filesystem::path& path, double unk_penalty = 0.0);
  void write_arpa(const std::filesystem::path& path) const;

  // Direct table access (tests, trainer).
  const std::map<std::vector<std::int32_t>, Entry>& grams(int n) const {
    return grams_[static_cast<std::size_t>(n - 1)];
  }
  std::int32_t add_word(const std::string& w);
  void set_order(int order);
  void put_entry(const std::vector<std::int32_t>& key, Entry e);

 private:
  int order_ = 0;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::map<std::vector<std::int32_t>, Entry>> grams_;  // [n-1] -> table
};

// Interpolated absolute discounting; backoff weights normalize every
// context exactly. discount in [0, 1).
NGramLm train_ngram(const std::vector<std::string>& corpus_lines, int order, double discount);

// exp(-mean ln p), </s> included after every line. Reports +inf when any
// scored token sits at the pseudo-zero floor.
double perplexity(const NGramLm& lm, const std::vector<std::string>& lines);

// ---- neural LM -------------------------------------------------------------

// Word-level vocabulary for word LSTM LMs (ids 0..3 reserved as in the
// word-piece vocab). Plain-text sidecar format "WLV1" + one token per line.
class WordVocab {
 public:
  static constexpr std::int32_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  static WordVocab build(const std::vector<std::string>& corpus_lines);
  std::int32_t id_or_unk(std::string_view w) const;
  const std::string& word(std::int32_t id) const { return words_[static_cast<std::size_t>(id)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(words_.size()); }
  std::vector<std::int32_t> encode_words(const std::vector<std::string>& words) const;
  void save(const std::filesystem::path& path) const;
  static WordVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> ids_;
  void add(const std::string& w);
};

struct NnLmConfig {
  std::int64_t vocab_size = 0;
  std::int64_t embed_dim = 256;
  std::int64_t layers = 2;
  std::int64_t width = 1024;
};

struct NnLmTrainOptions {
  std::int64_t epochs = 20;
  std::int64_t batch_size = 8;
  double lr = 0.001;  // Adam, fixed rate
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
};

// LSTM LM over word pieces (fusion/rescoring) or words (rescoring).
// Utterance protocol: start from the zero state and feed </s>; the
// resulting distribution scores the first token.
class NeuralLm {
 public:
  struct State {
    std::vector<std::pair<Tensor, Tensor>> lstm;  // (h, c) per layer
  };

  NeuralLm(NnLmConfig cfg, Prng& prng);                 // fresh init
  NeuralLm(NnLmConfig cfg, ParameterStore params);      // from checkpoint

  State zero_state() const;
  // (log-prob vector over the vocab for the NEXT token, next state).
  std::pair<Tensor, State> step(const State& state, std::int32_t token) const;
  // ln p(tokens </s>) under the start protocol; `tokens` excludes </s>.
  double sentence_logprob_ln(const std::vector<std::int32_t>& tokens) const;

  const NnLmConfig& config() const { return cfg_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params_mut() { return params_; }

  // Next-token cross-entropy with Adam at a fixed learning rate.
  // Returns final training loss (mean ln, per token).
  double train(const std::vector<std::vector<std::int32_t>>& sequences, const NnLmTrainOptions& opt);

 private:
  NnLmConfig cfg_;
  ParameterStore params_;
};

double perplexity(const NeuralLm& lm, const std::vector<std::vector<std::int32_t>>& token_lines);

}  // namespace las

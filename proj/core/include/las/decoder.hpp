#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "las/lm.hpp"
#include "las/model.hpp"
#include "las/wordpiece.hpp"

namespace las {

// Fusion-LM bookkeeping per hypothesis: the recurrent state after
// consuming the hypothesis so far plus the next-token distribution it
// implies. Shared between children of the same parent (pure values).
struct FusionState {
  NeuralLm::State rnn;
  Tensor next_logp;
};

struct Hypothesis {
  std::vector<std::int32_t> tokens;  // emitted word pieces, </s> last when finished
  double las_logp = 0.0;             // natural log, model score
  double lm_logp = 0.0;              // natural log, fusion LM score
  bool finished = false;
  double score = 0.0;  // (las_logp + lm_weight*lm_logp) / lp(|tokens|)
  std::shared_ptr<const FusionState> lm_state;
};

struct BeamConfig {
  int beam = 16;
  int nbest = 16;
  double lm_weight = 0.3;     // shallow-fusion weight; 0 skips the LM entirely
  double length_alpha = 0.6;  // lp(|y|) = ((5+|y|)/6)^alpha
  std::int64_t max_steps = 0; // 0 -> 2*U + 10
};

double length_penalty(std::int64_t length, double alpha);

// Beam search over word pieces with shallow fusion and length penalty.
// Candidates are ranked by penalized score at every step; finished
// hypotheses (emitted </s>) leave the beam. Ties break on token-sequence
// order so results are deterministic. Returns the top nbest finished
// hypotheses, falling back to unfinished ones (flagged) if none finished.
std::vector<Hypothesis> beam_search(const ParameterStore& params, const ModelConfig& cfg,
                                    const FeatureSequence& feats, const BeamConfig& bcfg,
                                    const NeuralLm* fusion_lm = nullptr);

std::vector<std::string> merge_wordpieces(const std::vector<std::int32_t>& tokens, const WordPieceVocab& vocab);

// Second-pass rescoring: score = las_logp + lambda * lm_logp(hyp), stable
// descending re-sort (ties keep their order). lm_logprob_ln returns the
// natural-log LM score of a hypothesis.
void rescore_nbest(std::vector<Hypothesis>& nbest, const std::function<double(const Hypothesis&)>& lm_logprob_ln,
                   double lambda);
// Word-level n-gram rescoring (pieces merged into words first).
void rescore_nbest(std::vector<Hypothesis>& nbest, const NGramLm& lm, double lambda, const WordPieceVocab& vocab);

enum class LmLevel { word, wordpiece };
// Neural-LM rescoring at word or word-piece level; word level needs the
// word vocabulary the LM was trained with.
void rescore_nbest(std::vector<Hypothesis>& nbest, const NeuralLm& lm, double lambda, LmLevel level,
                   const WordPieceVocab& vocab, const WordVocab* word_vocab = nullptr);

// ---- corpus decoding ---------------------------------------------------------

struct DecodeInput {
  std::string id;
  FeatureSequence feats;
  std::string ref_text;  // optional, empty when unlabelled
};

struct DecodeResult {
  std::string id;
  std::vector<Hypothesis> nbest;
  std::string error;  // per-utterance failure, run continues
};

struct DecodeReport {
  std::vector<DecodeResult> results;
  std::int64_t errors = 0;
  std::int64_t ref_words = 0;
  double wer_percent = 0.0;
  bool has_refs = false;
};

// Decodes every utterance (optionally in parallel), writes an n-best JSON
// Lines file {id, rank, text, tokens, las_logp, lm_logp, score} in
// manifest order, and a WER summary when references are present.
DecodeReport decode_corpus(const ParameterStore& params, const ModelConfig& cfg,
                           const std::vector<DecodeInput>& inputs, const WordPieceVocab& vocab,
                           const BeamConfig& bcfg, const NeuralLm* fusion_lm, int jobs,
                           const std::filesystem::path& nbest_path,
                           const std::filesystem::path& report_path);

// N-best JSONL I/O (rescoring consumes and rewrites the same format).
void write_nbest_jsonl(const std::filesystem::path& path, const std::vector<DecodeResult>& results,
                       const WordPieceVocab* vocab = nullptr);
std::vector<DecodeResult> read_nbest_jsonl(const std::filesystem::path& path);

}  // namespace las

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "las/checkpoint.hpp"
#include "las/decoder.hpp"
#include "las/graph.hpp"
#include "las/model.hpp"
#include "las/prng.hpp"
#include "las/wordpiece.hpp"

namespace las {

// ---- metrics ---------------------------------------------------------------

struct EditCounts {
  std::int64_t sub = 0;
  std::int64_t del = 0;
  std::int64_t ins = 0;
  std::int64_t total() const { return sub + del + ins; }
};

// Levenshtein with unit costs. Among minimum-cost alignments the one with
// the fewest substitutions is selected, which makes the (S, D, I) split
// unique and symmetric under swapping ref and hyp (D and I trade places).
EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// 100 * total errors / total reference words.
double wer(const std::vector<std::vector<std::string>>& refs, const std::vector<std::vector<std::string>>& hyps);

// ---- schedules ---------------------------------------------------------------

struct WarmupConfig {
  double lr_start = 0.0002;
  double lr_end = 0.002;
  std::int64_t warmup_steps = 2000;
};

double warmup_lr(std::int64_t step, const WarmupConfig& cfg);

struct NewBobState {
  double lr = 0.002;
  double best = 0.0;
  bool has_best = false;
  double decay = 0.9;
  double threshold = 1e-3;  // minimum relative improvement
  bool decayed_once = false;
};

// Decays lr when relative improvement over the best validation loss falls
// below the threshold; best tracks the minimum seen.
void newbob_update(NewBobState& state, double val_loss);

struct SamplingSchedule {
  enum class Strategy { constant, linear_ramp, plateau_step };
  Strategy strategy = Strategy::plateau_step;
  double fixed = 0.1;                                        // constant
  double ramp_start = 0.0, ramp_end = 0.2;                   // linear_ramp
  std::int64_t ramp_steps = 10000;
  double base = 0.1, boosted = 0.2;                          // plateau_step
};

double sampling_prob(const SamplingSchedule& schedule, std::int64_t step, bool plateau_signal);

// ---- gradient norm tracker ---------------------------------------------------

struct GradNormTracker {
  double m = 0.0;  // EMA of the gradient norm
  double s = 0.0;  // EMA of the squared norm
  double decay = 0.95;
  double std_factor = 2.0;
  double static_cap = 5.0;
  bool initialized = false;
};

struct ClipResult {
  double pre_norm = 0.0;
  double post_norm = 0.0;
  bool tracker_clipped = false;
  bool static_clipped = false;
};

// Tracker clip to the mean when the norm leaves the m + std_factor*sigma
// band, then the static cap; EMAs update with the post-clip norm. The
// first call only initializes (static cap still applies).
ClipResult track_and_clip(std::map<std::string, Tensor>& grads, GradNormTracker& tracker);

double global_norm(const std::map<std::string, Tensor>& grads);
void clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

// ---- optimizers ----------------------------------------------------------------

void sgd_step(ParameterStore& params, const std::map<std::string, Tensor>& grads, double lr);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  ParameterStore m, v;
};

void adam_step(ParameterStore& params, const std::map<std::string, Tensor>& grads, AdamState& state);

// ---- MWER ---------------------------------------------------------------------

// P*_i = exp(gamma * logp_i) / sum_j exp(gamma * logp_j).
std::vector<double> mwer_pstar(const std::vector<double>& logps, double gamma);
// (1/L) sum_i P*_i W_i
double mwer_expected_error(const std::vector<double>& logps, const std::vector<double>& errors, std::int64_t ref_words,
                           double gamma);
double mwer_loss_value(const std::vector<double>& logps, const std::vector<double>& errors, std::int64_t ref_words,
                       double gamma, double lambda, double ce_loss);
// Analytic d(loss)/d(gamma) at fixed logps/errors (lambda term is constant in gamma).
double mwer_dloss_dgamma(const std::vector<double>& logps, const std::vector<double>& errors, std::int64_t ref_words,
                         double gamma);

// Tape-level loss: differentiable through the renormalized scores (the
// word-error weights are constants).
Graph::NodeId mwer_loss_node(Graph& g, const std::vector<Graph::NodeId>& hyp_logps,
                             const std::vector<double>& errors, std::int64_t ref_words, double gamma, double lambda,
                             Graph::NodeId ce_loss);

// Word errors W(y_i, y*) and the reference length L for an n-best list,
// both at the word level (pieces merged first).
struct MwerTerms {
  std::vector<double> errors;
  std::int64_t ref_words = 0;
};
MwerTerms mwer_terms(const std::vector<std::vector<std::int32_t>>& nbest_tokens,
                     const std::vector<std::int32_t>& ref_tokens, const WordPieceVocab& vocab);

// ---- training loops --------------------------------------------------------------

struct TrainOptions {
  std::int64_t epochs = 20;
  std::int64_t batch_size = 4;
  WarmupConfig warmup;
  double newbob_decay = 0.9;
  double newbob_threshold = 1e-3;
  double label_smoothing = 0.01;
  SamplingSchedule sampling;
  double grad_ema_decay = 0.95;
  double grad_std_factor = 2.0;
  double grad_static_cap = 5.0;
  bool checkpoint_every_epoch = true;
};

struct FitResult {
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::int64_t epochs_run = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
};

// CE training: warmup then new-bob, gradient tracking/clipping, scheduled
// sampling per the schedule (plateau signal = first new-bob decay).
// Writes per-epoch checkpoints and a JSONL log {epoch, lr, train_loss,
// val_loss, sampling_prob, grad_clip_events} under out_dir. Deterministic
// given (params, data, options, prng state).
FitResult fit(ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& train,
              const std::vector<Utterance>& val, const TrainOptions& opt, const std::filesystem::path& out_dir,
              Prng& prng);

struct MwerOptions {
  std::int64_t epochs = 2;
  std::int64_t nbest = 4;
  double gamma = 0.5;
  double lambda = 0.01;
  double lr = 0.001;
  double label_smoothing = 0.01;  // for the interpolated CE term
  double grad_static_cap = 5.0;
  std::int64_t beam = 8;
  double length_alpha = 0.0;
};

struct MwerResult {
  double initial_expected_error = 0.0;  // mean over utterances, before any update
  double final_expected_error = 0.0;    // recomputed after the last epoch
  std::int64_t epochs_run = 0;
  std::filesystem::path final_checkpoint;
};

// N-best discriminative fine-tuning seeded from a converged CE model.
MwerResult mwer_fit(ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& train,
                    const WordPieceVocab& vocab, const MwerOptions& opt, const std::filesystem::path& out_dir);

// Greedy-decode WER of the model on a labelled set.
double corpus_greedy_wer(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& utts,
                         const WordPieceVocab& vocab, const std::vector<std::string>& ref_texts);

}  // namespace las

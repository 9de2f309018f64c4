#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "las/frontend.hpp"
#include "las/net.hpp"
#include "las/wordpiece.hpp"

namespace las {

enum class AttentionMode { previous, accumulated };

struct ModelConfig {
  std::int64_t feat_dim = 40;
  std::int64_t listener_layers = 3;   // every layer halves time resolution
  std::int64_t listener_width = 1024; // per direction
  std::int64_t speller_layers = 2;
  std::int64_t speller_width = 512;
  std::int64_t embed_dim = 0;      // 0 -> speller_width
  std::int64_t attention_dim = 0;  // 0 -> speller_width
  std::int64_t attention_filters = 20;
  std::int64_t attention_kernel = 100;
  AttentionMode attention_mode = AttentionMode::accumulated;
  std::int64_t vocab_size = 0;

  std::int64_t embed() const { return embed_dim > 0 ? embed_dim : speller_width; }
  std::int64_t attn() const { return attention_dim > 0 ? attention_dim : speller_width; }
  std::int64_t encoder_dim() const { return 2 * listener_width; }
};

// Canonical tensor names: listener.layer{i}.{fwd,bwd}.{Wx,Wh,b},
// attention.{w,W,V,U,b,F}, speller.embed, speller.layer{i}.{Wx,Wh,b},
// speller.proj.{W,b}.
ParameterStore init_las_params(const ModelConfig& cfg, Prng& prng);
void validate_las_params(const ParameterStore& store, const ModelConfig& cfg);

// ceil(T/2) applied once per listener layer.
std::int64_t listener_output_length(std::int64_t t, std::int64_t layers);

struct Utterance {
  std::string id;
  FeatureSequence feats;
  std::vector<std::int32_t> tokens;  // word-piece ids ending with </s>
};

Tensor smooth_labels(std::int64_t truth, std::int64_t vocab_size, double epsilon);

// ---- weights bundle --------------------------------------------------------

template <class Ctx>
struct LasWeights {
  std::vector<std::pair<LstmWeights<Ctx>, LstmWeights<Ctx>>> listener;  // fwd, bwd per layer
  typename Ctx::V att_w, att_proj_q, att_proj_k, att_proj_f, att_b, att_filters;
  typename Ctx::V embed;
  std::vector<LstmWeights<Ctx>> speller;
  typename Ctx::V proj_w, proj_b;
};

template <class Ctx>
LasWeights<Ctx> fetch_las_weights(Ctx& ctx, const ModelConfig& cfg) {
  LasWeights<Ctx> w;
  for (std::int64_t l = 0; l < cfg.listener_layers; ++l) {
    const std::string p = "listener.layer" + std::to_string(l);
    w.listener.emplace_back(fetch_lstm(ctx, p + ".fwd"), fetch_lstm(ctx, p + ".bwd"));
  }
  w.att_w = ctx.param("attention.w");
  w.att_proj_q = ctx.param("attention.W");
  w.att_proj_k = ctx.param("attention.V");
  w.att_proj_f = ctx.param("attention.U");
  w.att_b = ctx.param("attention.b");
  w.att_filters = ctx.param("attention.F");
  w.embed = ctx.param("speller.embed");
  for (std::int64_t l = 0; l < cfg.speller_layers; ++l) {
    w.speller.push_back(fetch_lstm(ctx, "speller.layer" + std::to_string(l)));
  }
  w.proj_w = ctx.param("speller.proj.W");
  w.proj_b = ctx.param("speller.proj.b");
  return w;
}

// ---- listener --------------------------------------------------------------

namespace detail {

// Concatenate consecutive step pairs; odd tails pair with a zero vector.
template <class Ctx>
std::vector<typename Ctx::V> pair_reduce(Ctx& ctx, const std::vector<typename Ctx::V>& seq) {
  std::vector<typename Ctx::V> out;
  out.reserve((seq.size() + 1) / 2);
  for (std::size_t i = 0; i < seq.size(); i += 2) {
    if (i + 1 < seq.size()) {
      out.push_back(ctx.concat(seq[i], seq[i + 1]));
    } else {
      auto zero = ctx.constant(Tensor(ctx.val(seq[i]).shape));
      out.push_back(ctx.concat(seq[i], zero));
    }
  }
  return out;
}

template <class Ctx>
std::vector<typename Ctx::V> blstm(Ctx& ctx, const LstmWeights<Ctx>& fwd, const LstmWeights<Ctx>& bwd,
                                   const std::vector<typename Ctx::V>& seq) {
  const std::int64_t hd = fwd.hidden;
  std::vector<typename Ctx::V> fh, bh;
  fh.reserve(seq.size());
  bh.resize(seq.size());
  auto h = ctx.constant(Tensor({hd}));
  auto c = ctx.constant(Tensor({hd}));
  for (const auto& x : seq) {
    auto hc = lstm_step(ctx, fwd, x, h, c);
    h = hc.first;
    c = hc.second;
    fh.push_back(h);
  }
  h = ctx.constant(Tensor({hd}));
  c = ctx.constant(Tensor({hd}));
  for (std::size_t i = seq.size(); i-- > 0;) {
    auto hc = lstm_step(ctx, bwd, seq[i], h, c);
    h = hc.first;
    c = hc.second;
    bh[i] = h;
  }
  std::vector<typename Ctx::V> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) out.push_back(ctx.concat(fh[i], bh[i]));
  return out;
}

}  // namespace detail

// Pyramid BLSTM encoder: every layer pair-reduces its input, then runs a
// BLSTM, so U = ceil(T/2) applied listener_layers times. Returns the
// U x 2H encoder state matrix.
template <class Ctx>
typename Ctx::V listen(Ctx& ctx, const ModelConfig& cfg, const LasWeights<Ctx>& w, const Tensor& frames) {
  if (frames.numel() == 0 || frames.rank() != 2 || frames.dim(0) < 1) {
    throw std::invalid_argument("listen: empty feature sequence");
  }
  if (frames.cols() != cfg.feat_dim) {
    throw std::invalid_argument("listen: feature dim " + std::to_string(frames.cols()) +
                                " != configured " + std::to_string(cfg.feat_dim));
  }
  std::vector<typename Ctx::V> seq;
  seq.reserve(static_cast<std::size_t>(frames.rows()));
  for (std::int64_t t = 0; t < frames.rows(); ++t) seq.push_back(ctx.constant(row(frames, t)));
  for (const auto& [fwd, bwd] : w.listener) {
    seq = detail::pair_reduce(ctx, seq);
    seq = detail::blstm(ctx, fwd, bwd, seq);
  }
  return ctx.stack_rows(seq);
}

// ---- attention -------------------------------------------------------------

template <class V>
struct AttentionState {
  V prev;   // alpha_{i-1}, initialized uniform
  V accum;  // sum of emitted alignments, initialized zero
};

template <class Ctx>
AttentionState<typename Ctx::V> init_attention_state(Ctx& ctx, std::int64_t u) {
  return {ctx.constant(Tensor::full({u}, 1.0 / static_cast<double>(u))), ctx.constant(Tensor({u}))};
}

template <class Ctx>
struct AttendResult {
  typename Ctx::V context;
  typename Ctx::V alpha;
};

// Location-aware attention energies:
//   f = conv(history), e_j = w . tanh(W q + V h_j + U f_j + b),
//   alpha = softmax(e), context = sum_j alpha_j h_j.
template <class Ctx>
AttendResult<Ctx> attend(Ctx& ctx, const LasWeights<Ctx>& w, const typename Ctx::V& query,
                         const typename Ctx::V& h, const typename Ctx::V& history) {
  auto f = ctx.conv1d(history, w.att_filters);            // [U x nf]
  auto loc = ctx.matmul_nt(f, w.att_proj_f);              // [U x A]
  auto keys = ctx.matmul_nt(h, w.att_proj_k);             // [U x A]
  auto q = ctx.add(ctx.matvec(w.att_proj_q, query), w.att_b);
  auto hidden = ctx.tanh(ctx.add_rowbcast(ctx.add(keys, loc), q));
  auto e = ctx.matvec(hidden, w.att_w);                   // [U]
  auto alpha = ctx.softmax(e);
  return {ctx.matt_vec(h, alpha), alpha};
}

// ---- speller ---------------------------------------------------------------

template <class V>
struct SpellerState {
  std::vector<std::pair<V, V>> lstm;  // (h, c) per layer
  AttentionState<V> att;
  std::int32_t prev_token = WordPieceVocab::kBos;
};

template <class Ctx>
SpellerState<typename Ctx::V> init_speller_state(Ctx& ctx, const ModelConfig& cfg, std::int64_t u) {
  SpellerState<typename Ctx::V> st;
  for (std::int64_t l = 0; l < cfg.speller_layers; ++l) {
    st.lstm.emplace_back(ctx.constant(Tensor({cfg.speller_width})), ctx.constant(Tensor({cfg.speller_width})));
  }
  st.att = init_attention_state(ctx, u);
  return st;
}

template <class Ctx>
struct StepResult {
  typename Ctx::V logits;
  typename Ctx::V alpha;
  SpellerState<typename Ctx::V> state;
};

// One decode step: attend with the previous top-layer hidden as query,
// embed the previous token, run the speller stack, project to the
// vocabulary. The returned state has the alignment history advanced.
template <class Ctx>
StepResult<Ctx> las_step(Ctx& ctx, const ModelConfig& cfg, const LasWeights<Ctx>& w,
                         const typename Ctx::V& h, const SpellerState<typename Ctx::V>& state) {
  if (state.prev_token < 0 || state.prev_token >= cfg.vocab_size) {
    throw std::invalid_argument("las_step: token id out of range: " + std::to_string(state.prev_token));
  }
  const auto& history = cfg.attention_mode == AttentionMode::previous ? state.att.prev : state.att.accum;
  auto att = attend(ctx, w, state.lstm.back().first, h, history);

  StepResult<Ctx> out;
  out.alpha = att.alpha;
  out.state = state;
  out.state.att.prev = att.alpha;
  out.state.att.accum = ctx.add(state.att.accum, att.alpha);

  auto x = ctx.concat(ctx.embed_row(w.embed, state.prev_token), att.context);
  for (std::size_t l = 0; l < w.speller.size(); ++l) {
    auto hc = lstm_step(ctx, w.speller[l], x, state.lstm[l].first, state.lstm[l].second);
    out.state.lstm[l] = hc;
    x = hc.first;
  }
  out.logits = ctx.add(ctx.matvec(w.proj_w, x), w.proj_b);
  return out;
}

// ---- losses ----------------------------------------------------------------

struct CeOptions {
  double sampling_prob = 0.0;   // scheduled sampling
  double label_smoothing = 0.0;
};

struct CeDiagnostics {
  std::int64_t steps = 0;
  std::int64_t sampled_feeds = 0;
  std::vector<double> step_losses;
  std::vector<std::int32_t> fed_tokens;  // what the speller actually consumed
};

// Label-smoothed cross entropy, mean over all steps of the batch. With
// probability sampling_prob the fed previous token is drawn from the
// model's previous-step distribution (a constant: no gradient through the
// draw).
Graph::NodeId forward_ce(Graph& g, const ParameterStore& params, const ModelConfig& cfg,
                         const std::vector<Utterance>& batch, const CeOptions& opt, Prng& prng,
                         CeDiagnostics* diag = nullptr);

// Teacher-forced natural-log probability of `tokens` (ending with </s>).
template <class Ctx>
typename Ctx::V sequence_logprob(Ctx& ctx, const ModelConfig& cfg, const LasWeights<Ctx>& w,
                                 const Tensor& frames, const std::vector<std::int32_t>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("sequence_logprob: empty token sequence");
  auto h = listen(ctx, cfg, w, frames);
  auto state = init_speller_state(ctx, cfg, ctx.val(h).rows());
  typename Ctx::V total = ctx.constant(Tensor::scalar(0.0));
  for (std::int32_t tok : tokens) {
    auto step = las_step(ctx, cfg, w, h, state);
    auto logp = ctx.log_softmax(step.logits);
    total = ctx.add(total, ctx.slice(logp, tok, 1));
    state = step.state;
    state.prev_token = tok;
  }
  return total;
}

double sequence_logprob_value(const ParameterStore& params, const ModelConfig& cfg, const Tensor& frames,
                              const std::vector<std::int32_t>& tokens);

// Teacher-forced label-smoothed CE (sampling off), evaluated off-tape.
double evaluate_ce(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& batch,
                   double label_smoothing);

}  // namespace las

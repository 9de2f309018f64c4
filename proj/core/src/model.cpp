#include "las/model.hpp"

#include <cmath>

namespace las {

std::int64_t listener_output_length(std::int64_t t, std::int64_t layers) {
  for (std::int64_t l = 0; l < layers; ++l) t = (t + 1) / 2;
  return t;
}

ParameterStore init_las_params(const ModelConfig& cfg, Prng& prng) {
  if (cfg.vocab_size < 2) throw std::invalid_argument("init_las_params: vocab_size must be >= 2");
  ParameterStore s;
  for (std::int64_t l = 0; l < cfg.listener_layers; ++l) {
    const std::int64_t in = l == 0 ? 2 * cfg.feat_dim : 4 * cfg.listener_width;
    const std::string p = "listener.layer" + std::to_string(l);
    init_lstm_params(s, p + ".fwd", in, cfg.listener_width, prng);
    init_lstm_params(s, p + ".bwd", in, cfg.listener_width, prng);
  }
  const std::int64_t a = cfg.attn();
  s.put("attention.w", uniform_init({a}, a, prng));
  s.put("attention.W", uniform_init({a, cfg.speller_width}, cfg.speller_width, prng));
  s.put("attention.V", uniform_init({a, cfg.encoder_dim()}, cfg.encoder_dim(), prng));
  s.put("attention.U", uniform_init({a, cfg.attention_filters}, cfg.attention_filters, prng));
  s.put("attention.b", Tensor({a}));
  s.put("attention.F", uniform_init({cfg.attention_filters, cfg.attention_kernel}, cfg.attention_kernel, prng));
  s.put("speller.embed", uniform_init({cfg.vocab_size, cfg.embed()}, cfg.embed(), prng));
  for (std::int64_t l = 0; l < cfg.speller_layers; ++l) {
    const std::int64_t in = l == 0 ? cfg.embed() + cfg.encoder_dim() : cfg.speller_width;
    init_lstm_params(s, "speller.layer" + std::to_string(l), in, cfg.speller_width, prng);
  }
  s.put("speller.proj.W", uniform_init({cfg.vocab_size, cfg.speller_width}, cfg.speller_width, prng));
  s.put("speller.proj.b", Tensor({cfg.vocab_size}));
  return s;
}

void validate_las_params(const ParameterStore& store, const ModelConfig& cfg) {
  Prng scratch(0);
  const ParameterStore expect = init_las_params(cfg, scratch);
  for (const auto& [name, t] : expect) {
    if (!store.has(name)) throw std::invalid_argument("checkpoint missing tensor " + name);
    if (store.get(name).shape != t.shape) {
      throw std::invalid_argument("checkpoint tensor " + name + " has shape " + store.get(name).shape_str() +
                                  ", config expects " + t.shape_str());
    }
  }
}

Tensor smooth_labels(std::int64_t truth, std::int64_t vocab_size, double epsilon) {
  if (vocab_size < 2) throw std::invalid_argument("smooth_labels: vocab_size must be >= 2");
  if (epsilon < 0.0 || epsilon >= 1.0) throw std::invalid_argument("smooth_labels: epsilon must be in [0, 1)");
  if (truth < 0 || truth >= vocab_size) throw std::invalid_argument("smooth_labels: truth id out of range");
  Tensor q = Tensor::full({vocab_size}, epsilon / static_cast<double>(vocab_size - 1));
  q.v[static_cast<std::size_t>(truth)] = 1.0 - epsilon;
  return q;
}

namespace {

std::int32_t sample_from(const Tensor& probs, Prng& prng) {
  const double r = prng.next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.v.size(); ++i) {
    acc += probs.v[i];
    if (r < acc) return static_cast<std::int32_t>(i);
  }
  return static_cast<std::int32_t>(probs.v.size() - 1);
}

}  // namespace

Graph::NodeId forward_ce(Graph& g, const ParameterStore& params, const ModelConfig& cfg,
                         const std::vector<Utterance>& batch, const CeOptions& opt, Prng& prng,
                         CeDiagnostics* diag) {
  if (batch.empty()) throw std::invalid_argument("forward_ce: empty batch");
  if (opt.sampling_prob < 0.0 || opt.sampling_prob > 1.0) {
    throw std::invalid_argument("forward_ce: sampling_prob must be in [0, 1]");
  }
  TapeCtx ctx{&g, &params};
  const LasWeights<TapeCtx> w = fetch_las_weights(ctx, cfg);

  Graph::NodeId total = ctx.constant(Tensor::scalar(0.0));
  std::int64_t steps = 0;
  for (const Utterance& utt : batch) {
    if (utt.tokens.empty()) throw std::invalid_argument("forward_ce: empty token sequence for " + utt.id);
    if (utt.tokens.back() != WordPieceVocab::kEos) {
      throw std::invalid_argument("forward_ce: token sequence must end with </s> for " + utt.id);
    }
    auto h = listen(ctx, cfg, w, utt.feats.frames);
    auto state = init_speller_state(ctx, cfg, ctx.val(h).rows());
    Tensor prev_probs;  // model distribution from the previous step
    for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
      if (i > 0) {
        state.prev_token = utt.tokens[i - 1];
        if (opt.sampling_prob > 0.0 && prng.next_double() < opt.sampling_prob) {
          state.prev_token = sample_from(prev_probs, prng);
          if (diag) ++diag->sampled_feeds;
        }
      }
      if (diag) diag->fed_tokens.push_back(state.prev_token);
      auto step = las_step(ctx, cfg, w, h, state);
      auto logp = ctx.log_softmax(step.logits);
      auto target = ctx.constant(smooth_labels(utt.tokens[i], cfg.vocab_size, opt.label_smoothing));
      auto step_loss = ctx.scale(ctx.dot(logp, target), -1.0);
      if (diag) diag->step_losses.push_back(ctx.val(step_loss).v[0]);
      total = ctx.add(total, step_loss);
      ++steps;
      if (opt.sampling_prob > 0.0) prev_probs = las::softmax(ctx.val(step.logits));
      state = step.state;
    }
  }
  if (diag) diag->steps = steps;
  return ctx.scale(total, 1.0 / static_cast<double>(steps));
}

double sequence_logprob_value(const ParameterStore& params, const ModelConfig& cfg, const Tensor& frames,
                              const std::vector<std::int32_t>& tokens) {
  EvalCtx ctx{&params};
  const LasWeights<EvalCtx> w = fetch_las_weights(ctx, cfg);
  return sequence_logprob(ctx, cfg, w, frames, tokens).v[0];
}

double evaluate_ce(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& batch,
                   double label_smoothing) {
  if (batch.empty()) throw std::invalid_argument("evaluate_ce: empty batch");
  EvalCtx ctx{&params};
  const LasWeights<EvalCtx> w = fetch_las_weights(ctx, cfg);
  // Accumulation mirrors forward_ce exactly so both paths agree to the bit.
  double total = 0.0;
  std::int64_t steps = 0;
  for (const Utterance& utt : batch) {
    if (utt.tokens.empty()) throw std::invalid_argument("evaluate_ce: empty token sequence for " + utt.id);
    auto h = listen(ctx, cfg, w, utt.feats.frames);
    auto state = init_speller_state(ctx, cfg, h.rows());
    for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
      if (i > 0) state.prev_token = utt.tokens[i - 1];
      auto step = las_step(ctx, cfg, w, h, state);
      const Tensor logp = las::log_softmax(step.logits);
      total += las::dot(logp, smooth_labels(utt.tokens[i], cfg.vocab_size, label_smoothing)) * -1.0;
      ++steps;
      state = step.state;
    }
  }
  return total * (1.0 / static_cast<double>(steps));
}

}  // namespace las

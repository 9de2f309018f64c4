#include "las/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "las/errors.hpp"

namespace las {

// ---- metrics -----------------------------------------------------------------

EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  struct Cell {
    std::int64_t cost = 0;
    std::int64_t sub = 0;
    std::int64_t del = 0;
    std::int64_t ins = 0;
  };
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {static_cast<std::int64_t>(j), 0, 0, static_cast<std::int64_t>(j)};
  auto better = [](const Cell& a, const Cell& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.sub < b.sub;
  };
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {static_cast<std::int64_t>(i), 0, static_cast<std::int64_t>(i), 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      Cell diag = prev[j - 1];
      if (!match) {
        ++diag.cost;
        ++diag.sub;
      }
      Cell up = prev[j];
      ++up.cost;
      ++up.del;
      Cell left = cur[j - 1];
      ++left.cost;
      ++left.ins;
      Cell best = diag;
      if (better(up, best)) best = up;
      if (better(left, best)) best = left;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return {prev[m].sub, prev[m].del, prev[m].ins};
}

double wer(const std::vector<std::vector<std::string>>& refs, const std::vector<std::vector<std::string>>& hyps) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("wer: ref/hyp utterance count mismatch");
  std::int64_t errors = 0;
  std::int64_t ref_words = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    errors += edit_distance(refs[i], hyps[i]).total();
    ref_words += static_cast<std::int64_t>(refs[i].size());
  }
  if (ref_words == 0) throw NumericError("wer: zero reference words, metric undefined");
  return 100.0 * static_cast<double>(errors) / static_cast<double>(ref_words);
}

// ---- schedules -----------------------------------------------------------------

double warmup_lr(std::int64_t step, const WarmupConfig& cfg) {
  if (step < 0) throw std::invalid_argument("warmup_lr: negative step");
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.lr_end;
  return cfg.lr_start +
         (cfg.lr_end - cfg.lr_start) * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

void newbob_update(NewBobState& state, double val_loss) {
  if (!std::isfinite(val_loss)) throw NumericError("newbob: non-finite validation loss");
  if (!state.has_best) {
    state.best = val_loss;
    state.has_best = true;
    return;
  }
  const double rel_impr = (state.best - val_loss) / state.best;
  if (rel_impr < state.threshold) {
    state.lr *= state.decay;
    state.decayed_once = true;
  }
  state.best = std::min(state.best, val_loss);
}

double sampling_prob(const SamplingSchedule& s, std::int64_t step, bool plateau_signal) {
  switch (s.strategy) {
    case SamplingSchedule::Strategy::constant:
      return s.fixed;
    case SamplingSchedule::Strategy::linear_ramp: {
      if (s.ramp_steps <= 0 || step >= s.ramp_steps) return s.ramp_end;
      return s.ramp_start +
             (s.ramp_end - s.ramp_start) * static_cast<double>(step) / static_cast<double>(s.ramp_steps);
    }
    case SamplingSchedule::Strategy::plateau_step:
      return plateau_signal ? s.boosted : s.base;
  }
  return 0.0;
}

// ---- gradient norm tracking -------------------------------------------------------

double global_norm(const std::map<std::string, Tensor>& grads) {
  double acc = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.v) acc += x * x;
  }
  return std::sqrt(acc);
}

static void scale_all(std::map<std::string, Tensor>& grads, double factor) {
  for (auto& [name, g] : grads) {
    for (double& x : g.v) x *= factor;
  }
}

void clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  const double n = global_norm(grads);
  if (n > max_norm && n > 0.0) scale_all(grads, max_norm / n);
}

ClipResult track_and_clip(std::map<std::string, Tensor>& grads, GradNormTracker& tracker) {
  ClipResult r;
  r.pre_norm = global_norm(grads);
  if (!std::isfinite(r.pre_norm)) throw NumericError("track_and_clip: non-finite gradient norm");
  double norm = r.pre_norm;
  if (tracker.initialized) {
    const double sigma = std::sqrt(std::max(tracker.s - tracker.m * tracker.m, 0.0));
    if (norm > tracker.m + tracker.std_factor * sigma) {
      scale_all(grads, tracker.m / norm);
      norm = tracker.m;
      r.tracker_clipped = true;
    }
  }
  if (norm > tracker.static_cap) {
    scale_all(grads, tracker.static_cap / norm);
    norm = tracker.static_cap;
    r.static_clipped = true;
  }
  r.post_norm = norm;
  if (!tracker.initialized) {
    tracker.m = norm;
    tracker.s = norm * norm;
    tracker.initialized = true;
  } else {
    tracker.m = tracker.decay * tracker.m + (1.0 - tracker.decay) * norm;
    tracker.s = tracker.decay * tracker.s + (1.0 - tracker.decay) * norm * norm;
  }
  return r;
}

// ---- optimizers ---------------------------------------------------------------------

void sgd_step(ParameterStore& params, const std::map<std::string, Tensor>& grads, double lr) {
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] -= lr * g.v[i];
  }
}

void adam_step(ParameterStore& params, const std::map<std::string, Tensor>& grads, AdamState& st) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (!st.m.has(name)) {
      st.m.put(name, Tensor::zeros(p.shape));
      st.v.put(name, Tensor::zeros(p.shape));
    }
    Tensor& m = st.m.get_mut(name);
    Tensor& v = st.v.get_mut(name);
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      m.v[i] = st.beta1 * m.v[i] + (1.0 - st.beta1) * g.v[i];
      v.v[i] = st.beta2 * v.v[i] + (1.0 - st.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.v[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

// ---- MWER ------------------------------------------------------------------------------

std::vector<double> mwer_pstar(const std::vector<double>& logps, double gamma) {
  if (logps.empty()) throw std::invalid_argument("mwer: empty n-best");
  Tensor scaled({static_cast<std::int64_t>(logps.size())});
  for (std::size_t i = 0; i < logps.size(); ++i) scaled.v[i] = gamma * logps[i];
  return softmax(scaled).v;
}

double mwer_expected_error(const std::vector<double>& logps, const std::vector<double>& errors,
                           std::int64_t ref_words, double gamma) {
  if (logps.size() != errors.size()) throw std::invalid_argument("mwer: n-best size mismatch");
  if (ref_words <= 0) throw std::invalid_argument("mwer: reference length must be positive");
  const std::vector<double> p = mwer_pstar(logps, gamma);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * errors[i];
  return acc / static_cast<double>(ref_words);
}

double mwer_loss_value(const std::vector<double>& logps, const std::vector<double>& errors, std::int64_t ref_words,
                       double gamma, double lambda, double ce_loss) {
  return mwer_expected_error(logps, errors, ref_words, gamma) + lambda * ce_loss;
}

double mwer_dloss_dgamma(const std::vector<double>& logps, const std::vector<double>& errors,
                         std::int64_t ref_words, double gamma) {
  const std::vector<double> p = mwer_pstar(logps, gamma);
  double mean_lp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) mean_lp += p[i] * logps[i];
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += errors[i] * p[i] * (logps[i] - mean_lp);
  return acc / static_cast<double>(ref_words);
}

Graph::NodeId mwer_loss_node(Graph& g, const std::vector<Graph::NodeId>& hyp_logps,
                             const std::vector<double>& errors, std::int64_t ref_words, double gamma, double lambda,
                             Graph::NodeId ce_loss) {
  if (hyp_logps.empty()) throw std::invalid_argument("mwer: empty n-best");
  if (hyp_logps.size() != errors.size()) throw std::invalid_argument("mwer: n-best size mismatch");
  if (ref_words <= 0) throw std::invalid_argument("mwer: reference length must be positive");
  Graph::NodeId packed = g.scale(hyp_logps[0], gamma);
  for (std::size_t i = 1; i < hyp_logps.size(); ++i) packed = g.concat(packed, g.scale(hyp_logps[i], gamma));
  Graph::NodeId pstar = g.softmax(packed);
  Tensor werr({static_cast<std::int64_t>(errors.size())}, errors);
  Graph::NodeId expected = g.scale(g.dot(pstar, g.constant(werr)), 1.0 / static_cast<double>(ref_words));
  return g.add(expected, g.scale(ce_loss, lambda));
}

MwerTerms mwer_terms(const std::vector<std::vector<std::int32_t>>& nbest_tokens,
                     const std::vector<std::int32_t>& ref_tokens, const WordPieceVocab& vocab) {
  MwerTerms t;
  const std::vector<std::string> ref_words = vocab.decode_words(ref_tokens);
  t.ref_words = static_cast<std::int64_t>(ref_words.size());
  if (t.ref_words == 0) throw std::invalid_argument("mwer: empty reference after merging pieces");
  t.errors.reserve(nbest_tokens.size());
  for (const auto& toks : nbest_tokens) {
    t.errors.push_back(static_cast<double>(edit_distance(ref_words, vocab.decode_words(toks)).total()));
  }
  return t;
}

// ---- fit -------------------------------------------------------------------------------

namespace {

std::string checkpoint_name(std::int64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%04lld.lasf", static_cast<long long>(epoch));
  return buf;
}

}  // namespace

FitResult fit(ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& train,
              const std::vector<Utterance>& val, const TrainOptions& opt, const std::filesystem::path& out_dir,
              Prng& prng) {
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path log_path = out_dir / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw IoError("fit: cannot open log: " + log_path.string());

  NewBobState nb;
  nb.lr = opt.warmup.lr_end;
  nb.decay = opt.newbob_decay;
  nb.threshold = opt.newbob_threshold;
  GradNormTracker tracker;
  tracker.decay = opt.grad_ema_decay;
  tracker.std_factor = opt.grad_std_factor;
  tracker.static_cap = opt.grad_static_cap;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult result;
  std::int64_t global_step = 0;
  double lr_used = warmup_lr(0, opt.warmup);
  for (std::int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    prng.shuffle(order);
    double loss_sum = 0.0;
    std::int64_t loss_steps = 0;
    std::int64_t clip_events = 0;
    double p_used = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      std::vector<Utterance> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size)); ++i) {
        batch.push_back(train[order[i]]);
      }
      p_used = sampling_prob(opt.sampling, global_step, nb.decayed_once);
      Graph g;
      CeDiagnostics diag;
      const Graph::NodeId loss = forward_ce(g, params, cfg, batch, {p_used, opt.label_smoothing}, prng, &diag);
      const double loss_value = g.value(loss).v[0];
      if (!std::isfinite(loss_value)) {
        throw NumericError("fit: training loss diverged (non-finite) at epoch " + std::to_string(epoch));
      }
      g.backward(loss);
      auto grads = g.param_grads();
      const ClipResult clip = track_and_clip(grads, tracker);
      if (clip.tracker_clipped || clip.static_clipped) ++clip_events;
      lr_used = global_step < opt.warmup.warmup_steps ? warmup_lr(global_step, opt.warmup) : nb.lr;
      sgd_step(params, grads, lr_used);
      ++global_step;
      loss_sum += loss_value * static_cast<double>(diag.steps);
      loss_steps += diag.steps;
    }
    const double train_loss = loss_sum / static_cast<double>(loss_steps);
    const double val_loss = evaluate_ce(params, cfg, val.empty() ? train : val, opt.label_smoothing);
    if (global_step >= opt.warmup.warmup_steps) newbob_update(nb, val_loss);

    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["lr"] = lr_used;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    j["sampling_prob"] = p_used;
    j["grad_clip_events"] = clip_events;
    log << j.dump() << "\n";

    if (opt.checkpoint_every_epoch) {
      save_checkpoint(out_dir / checkpoint_name(epoch), params);
    }
    result.train_loss = train_loss;
    result.val_loss = val_loss;
    result.epochs_run = epoch;
  }
  result.final_checkpoint = out_dir / "final.lasf";
  save_checkpoint(result.final_checkpoint, params);
  result.log_path = log_path;
  return result;
}

MwerResult mwer_fit(ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& train,
                    const WordPieceVocab& vocab, const MwerOptions& opt, const std::filesystem::path& out_dir) {
  if (train.empty()) throw std::invalid_argument("mwer_fit: empty training set");
  std::filesystem::create_directories(out_dir);

  BeamConfig bcfg;
  bcfg.beam = static_cast<int>(std::max<std::int64_t>(opt.beam, opt.nbest));
  bcfg.nbest = static_cast<int>(opt.nbest);
  bcfg.lm_weight = 0.0;
  bcfg.length_alpha = opt.length_alpha;

  auto corpus_expected_error = [&]() {
    double acc = 0.0;
    std::int64_t counted = 0;
    for (const Utterance& utt : train) {
      const std::vector<Hypothesis> nbest = beam_search(params, cfg, utt.feats, bcfg);
      std::vector<std::vector<std::int32_t>> toks;
      std::vector<double> logps;
      for (const Hypothesis& h : nbest) {
        if (!h.finished) continue;
        toks.push_back(h.tokens);
        logps.push_back(sequence_logprob_value(params, cfg, utt.feats.frames, h.tokens));
      }
      if (toks.empty()) continue;
      const MwerTerms terms = mwer_terms(toks, utt.tokens, vocab);
      acc += mwer_expected_error(logps, terms.errors, terms.ref_words, opt.gamma);
      ++counted;
    }
    return counted > 0 ? acc / static_cast<double>(counted) : 0.0;
  };

  MwerResult result;
  result.initial_expected_error = corpus_expected_error();

  for (std::int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (const Utterance& utt : train) {
      const std::vector<Hypothesis> nbest = beam_search(params, cfg, utt.feats, bcfg);
      std::vector<std::vector<std::int32_t>> toks;
      for (const Hypothesis& h : nbest) {
        if (h.finished) toks.push_back(h.tokens);
      }
      if (toks.empty()) continue;
      const MwerTerms terms = mwer_terms(toks, utt.tokens, vocab);

      Graph g;
      TapeCtx ctx{&g, &params};
      const LasWeights<TapeCtx> w = fetch_las_weights(ctx, cfg);
      std::vector<Graph::NodeId> logps;
      logps.reserve(toks.size());
      for (const auto& t : toks) logps.push_back(sequence_logprob(ctx, cfg, w, utt.feats.frames, t));
      Prng unused(0);  // sampling off for the CE term
      const Graph::NodeId ce = forward_ce(g, params, cfg, {utt}, {0.0, opt.label_smoothing}, unused);
      const Graph::NodeId loss = mwer_loss_node(g, logps, terms.errors, terms.ref_words, opt.gamma, opt.lambda, ce);
      g.backward(loss);
      auto grads = g.param_grads();
      clip_global_norm(grads, opt.grad_static_cap);
      sgd_step(params, grads, opt.lr);
    }
    result.epochs_run = epoch;
  }
  result.final_expected_error = corpus_expected_error();
  result.final_checkpoint = out_dir / "mwer_final.lasf";
  save_checkpoint(result.final_checkpoint, params);
  return result;
}

double corpus_greedy_wer(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Utterance>& utts,
                         const WordPieceVocab& vocab, const std::vector<std::string>& ref_texts) {
  if (utts.size() != ref_texts.size()) throw std::invalid_argument("corpus_greedy_wer: size mismatch");
  BeamConfig bcfg;
  bcfg.beam = 1;
  bcfg.nbest = 1;
  bcfg.lm_weight = 0.0;
  bcfg.length_alpha = 0.0;
  std::vector<std::vector<std::string>> refs, hyps;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    refs.push_back(WordPieceVocab::split_words(WordPieceVocab::normalize(ref_texts[i])));
    const std::vector<Hypothesis> nbest = beam_search(params, cfg, utts[i].feats, bcfg);
    hyps.push_back(nbest.empty() ? std::vector<std::string>{} : merge_wordpieces(nbest[0].tokens, vocab));
  }
  return wer(refs, hyps);
}

}  // namespace las

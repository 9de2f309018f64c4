#include "las/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <json.hpp>

#include "las/errors.hpp"
#include "las/training.hpp"

namespace las {

double length_penalty(std::int64_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

std::vector<std::string> merge_wordpieces(const std::vector<std::int32_t>& tokens, const WordPieceVocab& vocab) {
  return vocab.decode_words(tokens);
}

namespace {

bool tokens_less(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

struct ActiveHyp {
  Hypothesis hyp;
  SpellerState<Tensor> state;
  double total = 0.0;  // las_logp + lm_weight * lm_logp
};

std::shared_ptr<const FusionState> fusion_start(const NeuralLm& lm) {
  auto [logp, st] = lm.step(lm.zero_state(), WordPieceVocab::kEos);
  auto fs = std::make_shared<FusionState>();
  fs->rnn = std::move(st);
  fs->next_logp = std::move(logp);
  return fs;
}

}  // namespace

std::vector<Hypothesis> beam_search(const ParameterStore& params, const ModelConfig& cfg,
                                    const FeatureSequence& feats, const BeamConfig& bcfg,
                                    const NeuralLm* fusion_lm) {
  if (feats.num_frames() == 0) throw std::invalid_argument("beam_search: empty features");
  if (bcfg.beam < 1 || bcfg.nbest < 1 || bcfg.beam < bcfg.nbest) {
    throw std::invalid_argument("beam_search: need beam >= nbest >= 1");
  }
  if (bcfg.lm_weight < 0.0) throw std::invalid_argument("beam_search: lm_weight must be >= 0");
  if (bcfg.length_alpha < 0.0) throw std::invalid_argument("beam_search: length_alpha must be >= 0");
  // lm_weight 0 decodes byte-identically to a no-LM decode.
  const NeuralLm* lm = bcfg.lm_weight > 0.0 ? fusion_lm : nullptr;

  EvalCtx ctx{&params};
  const LasWeights<EvalCtx> w = fetch_las_weights(ctx, cfg);
  const Tensor h = listen(ctx, cfg, w, feats.frames);
  const std::int64_t u = h.rows();
  const std::int64_t max_steps = bcfg.max_steps > 0 ? bcfg.max_steps : 2 * u + 10;
  const double lp_max = length_penalty(max_steps, bcfg.length_alpha);

  ActiveHyp init;
  init.state = init_speller_state(ctx, cfg, u);
  if (lm) init.hyp.lm_state = fusion_start(*lm);
  std::vector<ActiveHyp> active{std::move(init)};
  std::vector<Hypothesis> finished;

  struct Candidate {
    std::size_t parent = 0;
    std::int32_t token = 0;
    double las_logp = 0.0;
    double lm_logp = 0.0;
    double total = 0.0;
    double score = 0.0;
    std::vector<std::int32_t> tokens;
  };

  auto final_sort = [](std::vector<Hypothesis>& v) {
    std::sort(v.begin(), v.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.score != b.score) return a.score > b.score;
      return tokens_less(a.tokens, b.tokens);
    });
  };

  for (std::int64_t step = 0; step < max_steps && !active.empty(); ++step) {
    // Expand every active hypothesis over all emittable pieces.
    std::vector<Candidate> cands;
    std::vector<StepResult<EvalCtx>> stepped(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      stepped[a] = las_step(ctx, cfg, w, h, active[a].state);
      const Tensor logp = las::log_softmax(stepped[a].logits);
      const Tensor* lm_logp = lm ? &active[a].hyp.lm_state->next_logp : nullptr;
      for (std::int32_t t = 0; t < cfg.vocab_size; ++t) {
        if (t == WordPieceVocab::kPad || t == WordPieceVocab::kBos) continue;
        Candidate c;
        c.parent = a;
        c.token = t;
        c.las_logp = active[a].hyp.las_logp + logp.v[static_cast<std::size_t>(t)];
        c.lm_logp = active[a].hyp.lm_logp + (lm_logp ? lm_logp->v[static_cast<std::size_t>(t)] : 0.0);
        c.total = c.las_logp + bcfg.lm_weight * c.lm_logp;
        c.tokens = active[a].hyp.tokens;
        c.tokens.push_back(t);
        c.score = c.total / length_penalty(static_cast<std::int64_t>(c.tokens.size()), bcfg.length_alpha);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return tokens_less(a.tokens, b.tokens);
    });

    // Keep the top `beam` candidates overall; the ones that emitted </s>
    // move to the finished set, the rest stay active.
    std::vector<ActiveHyp> next;
    const std::size_t take = std::min(cands.size(), static_cast<std::size_t>(bcfg.beam));
    for (std::size_t ci = 0; ci < take; ++ci) {
      Candidate& c = cands[ci];
      if (c.token == WordPieceVocab::kEos) {
        Hypothesis hyp;
        hyp.tokens = std::move(c.tokens);
        hyp.las_logp = c.las_logp;
        hyp.lm_logp = c.lm_logp;
        hyp.finished = true;
        hyp.score = c.score;
        finished.push_back(std::move(hyp));
        continue;
      }
      ActiveHyp nh;
      nh.hyp.tokens = std::move(c.tokens);
      nh.hyp.las_logp = c.las_logp;
      nh.hyp.lm_logp = c.lm_logp;
      nh.hyp.score = c.score;
      nh.total = c.total;
      nh.state = stepped[c.parent].state;
      nh.state.prev_token = c.token;
      if (lm) {
        auto [next_logp, next_rnn] = lm->step(active[c.parent].hyp.lm_state->rnn, c.token);
        auto fs = std::make_shared<FusionState>();
        fs->rnn = std::move(next_rnn);
        fs->next_logp = std::move(next_logp);
        nh.hyp.lm_state = std::move(fs);
      }
      next.push_back(std::move(nh));
    }
    active = std::move(next);
    final_sort(finished);
    if (finished.size() > static_cast<std::size_t>(bcfg.beam)) finished.resize(static_cast<std::size_t>(bcfg.beam));

    // Stop once no active hypothesis can still beat the nbest-th finished
    // score: per-token increments are <= 0, so total/lp(max_steps) bounds
    // any extension.
    if (finished.size() >= static_cast<std::size_t>(bcfg.nbest)) {
      const double bar = finished[static_cast<std::size_t>(bcfg.nbest) - 1].score;
      double best_bound = -std::numeric_limits<double>::infinity();
      for (const ActiveHyp& a : active) best_bound = std::max(best_bound, a.total / lp_max);
      if (best_bound <= bar) break;
    }
  }

  std::vector<Hypothesis> out = finished;
  if (out.empty()) {
    for (const ActiveHyp& a : active) out.push_back(a.hyp);  // unfinished fallback, flagged
    final_sort(out);
  }
  if (out.size() > static_cast<std::size_t>(bcfg.nbest)) out.resize(static_cast<std::size_t>(bcfg.nbest));
  for (Hypothesis& hyp : out) hyp.lm_state.reset();
  return out;
}

void rescore_nbest(std::vector<Hypothesis>& nbest, const std::function<double(const Hypothesis&)>& lm_logprob_ln,
                   double lambda) {
  if (nbest.empty()) throw std::invalid_argument("rescore: empty n-best");
  for (Hypothesis& h : nbest) {
    h.lm_logp = lm_logprob_ln(h);
    h.score = h.las_logp + lambda * h.lm_logp;
  }
  std::stable_sort(nbest.begin(), nbest.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
}

void rescore_nbest(std::vector<Hypothesis>& nbest, const NGramLm& lm, double lambda, const WordPieceVocab& vocab) {
  rescore_nbest(
      nbest,
      [&](const Hypothesis& h) { return lm.sentence_logprob_ln(merge_wordpieces(h.tokens, vocab)); }, lambda);
}

void rescore_nbest(std::vector<Hypothesis>& nbest, const NeuralLm& lm, double lambda, LmLevel level,
                   const WordPieceVocab& vocab, const WordVocab* word_vocab) {
  if (level == LmLevel::word && word_vocab == nullptr) {
    throw std::invalid_argument("rescore: word-level neural LM needs a word vocabulary");
  }
  rescore_nbest(
      nbest,
      [&](const Hypothesis& h) {
        if (level == LmLevel::wordpiece) {
          std::vector<std::int32_t> toks = h.tokens;
          while (!toks.empty() && toks.back() == WordPieceVocab::kEos) toks.pop_back();
          return lm.sentence_logprob_ln(toks);
        }
        return lm.sentence_logprob_ln(word_vocab->encode_words(merge_wordpieces(h.tokens, vocab)));
      },
      lambda);
}

// ---- corpus decoding ------------------------------------------------------------

DecodeReport decode_corpus(const ParameterStore& params, const ModelConfig& cfg,
                           const std::vector<DecodeInput>& inputs, const WordPieceVocab& vocab,
                           const BeamConfig& bcfg, const NeuralLm* fusion_lm, int jobs,
                           const std::filesystem::path& nbest_path,
                           const std::filesystem::path& report_path) {
  DecodeReport report;
  report.results.resize(inputs.size());

  const int n_threads = std::max(1, jobs);
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= inputs.size()) break;
      DecodeResult& r = report.results[i];
      r.id = inputs[i].id;
      try {
        r.nbest = beam_search(params, cfg, inputs[i].feats, bcfg, fusion_lm);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  if (!nbest_path.empty()) write_nbest_jsonl(nbest_path, report.results, &vocab);

  std::vector<std::vector<std::string>> refs, hyps;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const DecodeResult& r = report.results[i];
    if (!r.error.empty()) {
      ++report.errors;
      continue;
    }
    if (!inputs[i].ref_text.empty()) {
      report.has_refs = true;
      refs.push_back(WordPieceVocab::split_words(WordPieceVocab::normalize(inputs[i].ref_text)));
      hyps.push_back(r.nbest.empty() ? std::vector<std::string>{} : merge_wordpieces(r.nbest[0].tokens, vocab));
    }
  }
  if (report.has_refs && !refs.empty()) {
    report.wer_percent = wer(refs, hyps);
    for (const auto& r : refs) report.ref_words += static_cast<std::int64_t>(r.size());
  }
  if (!report_path.empty()) {
    nlohmann::ordered_json j;
    j["utterances"] = inputs.size();
    j["decode_errors"] = report.errors;
    if (report.has_refs) {
      j["ref_words"] = report.ref_words;
      j["wer_percent"] = report.wer_percent;
    }
    std::ofstream os(report_path, std::ios::binary);
    if (!os) throw IoError("decode: cannot open report: " + report_path.string());
    os << j.dump(2) << "\n";
  }
  return report;
}

void write_nbest_jsonl(const std::filesystem::path& path, const std::vector<DecodeResult>& results,
                       const WordPieceVocab* vocab) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("nbest: cannot open for writing: " + path.string());
  for (const DecodeResult& r : results) {
    if (!r.error.empty()) {
      nlohmann::ordered_json j;
      j["id"] = r.id;
      j["error"] = r.error;
      os << j.dump() << "\n";
      continue;
    }
    for (std::size_t rank = 0; rank < r.nbest.size(); ++rank) {
      const Hypothesis& h = r.nbest[rank];
      nlohmann::ordered_json j;
      j["id"] = r.id;
      j["rank"] = rank + 1;
      j["text"] = vocab ? vocab->decode(h.tokens) : "";
      j["tokens"] = h.tokens;
      j["las_logp"] = h.las_logp;
      j["lm_logp"] = h.lm_logp;
      j["score"] = h.score;
      j["finished"] = h.finished;
      os << j.dump() << "\n";
    }
  }
  if (!os) throw IoError("nbest: write failed: " + path.string());
}

std::vector<DecodeResult> read_nbest_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("nbest: cannot open: " + path.string());
  std::vector<DecodeResult> out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("nbest: bad JSON: ") + e.what(), line_no);
    }
    const std::string id = j.at("id").get<std::string>();
    if (out.empty() || out.back().id != id) {
      out.push_back(DecodeResult{});
      out.back().id = id;
    }
    if (j.contains("error")) {
      out.back().error = j["error"].get<std::string>();
      continue;
    }
    Hypothesis h;
    h.tokens = j.at("tokens").get<std::vector<std::int32_t>>();
    h.las_logp = j.at("las_logp").get<double>();
    h.lm_logp = j.at("lm_logp").get<double>();
    h.score = j.at("score").get<double>();
    h.finished = j.value("finished", true);
    out.back().nbest.push_back(std::move(h));
  }
  return out;
}

}  // namespace las

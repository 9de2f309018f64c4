#include <doctest.h>

#include <cmath>

#include "las/decoder.hpp"
#include "las/training.hpp"
#include "testutil.hpp"

using namespace las;

namespace {

struct TinyDecode {
  ModelConfig cfg;
  ParameterStore params;
  FeatureSequence feats;
};

TinyDecode make_decode_fixture(std::uint64_t seed, std::int64_t vocab = 6) {
  TinyDecode d;
  d.cfg = lastest::tiny_model_config(vocab);
  Prng prng(seed);
  d.params = init_las_params(d.cfg, prng);
  d.feats.frames = lastest::random_frames(10, d.cfg.feat_dim, prng);
  return d;
}

// Exhaustive enumeration oracle: all </s>-terminated sequences up to
// max_steps, scored exactly like the beam (teacher-forced model logprob +
// weighted LM + length penalty); deterministic tie-break on tokens.
struct Enumerated {
  std::vector<std::int32_t> tokens;
  double score = 0.0;
};

Enumerated enumerate_best(const TinyDecode& d, const BeamConfig& bcfg, const NeuralLm* lm,
                          std::int64_t max_steps) {
  EvalCtx ctx{&d.params};
  const auto w = fetch_las_weights(ctx, d.cfg);
  Enumerated best;
  bool have = false;
  std::vector<std::int32_t> prefix;

  std::function<void(std::int64_t)> rec = [&](std::int64_t remaining) {
    for (std::int32_t t = 0; t < d.cfg.vocab_size; ++t) {
      if (t == WordPieceVocab::kPad || t == WordPieceVocab::kBos) continue;
      prefix.push_back(t);
      if (t == WordPieceVocab::kEos) {
        const double las_lp = sequence_logprob(ctx, d.cfg, w, d.feats.frames, prefix).v[0];
        double lm_lp = 0.0;
        if (lm && bcfg.lm_weight > 0.0) {
          std::vector<std::int32_t> body(prefix.begin(), prefix.end() - 1);
          lm_lp = lm->sentence_logprob_ln(body);
        }
        const double score = (las_lp + bcfg.lm_weight * lm_lp) /
                             length_penalty(static_cast<std::int64_t>(prefix.size()), bcfg.length_alpha);
        if (!have || score > best.score ||
            (score == best.score &&
             std::lexicographical_compare(prefix.begin(), prefix.end(), best.tokens.begin(), best.tokens.end()))) {
          best.tokens = prefix;
          best.score = score;
          have = true;
        }
      } else if (remaining > 1) {
        rec(remaining - 1);
      }
      prefix.pop_back();
    }
  };
  rec(max_steps);
  return best;
}

}  // namespace

TEST_CASE("length penalty") {
  CHECK(length_penalty(1, 0.0) == 1.0);
  CHECK(length_penalty(7, 0.0) == 1.0);
  CHECK(length_penalty(1, 0.6) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(length_penalty(7, 0.6) == doctest::Approx(std::pow(2.0, 0.6)).epsilon(1e-12));
  // increasing in length for alpha > 0
  for (std::int64_t l = 1; l < 20; ++l) CHECK(length_penalty(l + 1, 0.6) > length_penalty(l, 0.6));
}

TEST_CASE("merge_wordpieces") {
  const auto vocab = WordPieceVocab::learn({"the cat", "th e c at"}, 40);
  const auto toks = vocab.encode("the cat");
  auto with_eos = toks;
  with_eos.push_back(WordPieceVocab::kEos);
  CHECK(merge_wordpieces(with_eos, vocab) == std::vector<std::string>{"the", "cat"});
  CHECK(merge_wordpieces({}, vocab).empty());
}

TEST_CASE("beam search basic contracts") {
  auto d = make_decode_fixture(1);
  BeamConfig bcfg;
  bcfg.beam = 4;
  bcfg.nbest = 4;
  bcfg.lm_weight = 0.0;
  bcfg.length_alpha = 0.6;
  const auto nbest = beam_search(d.params, d.cfg, d.feats, bcfg);
  REQUIRE(!nbest.empty());
  for (const auto& h : nbest) {
    CHECK(h.finished);
    CHECK(h.tokens.back() == WordPieceVocab::kEos);
    CHECK(h.las_logp <= 0.0);
    const double expect =
        (h.las_logp + bcfg.lm_weight * h.lm_logp) /
        length_penalty(static_cast<std::int64_t>(h.tokens.size()), bcfg.length_alpha);
    CHECK(h.score == doctest::Approx(expect).epsilon(1e-12));  // score recomputable
  }
  // sorted strictly by score with deterministic tie-break
  for (std::size_t i = 1; i < nbest.size(); ++i) {
    CHECK((nbest[i - 1].score > nbest[i].score ||
           (nbest[i - 1].score == nbest[i].score &&
            std::lexicographical_compare(nbest[i - 1].tokens.begin(), nbest[i - 1].tokens.end(),
                                         nbest[i].tokens.begin(), nbest[i].tokens.end()))));
  }
  CHECK_THROWS_AS(beam_search(d.params, d.cfg, FeatureSequence{}, bcfg), std::invalid_argument);
  BeamConfig bad = bcfg;
  bad.nbest = 10;  // beam < nbest
  CHECK_THROWS_AS(beam_search(d.params, d.cfg, d.feats, bad), std::invalid_argument);
}

TEST_CASE("lm_weight 0 with a fusion LM decodes identically to no LM") {
  auto d = make_decode_fixture(2);
  Prng prng(22);
  NnLmConfig lcfg;
  lcfg.vocab_size = d.cfg.vocab_size;
  lcfg.embed_dim = 4;
  lcfg.layers = 1;
  lcfg.width = 5;
  const NeuralLm lm(lcfg, prng);
  BeamConfig bcfg;
  bcfg.beam = 6;
  bcfg.nbest = 4;
  bcfg.lm_weight = 0.0;
  const auto with_lm = beam_search(d.params, d.cfg, d.feats, bcfg, &lm);
  const auto without = beam_search(d.params, d.cfg, d.feats, bcfg, nullptr);
  REQUIRE(with_lm.size() == without.size());
  for (std::size_t i = 0; i < with_lm.size(); ++i) {
    CHECK(with_lm[i].tokens == without[i].tokens);
    CHECK(with_lm[i].score == without[i].score);
    CHECK(with_lm[i].lm_logp == without[i].lm_logp);  // stays zero
  }
}

TEST_CASE("beam=1 equals greedy decoding") {
  auto d = make_decode_fixture(3);
  BeamConfig bcfg;
  bcfg.beam = 1;
  bcfg.nbest = 1;
  bcfg.lm_weight = 0.0;
  bcfg.length_alpha = 0.0;
  const auto nbest = beam_search(d.params, d.cfg, d.feats, bcfg);
  REQUIRE(nbest.size() == 1);

  // reference greedy loop
  EvalCtx ctx{&d.params};
  const auto w = fetch_las_weights(ctx, d.cfg);
  const Tensor h = listen(ctx, d.cfg, w, d.feats.frames);
  auto state = init_speller_state(ctx, d.cfg, h.rows());
  std::vector<std::int32_t> greedy;
  for (std::int64_t step = 0; step < 2 * h.rows() + 10; ++step) {
    auto res = las_step(ctx, d.cfg, w, h, state);
    const Tensor logp = las::log_softmax(res.logits);
    std::int32_t best = -1;
    for (std::int32_t t = 0; t < d.cfg.vocab_size; ++t) {
      if (t == WordPieceVocab::kPad || t == WordPieceVocab::kBos) continue;
      if (best < 0 || logp.v[static_cast<std::size_t>(t)] > logp.v[static_cast<std::size_t>(best)]) best = t;
    }
    greedy.push_back(best);
    if (best == WordPieceVocab::kEos) break;
    state = res.state;
    state.prev_token = best;
  }
  CHECK(nbest[0].tokens == greedy);
}

TEST_CASE("alpha=0 ranking equals raw log-linear score") {
  auto d = make_decode_fixture(4);
  BeamConfig bcfg;
  bcfg.beam = 5;
  bcfg.nbest = 5;
  bcfg.lm_weight = 0.0;
  bcfg.length_alpha = 0.0;
  const auto nbest = beam_search(d.params, d.cfg, d.feats, bcfg);
  for (const auto& h : nbest) CHECK(h.score == doctest::Approx(h.las_logp).epsilon(1e-12));
}

TEST_CASE("wider beams never lose top-1 score") {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    auto d = make_decode_fixture(seed);
    BeamConfig narrow;
    narrow.beam = 1;
    narrow.nbest = 1;
    narrow.lm_weight = 0.0;
    BeamConfig wide = narrow;
    wide.beam = 8;
    BeamConfig wider = narrow;
    wider.beam = 32;
    const double s1 = beam_search(d.params, d.cfg, d.feats, narrow)[0].score;
    const double s2 = beam_search(d.params, d.cfg, d.feats, wide)[0].score;
    const double s3 = beam_search(d.params, d.cfg, d.feats, wider)[0].score;
    CHECK(s2 >= s1 - 1e-12);
    CHECK(s3 >= s2 - 1e-12);
  }
}

TEST_CASE("beam search equals exhaustive enumeration on tiny instances") {
  int checked = 0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    auto d = make_decode_fixture(seed, 6);  // 4 emittable pieces incl </s>
    Prng lrng(seed * 3 + 1);
    NnLmConfig lcfg;
    lcfg.vocab_size = d.cfg.vocab_size;
    lcfg.embed_dim = 3;
    lcfg.layers = 1;
    lcfg.width = 4;
    const NeuralLm lm(lcfg, lrng);
    for (const double alpha : {0.0, 0.6}) {
      for (const bool fuse : {false, true}) {
        BeamConfig bcfg;
        bcfg.beam = 1024;  // >= 4^5: breadth-first exhaustive
        bcfg.nbest = 1;
        bcfg.lm_weight = fuse ? 0.4 : 0.0;
        bcfg.length_alpha = alpha;
        bcfg.max_steps = 5;
        const auto nbest = beam_search(d.params, d.cfg, d.feats, bcfg, fuse ? &lm : nullptr);
        const auto oracle = enumerate_best(d, bcfg, fuse ? &lm : nullptr, 5);
        REQUIRE(!nbest.empty());
        CHECK(nbest[0].tokens == oracle.tokens);
        CHECK(nbest[0].score == doctest::Approx(oracle.score).epsilon(1e-12));
        ++checked;
      }
    }
  }
  CHECK(checked == 40);
}

TEST_CASE("uniform fusion LM shifts every score by a per-token constant") {
  auto d = make_decode_fixture(5);
  Prng prng(55);
  NnLmConfig lcfg;
  lcfg.vocab_size = d.cfg.vocab_size;
  lcfg.embed_dim = 3;
  lcfg.layers = 1;
  lcfg.width = 4;
  NeuralLm lm(lcfg, prng);
  lm.params_mut().get_mut("nnlm.proj.W") = Tensor({lcfg.vocab_size, lcfg.width});
  lm.params_mut().get_mut("nnlm.proj.b") = Tensor({lcfg.vocab_size});  // uniform distribution

  BeamConfig bcfg;
  bcfg.beam = 8;
  bcfg.nbest = 8;
  bcfg.lm_weight = 0.5;
  bcfg.length_alpha = 0.0;
  const auto fused = beam_search(d.params, d.cfg, d.feats, bcfg, &lm);
  const double logk = -std::log(static_cast<double>(d.cfg.vocab_size));
  for (const auto& h : fused) {
    CHECK(h.lm_logp == doctest::Approx(logk * static_cast<double>(h.tokens.size())).epsilon(1e-9));
    CHECK(h.score ==
          doctest::Approx(h.las_logp + bcfg.lm_weight * logk * static_cast<double>(h.tokens.size())).epsilon(1e-9));
  }
}

TEST_CASE("rescoring") {
  std::vector<Hypothesis> nbest(2);
  nbest[0].tokens = {4, WordPieceVocab::kEos};
  nbest[0].las_logp = -1.0;
  nbest[0].score = -1.0;
  nbest[1].tokens = {5, WordPieceVocab::kEos};
  nbest[1].las_logp = -1.2;
  nbest[1].score = -1.2;

  // lambda 0 keeps the order
  auto copy = nbest;
  rescore_nbest(copy, [](const Hypothesis&) { return -100.0; }, 0.0);
  CHECK(copy[0].tokens == nbest[0].tokens);
  CHECK(copy[1].tokens == nbest[1].tokens);

  // las (-1.0, -1.2), lm (-5.0, -1.0), lambda 0.5 -> scores (-3.5, -1.7): order flips
  copy = nbest;
  rescore_nbest(copy, [](const Hypothesis& h) { return h.tokens[0] == 4 ? -5.0 : -1.0; }, 0.5);
  CHECK(copy[0].tokens[0] == 5);
  CHECK(copy[0].score == doctest::Approx(-1.7).epsilon(1e-12));
  CHECK(copy[1].score == doctest::Approx(-3.5).epsilon(1e-12));

  // idempotent ordering
  auto again = copy;
  rescore_nbest(again, [](const Hypothesis& h) { return h.tokens[0] == 4 ? -5.0 : -1.0; }, 0.5);
  CHECK(again[0].tokens == copy[0].tokens);
  CHECK(again[1].tokens == copy[1].tokens);

  std::vector<Hypothesis> empty;
  CHECK_THROWS_AS(rescore_nbest(empty, [](const Hypothesis&) { return 0.0; }, 0.5), std::invalid_argument);
}

TEST_CASE("rescoring with ngram and neural LMs end to end") {
  const auto vocab = WordPieceVocab::learn({"aa bb", "bb aa", "aa aa"}, 24);
  const NGramLm ngram = train_ngram({"aa bb", "aa bb", "aa bb"}, 2, 0.4);

  std::vector<Hypothesis> nbest(2);
  nbest[0].tokens = vocab.encode("bb bb");
  nbest[0].tokens.push_back(WordPieceVocab::kEos);
  nbest[0].las_logp = -1.0;
  nbest[1].tokens = vocab.encode("aa bb");
  nbest[1].tokens.push_back(WordPieceVocab::kEos);
  nbest[1].las_logp = -1.05;

  rescore_nbest(nbest, ngram, 0.8, vocab);
  CHECK(merge_wordpieces(nbest[0].tokens, vocab) == std::vector<std::string>{"aa", "bb"});

  // word-level neural rescoring needs the word vocab
  Prng prng(66);
  const WordVocab wv = WordVocab::build({"aa bb"});
  NnLmConfig lcfg;
  lcfg.vocab_size = wv.size();
  lcfg.embed_dim = 3;
  lcfg.layers = 1;
  lcfg.width = 4;
  const NeuralLm nlm(lcfg, prng);
  CHECK_THROWS_AS(rescore_nbest(nbest, nlm, 0.5, LmLevel::word, vocab, nullptr), std::invalid_argument);
  rescore_nbest(nbest, nlm, 0.5, LmLevel::word, vocab, &wv);  // runs
}

TEST_CASE("nbest jsonl round trip") {
  const auto dir = lastest::test_tmpdir("nbest");
  std::vector<DecodeResult> results(2);
  results[0].id = "utt-1";
  results[0].nbest.resize(2);
  results[0].nbest[0].tokens = {4, 2};
  results[0].nbest[0].las_logp = -1.5;
  results[0].nbest[0].lm_logp = -2.0;
  results[0].nbest[0].score = -1.25;
  results[0].nbest[0].finished = true;
  results[0].nbest[1].tokens = {5, 2};
  results[0].nbest[1].las_logp = -2.5;
  results[0].nbest[1].score = -2.0;
  results[0].nbest[1].finished = true;
  results[1].id = "utt-2";
  results[1].error = "boom";

  write_nbest_jsonl(dir / "n.jsonl", results);
  const auto back = read_nbest_jsonl(dir / "n.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].nbest.size() == 2);
  CHECK(back[0].nbest[0].tokens == results[0].nbest[0].tokens);
  CHECK(back[0].nbest[0].las_logp == results[0].nbest[0].las_logp);
  CHECK(back[0].nbest[0].score == results[0].nbest[0].score);
  CHECK(back[1].error == "boom");
}

TEST_CASE("decode_corpus writes files, reports WER, survives bad inputs") {
  auto d = make_decode_fixture(6);
  const auto vocab = WordPieceVocab::learn({"x y", "y x"}, 20);
  ModelConfig cfg = d.cfg;
  cfg.vocab_size = vocab.size();
  Prng prng(67);
  const ParameterStore params = init_las_params(cfg, prng);

  std::vector<DecodeInput> inputs(3);
  inputs[0].id = "good-1";
  inputs[0].feats = d.feats;
  inputs[0].ref_text = "x y";
  inputs[1].id = "bad";
  inputs[1].feats = FeatureSequence{};  // empty -> per-utterance error, run continues
  inputs[1].ref_text = "y";
  inputs[2].id = "good-2";
  inputs[2].feats = d.feats;
  inputs[2].ref_text = "y x";

  const auto dir = lastest::test_tmpdir("deccorp");
  BeamConfig bcfg;
  bcfg.beam = 4;
  bcfg.nbest = 2;
  bcfg.lm_weight = 0.0;
  const auto report = decode_corpus(params, cfg, inputs, vocab, bcfg, nullptr, 2, dir / "n.jsonl", dir / "r.json");
  CHECK(report.errors == 1);
  CHECK(report.has_refs);
  CHECK(std::filesystem::exists(dir / "n.jsonl"));
  CHECK(std::filesystem::exists(dir / "r.json"));

  // determinism: re-running produces byte-identical outputs
  decode_corpus(params, cfg, inputs, vocab, bcfg, nullptr, 1, dir / "n2.jsonl", dir / "r2.json");
  CHECK(lastest::files_identical(dir / "n.jsonl", dir / "n2.jsonl"));
  CHECK(lastest::files_identical(dir / "r.json", dir / "r2.json"));
}

#include <benchmark/benchmark.h>

#include "las/decoder.hpp"
#include "las/frontend.hpp"
#include "las/model.hpp"
#include "las/net.hpp"
#include "las/prng.hpp"
#include "las/wordpiece.hpp"

namespace {

las::Tensor random_tensor(std::vector<std::int64_t> shape, las::Prng& prng) {
  las::Tensor t(std::move(shape));
  for (double& v : t.v) v = prng.next_range(-1.0, 1.0);
  return t;
}

void BM_Softmax(benchmark::State& state) {
  las::Prng prng(1);
  const las::Tensor x = random_tensor({state.range(0)}, prng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(las::softmax(x));
  }
}
BENCHMARK(BM_Softmax)->Arg(64)->Arg(512)->Arg(4096);

void BM_Conv1dSame(benchmark::State& state) {
  las::Prng prng(2);
  const las::Tensor sig = random_tensor({state.range(0)}, prng);
  const las::Tensor filters = random_tensor({20, 100}, prng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(las::conv1d_same(sig, filters));
  }
}
BENCHMARK(BM_Conv1dSame)->Arg(32)->Arg(128);

void BM_LstmStepEval(benchmark::State& state) {
  const std::int64_t h = state.range(0);
  las::Prng prng(3);
  las::ParameterStore store;
  las::init_lstm_params(store, "cell", h, h, prng);
  las::EvalCtx ctx{&store};
  const auto w = las::fetch_lstm(ctx, "cell");
  const las::Tensor x = random_tensor({h}, prng);
  const las::Tensor hh = random_tensor({h}, prng);
  const las::Tensor cc = random_tensor({h}, prng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(las::lstm_step(ctx, w, x, hh, cc));
  }
}
BENCHMARK(BM_LstmStepEval)->Arg(32)->Arg(128)->Arg(512);

void BM_ForwardCeTape(benchmark::State& state) {
  las::ModelConfig cfg;
  cfg.feat_dim = 8;
  cfg.listener_layers = 2;
  cfg.listener_width = 32;
  cfg.speller_layers = 1;
  cfg.speller_width = 32;
  cfg.embed_dim = 32;
  cfg.attention_dim = 32;
  cfg.attention_filters = 4;
  cfg.attention_kernel = 5;
  cfg.vocab_size = 20;
  las::Prng prng(4);
  const las::ParameterStore params = las::init_las_params(cfg, prng);
  las::Utterance u;
  u.feats.frames = random_tensor({32, cfg.feat_dim}, prng);
  u.tokens = {4, 5, 6, 7, las::WordPieceVocab::kEos};
  for (auto _ : state) {
    las::Graph g;
    las::Prng sampler(0);
    const auto loss = las::forward_ce(g, params, cfg, {u}, {0.0, 0.01}, sampler);
    g.backward(loss);
    benchmark::DoNotOptimize(g.grad("speller.proj.W"));
  }
}
BENCHMARK(BM_ForwardCeTape);

void BM_BeamSearch(benchmark::State& state) {
  las::ModelConfig cfg;
  cfg.feat_dim = 8;
  cfg.listener_layers = 2;
  cfg.listener_width = 32;
  cfg.speller_layers = 1;
  cfg.speller_width = 32;
  cfg.embed_dim = 32;
  cfg.attention_dim = 32;
  cfg.attention_filters = 4;
  cfg.attention_kernel = 5;
  cfg.vocab_size = 20;
  las::Prng prng(5);
  const las::ParameterStore params = las::init_las_params(cfg, prng);
  las::FeatureSequence feats;
  feats.frames = random_tensor({32, cfg.feat_dim}, prng);
  las::BeamConfig bcfg;
  bcfg.beam = static_cast<int>(state.range(0));
  bcfg.nbest = 1;
  bcfg.lm_weight = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(las::beam_search(params, cfg, feats, bcfg));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(8)->Arg(16);

void BM_FbankOneSecond(benchmark::State& state) {
  las::Prng prng(6);
  las::Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (double& s : w.samples) s = prng.next_range(-0.5, 0.5);
  const las::FrontendConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(las::compute_fbank(w, cfg));
  }
}
BENCHMARK(BM_FbankOneSecond);

void BM_BpeEncodeLine(benchmark::State& state) {
  const std::vector<std::string> corpus{"the quick brown fox jumps over the lazy dog",
                                        "pack my box with five dozen liquor jugs"};
  const auto vocab = las::WordPieceVocab::learn(corpus, 120);
  for (auto _ : state) {
    benchmark::DoNotOptimize(vocab.encode("the quick brown fox packs five jugs"));
  }
}
BENCHMARK(BM_BpeEncodeLine);

}  // namespace

BENCHMARK_MAIN();

#include "las/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "las/errors.hpp"
#include "las/training.hpp"
#include "las/wordpiece.hpp"

namespace las {

namespace {
constexpr const char* kSentStart = "<s>";
constexpr const char* kSentEnd = "</s>";
constexpr const char* kUnkWord = "<unk>";
}  // namespace

std::int32_t NGramLm::word_id(std::string_view w) const {
  auto it = ids_.find(std::string(w));
  return it == ids_.end() ? -1 : it->second;
}

std::int32_t NGramLm::word_or_unk(std::string_view w) const {
  const std::int32_t id = word_id(w);
  return id >= 0 ? id : word_id(kUnkWord);
}

std::int32_t NGramLm::add_word(const std::string& w) {
  auto it = ids_.find(w);
  if (it != ids_.end()) return it->second;
  const std::int32_t id = static_cast<std::int32_t>(vocab_.size());
  vocab_.push_back(w);
  ids_.emplace(w, id);
  return id;
}

void NGramLm::set_order(int order) {
  if (order < 1) throw std::invalid_argument("ngram: order must be >= 1");
  order_ = order;
  grams_.assign(static_cast<std::size_t>(order), {});
}

void NGramLm::put_entry(const std::vector<std::int32_t>& key, Entry e) {
  grams_[key.size() - 1][key] = e;
}

double NGramLm::logprob_ids(const std::vector<std::int32_t>& history, std::int32_t word) const {
  // Truncate the history to order-1 context tokens.
  std::vector<std::int32_t> h = history;
  const std::size_t max_ctx = static_cast<std::size_t>(order_ - 1);
  if (h.size() > max_ctx) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(max_ctx));

  double backoff = 0.0;
  while (true) {
    std::vector<std::int32_t> key = h;
    key.push_back(word);
    const auto& table = grams_[key.size() - 1];
    auto it = table.find(key);
    if (it != table.end()) return backoff + it->second.logp;
    if (h.empty()) {
      // Unseen unigram: fall to <unk>.
      const std::int32_t unk = word_id(kUnkWord);
      auto uit = grams_[0].find({unk});
      return backoff + (uit != grams_[0].end() ? uit->second.logp : kLog10Zero);
    }
    const auto& ctx_table = grams_[h.size() - 1];
    auto cit = ctx_table.find(h);
    if (cit != ctx_table.end() && cit->second.has_bow) backoff += cit->second.bow;
    h.erase(h.begin());
  }
}

double NGramLm::logprob(const std::vector<std::string>& history, std::string_view word) const {
  std::vector<std::int32_t> h;
  h.reserve(history.size());
  for (const std::string& w : history) h.push_back(word_or_unk(w));
  return logprob_ids(h, word_or_unk(word));
}

double NGramLm::sentence_logprob(const std::vector<std::string>& words) const {
  std::vector<std::int32_t> h{word_or_unk(kSentStart)};
  double total = 0.0;
  for (const std::string& w : words) {
    const std::int32_t id = word_or_unk(w);
    total += logprob_ids(h, id);
    h.push_back(id);
  }
  total += logprob_ids(h, word_or_unk(kSentEnd));
  return total;
}

NGramLm NGramLm::load_arpa(const std::filesystem::path& path, double unk_penalty) {
  if (unk_penalty > 0.0) throw std::invalid_argument("load_arpa: unk_penalty must be <= 0 (log10)");
  std::ifstream is(path);
  if (!is) throw IoError("arpa: cannot open: " + path.string());

  NGramLm lm;
  std::string line;
  long line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return true;
  };

  // Header: \data\ then "ngram N=count" lines.
  bool saw_data = false;
  std::vector<std::int64_t> declared;
  while (next_line()) {
    if (line.empty()) continue;
    if (line == "\\data\\") {
      saw_data = true;
      break;
    }
  }
  if (!saw_data) throw ParseError("arpa: missing \\data\\ header", line_no);
  while (next_line()) {
    if (line.empty()) {
      if (!declared.empty()) break;
      continue;
    }
    if (line.rfind("ngram ", 0) == 0) {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("arpa: malformed ngram count", line_no);
      const int n = std::stoi(line.substr(6, eq - 6));
      if (n != static_cast<int>(declared.size()) + 1) throw ParseError("arpa: non-consecutive ngram orders", line_no);
      declared.push_back(std::stoll(line.substr(eq + 1)));
    } else if (line[0] == '\\') {
      break;  // first section header
    } else {
      throw ParseError("arpa: unexpected line in \\data\\ section: " + line, line_no);
    }
  }
  if (declared.empty()) throw ParseError("arpa: no ngram counts declared", line_no);
  lm.set_order(static_cast<int>(declared.size()));
  for (const char* s : {kSentStart, kSentEnd, kUnkWord}) lm.add_word(s);
  const std::int32_t unk = lm.word_id(kUnkWord);

  int current = 0;  // order being read
  auto parse_section_header = [&](const std::string& l) -> int {
    // "\N-grams:"
    if (l.size() < 3 || l[0] != '\\') return -1;
    if (l == "\\end\\") return 0;
    const std::size_t dash = l.find("-grams:");
    if (dash == std::string::npos) return -1;
    return std::stoi(l.substr(1, dash - 1));
  };
  if (line[0] == '\\') {
    current = parse_section_header(line);
    if (current <= 0) throw ParseError("arpa: expected \\1-grams: section", line_no);
  }

  bool done = false;
  while (!done && next_line()) {
    if (line.empty()) continue;
    if (line[0] == '\\') {
      const int n = parse_section_header(line);
      if (n == 0) {
        done = true;
        break;
      }
      if (n < 0 || n > lm.order()) throw ParseError("arpa: unexpected section header: " + line, line_no);
      current = n;
      continue;
    }
    if (current == 0) throw ParseError("arpa: entry before any section header", line_no);
    // logp \t w1 .. wn [\t bow]
    std::istringstream ss(line);
    double logp;
    if (!(ss >> logp)) throw ParseError("arpa: malformed probability: " + line, line_no);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    bool has_bow = toks.size() == static_cast<std::size_t>(current) + 1;
    if (!has_bow && toks.size() != static_cast<std::size_t>(current)) {
      throw ParseError("arpa: wrong field count for " + std::to_string(current) + "-gram", line_no);
    }
    double bow = 0.0;
    if (has_bow) {
      try {
        std::size_t used = 0;
        bow = std::stod(toks.back(), &used);
        if (used != toks.back().size()) throw std::invalid_argument("trailing");
        toks.pop_back();
      } catch (const std::exception&) {
        // Last field is a word after all (bow omitted); only valid if counts fit.
        if (toks.size() != static_cast<std::size_t>(current)) {
          throw ParseError("arpa: malformed backoff weight", line_no);
        }
        has_bow = false;
      }
    }
    std::vector<std::int32_t> key;
    key.reserve(toks.size());
    for (const std::string& w : toks) key.push_back(lm.add_word(w));
    if (current > 1 && std::find(key.begin(), key.end(), unk) != key.end()) {
      continue;  // higher-order entries containing <unk> are dropped
    }
    Entry e{logp, bow, has_bow};
    if (current == 1 && key[0] == unk) e.logp += unk_penalty;
    lm.put_entry(key, e);
  }
  if (!done) throw ParseError("arpa: missing \\end\\", line_no);
  return lm;
}

void NGramLm::write_arpa(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("arpa: cannot open for writing: " + path.string());
  char buf[64];
  auto fmt = [&](double x) -> std::string {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  };
  os << "\\data\\\n";
  for (int n = 1; n <= order_; ++n) {
    os << "ngram " << n << "=" << grams(n).size() << "\n";
  }
  for (int n = 1; n <= order_; ++n) {
    os << "\n\\" << n << "-grams:\n";
    for (const auto& [key, e] : grams(n)) {
      os << fmt(e.logp);
      for (std::size_t i = 0; i < key.size(); ++i) {
        os << (i == 0 ? '\t' : ' ') << vocab_[static_cast<std::size_t>(key[i])];
      }
      if (e.has_bow) os << '\t' << fmt(e.bow);
      os << "\n";
    }
  }
  os << "\n\\end\\\n";
  if (!os) throw IoError("arpa: write failed: " + path.string());
}

NGramLm train_ngram(const std::vector<std::string>& corpus_lines, int order, double discount) {
  if (order < 1) throw std::invalid_argument("train_ngram: order must be >= 1");
  if (discount < 0.0 || discount >= 1.0) throw std::invalid_argument("train_ngram: discount must be in [0, 1)");
  if (corpus_lines.empty()) throw std::invalid_argument("train_ngram: empty corpus");

  NGramLm lm;
  lm.set_order(order);
  lm.add_word(kSentStart);
  lm.add_word(kSentEnd);
  lm.add_word(kUnkWord);

  // Tokenized sentences with boundary tokens (deterministic word ids:
  // sorted insertion after the specials).
  std::vector<std::vector<std::string>> sents;
  std::set<std::string> words;
  bool any = false;
  for (const std::string& line : corpus_lines) {
    std::vector<std::string> w = WordPieceVocab::split_words(WordPieceVocab::normalize(line));
    if (w.empty()) continue;
    any = true;
    for (const std::string& x : w) words.insert(x);
    sents.push_back(std::move(w));
  }
  if (!any) throw std::invalid_argument("train_ngram: corpus contains no words");
  for (const std::string& w : words) lm.add_word(w);

  const std::int32_t bos = lm.word_id(kSentStart);
  const std::int32_t eos = lm.word_id(kSentEnd);

  // counts[n-1]: n-gram -> count; n-grams never end with <s>.
  std::vector<std::map<std::vector<std::int32_t>, std::int64_t>> counts(static_cast<std::size_t>(order));
  for (const auto& sent : sents) {
    std::vector<std::int32_t> ids{bos};
    for (const std::string& w : sent) ids.push_back(lm.word_or_unk(w));
    ids.push_back(eos);
    for (int n = 1; n <= order; ++n) {
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= ids.size(); ++i) {
        const std::int32_t last = ids[i + static_cast<std::size_t>(n) - 1];
        if (last == bos) continue;
        counts[static_cast<std::size_t>(n - 1)]
              [std::vector<std::int32_t>(ids.begin() + static_cast<std::ptrdiff_t>(i),
                                         ids.begin() + static_cast<std::ptrdiff_t>(i + static_cast<std::size_t>(n)))]++;
      }
    }
  }

  // Interpolated absolute discounting, lowest order first. The base
  // distribution is uniform over the predictable vocabulary (everything
  // except <s>), which keeps <unk> strictly positive whenever discount > 0.
  const std::int64_t v_pred = lm.vocab_size() - 1;
  std::map<std::int32_t, double> p_uni;  // id -> prob (linear)
  {
    std::int64_t total = 0;
    std::int64_t n1plus = 0;
    for (const auto& [key, c] : counts[0]) {
      total += c;
      ++n1plus;
    }
    const double base = 1.0 / static_cast<double>(v_pred);
    for (std::int32_t id = 0; id < lm.vocab_size(); ++id) {
      if (id == bos) continue;
      std::int64_t c = 0;
      auto it = counts[0].find({id});
      if (it != counts[0].end()) c = it->second;
      const double p = (std::max(static_cast<double>(c) - discount, 0.0) +
                        discount * static_cast<double>(n1plus) * base) /
                       static_cast<double>(total);
      p_uni[id] = p;
    }
    for (const auto& [id, p] : p_uni) {
      NGramLm::Entry e;
      e.logp = p > 0.0 ? std::log10(p) : kLog10Zero;
      lm.put_entry({id}, e);
    }
    // <s> is context-only: pseudo-zero probability, backoff weight set below.
    NGramLm::Entry bos_e;
    bos_e.logp = kLog10Zero;
    lm.put_entry({bos}, bos_e);
  }

  // p_lower(w | h[1:]) evaluated through the model built so far.
  auto lower_prob = [&](const std::vector<std::int32_t>& h, std::int32_t w) -> double {
    if (h.empty()) return p_uni[w];
    return std::pow(10.0, lm.logprob_ids(h, w));
  };

  for (int n = 2; n <= order; ++n) {
    // Group counts by context.
    std::map<std::vector<std::int32_t>, std::vector<std::pair<std::int32_t, std::int64_t>>> by_ctx;
    for (const auto& [key, c] : counts[static_cast<std::size_t>(n - 1)]) {
      std::vector<std::int32_t> ctx(key.begin(), key.end() - 1);
      by_ctx[ctx].emplace_back(key.back(), c);
    }
    for (const auto& [ctx, items] : by_ctx) {
      std::int64_t total = 0;
      for (const auto& [w, c] : items) total += c;
      const double lambda = discount * static_cast<double>(items.size()) / static_cast<double>(total);
      std::vector<std::int32_t> lower_ctx(ctx.begin() + 1, ctx.end());
      for (const auto& [w, c] : items) {
        const double p = std::max(static_cast<double>(c) - discount, 0.0) / static_cast<double>(total) +
                         lambda * lower_prob(lower_ctx, w);
        std::vector<std::int32_t> key = ctx;
        key.push_back(w);
        NGramLm::Entry e;
        e.logp = p > 0.0 ? std::log10(p) : kLog10Zero;
        lm.put_entry(key, e);
      }
      // Backoff weight lives on the context's (n-1)-gram entry.
      auto& table = const_cast<std::map<std::vector<std::int32_t>, NGramLm::Entry>&>(lm.grams(n - 1));
      auto it = table.find(ctx);
      if (it == table.end()) {
        NGramLm::Entry e;
        e.logp = kLog10Zero;
        it = table.emplace(ctx, e).first;
      }
      it->second.has_bow = true;
      it->second.bow = lambda > 0.0 ? std::log10(lambda) : kLog10Zero;
    }
  }
  return lm;
}

double perplexity(const NGramLm& lm, const std::vector<std::string>& lines) {
  double total_ln = 0.0;
  std::int64_t tokens = 0;
  bool zero = false;
  for (const std::string& line : lines) {
    std::vector<std::string> words = WordPieceVocab::split_words(WordPieceVocab::normalize(line));
    std::vector<std::int32_t> h{lm.word_or_unk(kSentStart)};
    for (const std::string& w : words) {
      const std::int32_t id = lm.word_or_unk(w);
      const double lp = lm.logprob_ids(h, id);
      if (lp <= kLog10Zero + 9.0) zero = true;  // at/below the pseudo-zero floor
      total_ln += lp * kLn10;
      h.push_back(id);
      ++tokens;
    }
    const double lp = lm.logprob_ids(h, lm.word_or_unk(kSentEnd));
    if (lp <= kLog10Zero + 9.0) zero = true;
    total_ln += lp * kLn10;
    ++tokens;
  }
  if (tokens == 0) throw std::invalid_argument("perplexity: no tokens");
  if (zero) return std::numeric_limits<double>::infinity();
  return std::exp(-total_ln / static_cast<double>(tokens));
}

// ---- WordVocab ---------------------------------------------------------------

void WordVocab::add(const std::string& w) {
  if (ids_.count(w)) return;
  ids_.emplace(w, static_cast<std::int32_t>(words_.size()));
  words_.push_back(w);
}

WordVocab WordVocab::build(const std::vector<std::string>& corpus_lines) {
  WordVocab v;
  for (const char* s : {"<pad>", "<s>", "</s>", "<unk>"}) v.add(s);
  std::set<std::string> words;
  for (const std::string& line : corpus_lines) {
    for (const std::string& w : WordPieceVocab::split_words(WordPieceVocab::normalize(line))) words.insert(w);
  }
  for (const std::string& w : words) v.add(w);
  return v;
}

std::int32_t WordVocab::id_or_unk(std::string_view w) const {
  auto it = ids_.find(std::string(w));
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> WordVocab::encode_words(const std::vector<std::string>& words) const {
  std::vector<std::int32_t> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(id_or_unk(w));
  return ids;
}

void WordVocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("word vocab: cannot open for writing: " + path.string());
  os << "WLV1\n";
  for (const std::string& w : words_) os << w << "\n";
  if (!os) throw IoError("word vocab: write failed");
}

WordVocab WordVocab::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("word vocab: cannot open: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "WLV1") throw ParseError("word vocab: missing WLV1 header", 1);
  WordVocab v;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) v.add(line);
  }
  if (v.size() < 4) throw ParseError("word vocab: missing reserved tokens", 1);
  return v;
}

// ---- NeuralLm ----------------------------------------------------------------

namespace {

ParameterStore init_nnlm_params(const NnLmConfig& cfg, Prng& prng) {
  if (cfg.vocab_size < 2) throw std::invalid_argument("nnlm: vocab_size must be >= 2");
  ParameterStore s;
  s.put("nnlm.embed", uniform_init({cfg.vocab_size, cfg.embed_dim}, cfg.embed_dim, prng));
  for (std::int64_t l = 0; l < cfg.layers; ++l) {
    const std::int64_t in = l == 0 ? cfg.embed_dim : cfg.width;
    init_lstm_params(s, "nnlm.layer" + std::to_string(l), in, cfg.width, prng);
  }
  s.put("nnlm.proj.W", uniform_init({cfg.vocab_size, cfg.width}, cfg.width, prng));
  s.put("nnlm.proj.b", Tensor({cfg.vocab_size}));
  return s;
}

template <class Ctx>
struct NnLmWeights {
  typename Ctx::V embed;
  std::vector<LstmWeights<Ctx>> layers;
  typename Ctx::V proj_w, proj_b;
};

template <class Ctx>
NnLmWeights<Ctx> fetch_nnlm(Ctx& ctx, const NnLmConfig& cfg) {
  NnLmWeights<Ctx> w;
  w.embed = ctx.param("nnlm.embed");
  for (std::int64_t l = 0; l < cfg.layers; ++l) w.layers.push_back(fetch_lstm(ctx, "nnlm.layer" + std::to_string(l)));
  w.proj_w = ctx.param("nnlm.proj.W");
  w.proj_b = ctx.param("nnlm.proj.b");
  return w;
}

template <class Ctx, class StateVec>
typename Ctx::V nnlm_step_t(Ctx& ctx, const NnLmWeights<Ctx>& w, StateVec& state, std::int32_t token) {
  auto x = ctx.embed_row(w.embed, token);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto hc = lstm_step(ctx, w.layers[l], x, state[l].first, state[l].second);
    state[l] = hc;
    x = hc.first;
  }
  return ctx.log_softmax(ctx.add(ctx.matvec(w.proj_w, x), w.proj_b));
}

}  // namespace

NeuralLm::NeuralLm(NnLmConfig cfg, Prng& prng) : cfg_(cfg), params_(init_nnlm_params(cfg, prng)) {}

NeuralLm::NeuralLm(NnLmConfig cfg, ParameterStore params) : cfg_(cfg), params_(std::move(params)) {
  Prng scratch(0);
  const ParameterStore expect = init_nnlm_params(cfg, scratch);
  for (const auto& [name, t] : expect) {
    if (!params_.has(name)) throw std::invalid_argument("nnlm checkpoint missing tensor " + name);
    if (params_.get(name).shape != t.shape) {
      throw std::invalid_argument("nnlm tensor " + name + " shape mismatch");
    }
  }
}

NeuralLm::State NeuralLm::zero_state() const {
  State st;
  for (std::int64_t l = 0; l < cfg_.layers; ++l) st.lstm.emplace_back(Tensor({cfg_.width}), Tensor({cfg_.width}));
  return st;
}

std::pair<Tensor, NeuralLm::State> NeuralLm::step(const State& state, std::int32_t token) const {
  if (token < 0 || token >= cfg_.vocab_size) {
    throw std::invalid_argument("nnlm step: token id out of range: " + std::to_string(token));
  }
  EvalCtx ctx{&params_};
  const NnLmWeights<EvalCtx> w = fetch_nnlm(ctx, cfg_);
  State next = state;
  Tensor logp = nnlm_step_t(ctx, w, next.lstm, token);
  return {std::move(logp), std::move(next)};
}

double NeuralLm::sentence_logprob_ln(const std::vector<std::int32_t>& tokens) const {
  State st = zero_state();
  auto [logp, s1] = step(st, WordVocab::kEos);
  st = std::move(s1);
  double total = 0.0;
  for (std::int32_t tok : tokens) {
    total += logp.v[static_cast<std::size_t>(tok)];
    auto [next_logp, next_st] = step(st, tok);
    logp = std::move(next_logp);
    st = std::move(next_st);
  }
  total += logp.v[static_cast<std::size_t>(WordVocab::kEos)];
  return total;
}

double NeuralLm::train(const std::vector<std::vector<std::int32_t>>& sequences, const NnLmTrainOptions& opt) {
  if (sequences.empty()) throw std::invalid_argument("nnlm train: no sequences");
  Prng prng(opt.seed);
  AdamState adam;
  adam.lr = opt.lr;
  double last_loss = 0.0;
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    prng.shuffle(order);
    double loss_sum = 0.0;
    std::int64_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      Graph g;
      TapeCtx ctx{&g, &params_};
      const NnLmWeights<TapeCtx> w = fetch_nnlm(ctx, cfg_);
      Graph::NodeId total = ctx.constant(Tensor::scalar(0.0));
      std::int64_t batch_steps = 0;
      for (std::size_t bi = start; bi < std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size)); ++bi) {
        const std::vector<std::int32_t>& seq = sequences[order[bi]];
        std::vector<std::pair<Graph::NodeId, Graph::NodeId>> state;
        for (std::int64_t l = 0; l < cfg_.layers; ++l) {
          state.emplace_back(ctx.constant(Tensor({cfg_.width})), ctx.constant(Tensor({cfg_.width})));
        }
        std::int32_t prev = WordVocab::kEos;  // start protocol
        for (std::size_t i = 0; i <= seq.size(); ++i) {
          const std::int32_t target = i < seq.size() ? seq[i] : WordVocab::kEos;
          auto logp = nnlm_step_t(ctx, w, state, prev);
          total = ctx.add(total, ctx.scale(ctx.slice(logp, target, 1), -1.0));
          prev = target;
          ++batch_steps;
        }
      }
      auto loss = ctx.scale(total, 1.0 / static_cast<double>(batch_steps));
      g.backward(loss);
      auto grads = g.param_grads();
      clip_global_norm(grads, opt.grad_clip);
      adam_step(params_, grads, adam);
      loss_sum += g.value(loss).v[0] * static_cast<double>(batch_steps);
      steps += batch_steps;
    }
    last_loss = loss_sum / static_cast<double>(steps);
  }
  return last_loss;
}

double perplexity(const NeuralLm& lm, const std::vector<std::vector<std::int32_t>>& token_lines) {
  double total_ln = 0.0;
  std::int64_t tokens = 0;
  for (const auto& seq : token_lines) {
    total_ln += lm.sentence_logprob_ln(seq);
    tokens += static_cast<std::int64_t>(seq.size()) + 1;  // + </s>
  }
  if (tokens == 0) throw std::invalid_argument("perplexity: no tokens");
  return std::exp(-total_ln / static_cast<double>(tokens));
}

}  // namespace las

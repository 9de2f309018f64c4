#include <doctest.h>

#include <map>

#include "las/errors.hpp"
#include "las/wordpiece.hpp"
#include "testutil.hpp"

using namespace las;

namespace {

// Independent pair-count oracle: most frequent adjacent pair over the
// marker-fused symbol sequences, ties to the lexicographically smallest.
std::pair<std::string, std::string> first_merge_oracle(const std::vector<std::string>& lines) {
  std::map<std::string, std::int64_t> word_freq;
  for (const auto& line : lines) {
    for (const auto& w : WordPieceVocab::split_words(WordPieceVocab::normalize(line))) ++word_freq[w];
  }
  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  for (const auto& [w, f] : word_freq) {
    const auto syms = WordPieceVocab::word_symbols(w);
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;
  }
  std::pair<std::string, std::string> best;
  std::int64_t best_count = 0;
  for (const auto& [p, c] : counts) {
    if (c > best_count) {
      best = p;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("bpe first merge matches the pair-count oracle") {
  {
    const std::vector<std::string> corpus{"ab ab ab"};
    const auto v = WordPieceVocab::learn(corpus, /*charset 4 + specials 4 +*/ 9);
    REQUIRE(v.merges().size() == 1);
    CHECK(v.merges()[0].first == std::string(WordPieceVocab::marker()) + "a");
    CHECK(v.merges()[0].second == "b");
    CHECK(v.merges()[0] == first_merge_oracle(corpus));
  }
  {
    const std::vector<std::string> corpus{"aaab aaab"};
    const auto v = WordPieceVocab::learn(corpus, 9);
    REQUIRE(!v.merges().empty());
    CHECK(v.merges()[0].first == "a");
    CHECK(v.merges()[0].second == "a");
    CHECK(v.merges()[0] == first_merge_oracle(corpus));
  }
}

TEST_CASE("bpe zero merge budget keeps characters plus specials") {
  const std::vector<std::string> corpus{"ab ba"};
  // charset: a, b, ▁a, ▁b -> 4; + 4 specials = 8
  const auto v = WordPieceVocab::learn(corpus, 8);
  CHECK(v.size() == 8);
  CHECK(v.merges().empty());
  CHECK(v.piece(0) == "<pad>");
  CHECK(v.piece(1) == "<s>");
  CHECK(v.piece(2) == "</s>");
  CHECK(v.piece(3) == "<unk>");
  CHECK_THROWS_AS(WordPieceVocab::learn(corpus, 7), std::invalid_argument);
  CHECK_THROWS_AS(WordPieceVocab::learn({}, 100), std::invalid_argument);
}

TEST_CASE("encode applies merges in order and unknowns map to <unk>") {
  const std::vector<std::string> corpus{"ab ab ab"};
  const auto v = WordPieceVocab::learn(corpus, 9);
  const auto ids = v.encode("ab");
  REQUIRE(ids.size() == 1);
  CHECK(v.piece(ids[0]) == std::string(WordPieceVocab::marker()) + "ab");

  const auto unk = v.encode("q");
  REQUIRE(unk.size() == 1);
  CHECK(unk[0] == WordPieceVocab::kUnk);
}

TEST_CASE("decode merges pieces into words") {
  const std::vector<std::string> corpus{"the cat", "th e"};
  const auto v = WordPieceVocab::learn(corpus, 40);
  CHECK(v.decode(v.encode("the cat")) == "the cat");
  CHECK(v.decode({}) == "");

  // intra-word concatenation: pieces "▁th" + "e" -> "the"
  const std::int32_t th = v.piece_id(std::string(WordPieceVocab::marker()) + "th");
  if (th >= 0 && v.piece_id("e") >= 0) {
    CHECK(v.decode({th, v.piece_id("e")}) == "the");
  }
  CHECK_THROWS_AS(v.decode({static_cast<std::int32_t>(v.size())}), std::invalid_argument);
}

TEST_CASE("round trip on a many-line corpus") {
  // ~1k lines over a fixed word list
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};
  Prng prng(77);
  std::vector<std::string> corpus;
  for (int i = 0; i < 1000; ++i) {
    std::string line;
    const int n = 1 + static_cast<int>(prng.next_below(6));
    for (int k = 0; k < n; ++k) {
      if (k) line += ' ';
      line += words[prng.next_below(words.size())];
    }
    corpus.push_back(line);
  }
  const auto v = WordPieceVocab::learn(corpus, 64);
  for (const auto& line : corpus) {
    CHECK(v.decode(v.encode(line)) == line);
  }
}

TEST_CASE("encoding length bound and determinism") {
  const std::vector<std::string> corpus{"abc abd", "bcd cda", "abc bcd"};
  const auto v1 = WordPieceVocab::learn(corpus, 24);
  const auto v2 = WordPieceVocab::learn(corpus, 24);
  CHECK(v1.merges() == v2.merges());
  for (const auto& line : corpus) {
    const auto ids = v1.encode(line);
    const auto ws = WordPieceVocab::split_words(line);
    std::size_t chars = 0;
    for (const auto& w : ws) chars += w.size();
    CHECK(ids.size() <= chars + ws.size());
    CHECK(v1.encode(line) == v2.encode(line));
  }
}

TEST_CASE("merges replayed in order reproduce learned pieces") {
  const std::vector<std::string> corpus{"abab abab baba", "abab baba"};
  const auto v = WordPieceVocab::learn(corpus, 20);
  for (const auto& [a, b] : v.merges()) {
    CHECK(v.piece_id(a) >= 0);
    CHECK(v.piece_id(b) >= 0);
    CHECK(v.piece_id(a + b) >= 0);
  }
}

TEST_CASE("vocab save/load round trip") {
  const auto dir = lastest::test_tmpdir("wpv");
  const std::vector<std::string> corpus{"hello world", "hello there"};
  const auto v = WordPieceVocab::learn(corpus, 40);
  v.save(dir / "v.wpv");
  const auto w = WordPieceVocab::load(dir / "v.wpv");
  CHECK(w.size() == v.size());
  CHECK(w.merges() == v.merges());
  for (std::int32_t i = 0; i < v.size(); ++i) CHECK(w.piece(i) == v.piece(i));
  CHECK(w.encode("hello world") == v.encode("hello world"));
  w.save(dir / "w.wpv");
  CHECK(lastest::files_identical(dir / "v.wpv", dir / "w.wpv"));

  CHECK_THROWS_AS(WordPieceVocab::load(dir / "none.wpv"), IoError);
}

TEST_CASE("normalization lowercases before segmentation") {
  const std::vector<std::string> corpus{"AB ab"};
  const auto v = WordPieceVocab::learn(corpus, 9);
  CHECK(v.encode("AB") == v.encode("ab"));
  CHECK(v.decode(v.encode("AB")) == "ab");
}

#include "las/wordpiece.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "las/errors.hpp"

namespace las {

namespace {
constexpr const char* kMarker = "\xe2\x96\x81";  // U+2581 LOWER ONE EIGHTH BLOCK
const char* kSpecials[4] = {"<pad>", "<s>", "</s>", "<unk>"};
}  // namespace

const char* WordPieceVocab::marker() { return kMarker; }

std::string WordPieceVocab::normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> WordPieceVocab::split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

std::vector<std::string> WordPieceVocab::word_symbols(std::string_view word) {
  std::vector<std::string> symbols;
  std::size_t i = 0;
  while (i < word.size()) {
    const unsigned char b = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((b & 0xE0) == 0xC0) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;  // malformed tail: take the byte
    symbols.emplace_back(word.substr(i, len));
    i += len;
  }
  if (!symbols.empty()) symbols[0] = std::string(kMarker) + symbols[0];
  return symbols;
}

void WordPieceVocab::add_piece(const std::string& p) {
  if (ids_.count(p)) return;
  ids_.emplace(p, static_cast<std::int32_t>(pieces_.size()));
  pieces_.push_back(p);
}

WordPieceVocab WordPieceVocab::learn(const std::vector<std::string>& corpus_lines, std::int64_t target_size) {
  if (corpus_lines.empty()) throw std::invalid_argument("bpe: empty corpus");

  // Word frequency table over normalized text.
  std::map<std::string, std::int64_t> word_freq;
  for (const std::string& line : corpus_lines) {
    for (const std::string& w : split_words(normalize(line))) ++word_freq[w];
  }
  if (word_freq.empty()) throw std::invalid_argument("bpe: corpus contains no words");

  // Base symbols: every observed character, both marked and unmarked.
  std::set<std::string> charset;
  for (const auto& [w, f] : word_freq) {
    bool first = true;
    for (const std::string& sym : word_symbols(w)) {
      if (first) {
        charset.insert(sym);  // marked form
        charset.insert(sym.substr(std::string(kMarker).size()));
        first = false;
      } else {
        charset.insert(sym);
      }
    }
  }

  WordPieceVocab v;
  for (const char* s : kSpecials) v.add_piece(s);
  for (const std::string& c : charset) v.add_piece(c);

  if (target_size < v.size()) {
    throw std::invalid_argument("bpe: target_size " + std::to_string(target_size) +
                                " below charset+specials " + std::to_string(v.size()));
  }

  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) words.emplace_back(word_symbols(w), f);

  while (v.size() < target_size) {
    // Pair counts; std::map iteration gives the lexicographically smallest
    // pair first among count ties.
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    for (const auto& [syms, f] : words) {
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
    if (best_count < 2) break;

    const std::string merged = best.first + best.second;
    for (auto& [syms, f] : words) {
      std::vector<std::string> out;
      out.reserve(syms.size());
      std::size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(out);
    }
    v.merges_.push_back(best);
    v.add_piece(merged);
  }
  return v;
}

std::vector<std::string> WordPieceVocab::apply_merges(std::vector<std::string> symbols) const {
  for (const auto& [a, b] : merges_) {
    if (symbols.size() < 2) break;
    std::vector<std::string> out;
    out.reserve(symbols.size());
    std::size_t i = 0;
    while (i < symbols.size()) {
      if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
        out.push_back(a + b);
        i += 2;
      } else {
        out.push_back(symbols[i]);
        ++i;
      }
    }
    symbols = std::move(out);
  }
  return symbols;
}

std::vector<std::int32_t> WordPieceVocab::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  for (const std::string& w : split_words(normalize(text))) {
    for (const std::string& sym : apply_merges(word_symbols(w))) {
      const std::int32_t id = piece_id(sym);
      ids.push_back(id < 0 ? kUnk : id);
    }
  }
  return ids;
}

std::string WordPieceVocab::decode(const std::vector<std::int32_t>& ids) const {
  std::string joined;
  for (std::int32_t id : ids) {
    if (id < 0 || id >= size()) throw std::invalid_argument("decode: id out of range: " + std::to_string(id));
    if (id <= kUnk) continue;  // specials dropped
    joined += pieces_[static_cast<std::size_t>(id)];
  }
  // Split on the marker, join with single spaces.
  std::string out;
  const std::string marker(kMarker);
  std::size_t pos = 0;
  bool first = true;
  while (pos < joined.size()) {
    std::size_t next = joined.find(marker, pos + 1);
    std::string piece = joined.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (piece.rfind(marker, 0) == 0) piece = piece.substr(marker.size());
    if (!piece.empty()) {
      if (!first) out += ' ';
      out += piece;
      first = false;
    }
    if (next == std::string::npos) break;
    pos = next;
  }
  return out;
}

std::vector<std::string> WordPieceVocab::decode_words(const std::vector<std::int32_t>& ids) const {
  return split_words(decode(ids));
}

const std::string& WordPieceVocab::piece(std::int32_t id) const {
  if (id < 0 || id >= size()) throw std::invalid_argument("piece: id out of range: " + std::to_string(id));
  return pieces_[static_cast<std::size_t>(id)];
}

std::int32_t WordPieceVocab::piece_id(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

void WordPieceVocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("vocab: cannot open for writing: " + path.string());
  os << "WPV1\n";
  for (const std::string& p : pieces_) os << p << "\n";
  os << "#MERGES\n";
  for (const auto& [a, b] : merges_) os << a << " " << b << "\n";
  if (!os) throw IoError("vocab: write failed: " + path.string());
}

WordPieceVocab WordPieceVocab::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("vocab: cannot open: " + path.string());
  std::string line;
  long line_no = 1;
  if (!std::getline(is, line) || line != "WPV1") throw ParseError("vocab: missing WPV1 header", line_no);
  WordPieceVocab v;
  bool in_merges = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!in_merges) {
      if (line == "#MERGES") {
        in_merges = true;
        continue;
      }
      if (line.empty()) continue;
      if (v.ids_.count(line)) throw ParseError("vocab: duplicate piece '" + line + "'", line_no);
      v.add_piece(line);
    } else {
      if (line.empty()) continue;
      const std::size_t sp = line.find(' ');
      if (sp == std::string::npos) throw ParseError("vocab: malformed merge line", line_no);
      v.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
  }
  if (v.size() < 4) throw ParseError("vocab: fewer than 4 reserved pieces", line_no);
  for (int i = 0; i < 4; ++i) {
    if (v.pieces_[static_cast<std::size_t>(i)] != kSpecials[i]) {
      throw ParseError(std::string("vocab: reserved piece mismatch at id ") + std::to_string(i), i + 2);
    }
  }
  return v;
}

}  // namespace las

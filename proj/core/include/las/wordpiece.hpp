#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace las {

// BPE word-piece inventory. Words get the "▁" word-initial marker fused
// onto their first character before splitting; decoding concatenates
// pieces and splits on the marker again. Ids 0..3 are reserved specials.
// Immutable once learned/loaded; encode/decode are safe to call in
// parallel.
class WordPieceVocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kUnk = 3;
  static const char* marker();  // "▁"

  // Greedy most-frequent-pair merges until the vocabulary reaches
  // target_size or no pair occurs at least twice. Frequency ties break on
  // the lexicographically smallest pair, so learning is deterministic.
  static WordPieceVocab learn(const std::vector<std::string>& corpus_lines, std::int64_t target_size);

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(const std::vector<std::int32_t>& ids) const;
  std::vector<std::string> decode_words(const std::vector<std::int32_t>& ids) const;

  std::int64_t size() const { return static_cast<std::int64_t>(pieces_.size()); }
  const std::string& piece(std::int32_t id) const;
  std::int32_t piece_id(std::string_view piece) const;  // -1 when absent
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  void save(const std::filesystem::path& path) const;
  static WordPieceVocab load(const std::filesystem::path& path);

  // Lowercase normalization applied before any segmentation.
  static std::string normalize(std::string_view text);
  static std::vector<std::string> split_words(std::string_view text);
  // UTF-8 code points; the first carries the word-initial marker.
  static std::vector<std::string> word_symbols(std::string_view word);

 private:
  std::vector<std::string> pieces_;                       // id -> piece
  std::unordered_map<std::string, std::int32_t> ids_;     // piece -> id
  std::vector<std::pair<std::string, std::string>> merges_;

  void add_piece(const std::string& p);
  std::vector<std::string> apply_merges(std::vector<std::string> symbols) const;
};

}  // namespace las

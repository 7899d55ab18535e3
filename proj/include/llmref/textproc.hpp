#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace llmref::textproc {

enum class Granularity { kWord, kChar, kSubword };

struct TokenSequence {
  std::vector<std::string> tokens;
  Granularity granularity = Granularity::kWord;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

// Word-marker used by the subword tokenizer (U+2581).
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";

using Ngram = std::vector<std::string>;

struct NgramCounts {
  std::size_t order = 1;
  std::map<Ngram, std::size_t> counts;

  std::size_t total() const noexcept;
  std::size_t count(const Ngram& gram) const noexcept;
};

class SubwordVocab {
 public:
  SubwordVocab(std::unordered_set<std::string> entries, std::string unk_piece = "<unk>");

  // One piece per line; an optional first line "#unk=<piece>" overrides the unk piece.
  static SubwordVocab load(const std::filesystem::path& path);

  bool contains(std::string_view piece) const;
  const std::string& unk_piece() const noexcept { return unk_piece_; }
  std::size_t max_piece_length() const noexcept { return max_piece_cps_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::unordered_set<std::string> entries_;
  std::string unk_piece_;
  std::size_t max_piece_cps_ = 0;
};

// NFC, whitespace split, then leading/trailing punctuation peeled off as
// standalone tokens (mteval-13a style). Case is preserved.
TokenSequence tokenize_words(std::string_view text);

// One token per Unicode scalar value, whitespace removed.
TokenSequence tokenize_chars(std::string_view text);

// Greedy longest match against `vocab`. Each word is prefixed with the
// U+2581 marker; if no marked piece matches at a word start the marker is
// dropped and matching continues on the bare characters. Characters with no
// match at all become the vocab's unk piece.
TokenSequence tokenize_subwords(std::string_view text, const SubwordVocab& vocab);

// Plain whitespace split, for pre-tokenized input.
TokenSequence split_pretokenized(std::string_view text, Granularity granularity = Granularity::kWord);

NgramCounts extract_ngrams(const TokenSequence& seq, std::size_t n);

}  // namespace llmref::textproc

#include "llmref/textproc.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "llmref/error.hpp"
#include "llmref/unicode.hpp"

namespace llmref::textproc {
namespace {

std::vector<std::vector<char32_t>> split_whitespace(const std::vector<char32_t>& cps) {
  std::vector<std::vector<char32_t>> words;
  std::vector<char32_t> current;
  for (char32_t cp : cps) {
    if (unicode::is_whitespace(cp)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::size_t count_code_points(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

std::size_t NgramCounts::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0},
                         [](std::size_t acc, const auto& kv) { return acc + kv.second; });
}

std::size_t NgramCounts::count(const Ngram& gram) const noexcept {
  const auto it = counts.find(gram);
  return it == counts.end() ? 0 : it->second;
}

SubwordVocab::SubwordVocab(std::unordered_set<std::string> entries, std::string unk_piece)
    : entries_(std::move(entries)), unk_piece_(std::move(unk_piece)) {
  entries_.erase(std::string{});
  if (entries_.empty()) throw InvalidArgument("subword vocabulary is empty");
  if (unk_piece_.empty()) throw InvalidArgument("unk piece must be non-empty");
  for (const auto& e : entries_) max_piece_cps_ = std::max(max_piece_cps_, count_code_points(e));
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string(), 0, "cannot open vocabulary file");
  std::unordered_set<std::string> entries;
  std::string unk = "<unk>";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("#unk=", 0) == 0) {
      unk = line.substr(5);
      if (unk.empty()) throw LoadError(path.string(), lineno, "empty unk piece in header");
      continue;
    }
    if (line.empty()) continue;
    entries.insert(line);
  }
  if (entries.empty()) throw LoadError(path.string(), lineno, "vocabulary has no entries");
  return SubwordVocab(std::move(entries), std::move(unk));
}

bool SubwordVocab::contains(std::string_view piece) const {
  return entries_.find(std::string(piece)) != entries_.end();
}

TokenSequence tokenize_words(std::string_view text) {
  TokenSequence seq{{}, Granularity::kWord};
  const auto cps = unicode::decode(unicode::nfc(text));
  for (const auto& word : split_whitespace(cps)) {
    std::size_t begin = 0;
    std::size_t end = word.size();
    while (begin < end && unicode::is_punctuation(word[begin])) {
      seq.tokens.push_back(unicode::encode(word[begin]));
      ++begin;
    }
    std::vector<std::string> trailing;
    while (end > begin && unicode::is_punctuation(word[end - 1])) {
      trailing.push_back(unicode::encode(word[end - 1]));
      --end;
    }
    if (begin < end) {
      seq.tokens.push_back(
          unicode::encode(std::vector<char32_t>(word.begin() + static_cast<std::ptrdiff_t>(begin),
                                                word.begin() + static_cast<std::ptrdiff_t>(end))));
    }
    seq.tokens.insert(seq.tokens.end(), trailing.rbegin(), trailing.rend());
  }
  return seq;
}

TokenSequence tokenize_chars(std::string_view text) {
  TokenSequence seq{{}, Granularity::kChar};
  for (char32_t cp : unicode::decode(unicode::nfc(text))) {
    if (!unicode::is_whitespace(cp)) seq.tokens.push_back(unicode::encode(cp));
  }
  return seq;
}

TokenSequence tokenize_subwords(std::string_view text, const SubwordVocab& vocab) {
  TokenSequence seq{{}, Granularity::kSubword};
  const std::string marker(kWordMarker);
  const std::size_t max_len = vocab.max_piece_length();
  for (const auto& word : split_whitespace(unicode::decode(unicode::nfc(text)))) {
    std::vector<std::string> chars;
    chars.reserve(word.size());
    for (char32_t cp : word) chars.push_back(unicode::encode(cp));

    auto piece = [&](std::size_t pos, std::size_t len) {
      std::string s;
      for (std::size_t k = pos; k < pos + len; ++k) s += chars[k];
      return s;
    };

    std::size_t pos = 0;
    if (max_len >= 2) {
      for (std::size_t len = std::min(max_len - 1, chars.size()); len >= 1; --len) {
        std::string candidate = marker + piece(0, len);
        if (vocab.contains(candidate)) {
          seq.tokens.push_back(std::move(candidate));
          pos = len;
          break;
        }
      }
    }
    while (pos < chars.size()) {
      bool matched = false;
      for (std::size_t len = std::min(max_len, chars.size() - pos); len >= 1; --len) {
        std::string candidate = piece(pos, len);
        if (vocab.contains(candidate)) {
          seq.tokens.push_back(std::move(candidate));
          pos += len;
          matched = true;
          break;
        }
      }
      if (!matched) {
        seq.tokens.push_back(vocab.unk_piece());
        ++pos;
      }
    }
  }
  return seq;
}

TokenSequence split_pretokenized(std::string_view text, Granularity granularity) {
  TokenSequence seq{{}, granularity};
  for (const auto& word : split_whitespace(unicode::decode(text))) {
    seq.tokens.push_back(unicode::encode(word));
  }
  return seq;
}

NgramCounts extract_ngrams(const TokenSequence& seq, std::size_t n) {
  if (n == 0) throw InvalidArgument("n-gram order must be >= 1");
  NgramCounts out{n, {}};
  const auto& t = seq.tokens;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++out.counts[Ngram(t.begin() + static_cast<std::ptrdiff_t>(i),
                       t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace llmref::textproc

#include "llmref/diversity.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "llmref/error.hpp"

namespace llmref::diversity {

std::vector<double> self_bleu(std::span<const TokenSequence> candidates, const BleuConfig& cfg) {
  if (candidates.size() < 2) throw InvalidArgument("Self-BLEU needs at least two candidates");
  std::vector<double> scores;
  scores.reserve(candidates.size());
  std::vector<TokenSequence> others;
  others.reserve(candidates.size() - 1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (j != i) others.push_back(candidates[j]);
    }
    scores.push_back(metrics::bleu_sentence(candidates[i], others, cfg).value);
  }
  return scores;
}

Selection select_diverse(const CandidateSet& set, double threshold, const BleuConfig& cfg) {
  if (set.candidates.empty()) throw InvalidArgument("candidate set '" + set.segment_id + "' is empty");
  Selection out;
  out.selected.segment_id = set.segment_id;
  out.selected.provenance = set.provenance;
  if (set.candidates.size() == 1) {
    out.selected.candidates = set.candidates;
    out.kept = {0};
    return out;
  }

  std::vector<TokenSequence> tokenized;
  tokenized.reserve(set.candidates.size());
  for (const auto& c : set.candidates) tokenized.push_back(textproc::tokenize_words(c));
  out.self_bleu = self_bleu(tokenized, cfg);

  for (std::size_t i = 0; i < out.self_bleu.size(); ++i) {
    if (out.self_bleu[i] < threshold) out.kept.push_back(i);
  }
  if (out.kept.empty()) {
    const auto it = std::min_element(out.self_bleu.begin(), out.self_bleu.end());
    out.kept.push_back(static_cast<std::size_t>(it - out.self_bleu.begin()));
    out.fallback = true;
  }
  for (std::size_t i : out.kept) out.selected.candidates.push_back(set.candidates[i]);
  return out;
}

double distinct_n(std::span<const TokenSequence> corpus, std::size_t n) {
  if (n == 0) throw InvalidArgument("DistinctN order must be >= 1");
  std::set<textproc::Ngram> distinct;
  std::size_t total = 0;
  for (const auto& seq : corpus) {
    for (const auto& [gram, count] : textproc::extract_ngrams(seq, n).counts) {
      distinct.insert(gram);
      total += count;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

std::size_t unique_tokens(std::span<const TokenSequence> corpus) {
  std::unordered_set<std::string> vocab;
  for (const auto& seq : corpus) vocab.insert(seq.tokens.begin(), seq.tokens.end());
  return vocab.size();
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kLlm:
      return "llm";
    case Provenance::kGold:
      return "gold";
    case Provenance::kExternal:
      return "external";
  }
  return "llm";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "llm") return Provenance::kLlm;
  if (s == "gold") return Provenance::kGold;
  if (s == "external") return Provenance::kExternal;
  throw InvalidArgument("unknown provenance '" + s + "'");
}

}  // namespace llmref::diversity

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "llmref/textproc.hpp"

namespace llmref::metrics {

using textproc::TokenSequence;

enum class Smoothing { kNone, kExp };
enum class RefLength { kClosest, kShortest };

struct BleuConfig {
  std::size_t max_order = 4;
  Smoothing smoothing = Smoothing::kExp;
  RefLength effective_ref_length = RefLength::kClosest;

  void validate() const;
};

// Scores live on a 0-100 scale; per_order entries are fractions in [0, 1].
struct MetricScore {
  double value = 0.0;
  std::vector<double> per_order;
  std::map<std::string, double> detail;
};

// Sufficient statistics for corpus BLEU. Summing is associative and
// commutative, so segments can be reduced in any order.
struct CorpusStats {
  std::vector<std::size_t> matches;
  std::vector<std::size_t> totals;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  explicit CorpusStats(std::size_t max_order = 4) : matches(max_order, 0), totals(max_order, 0) {}
  CorpusStats& operator+=(const CorpusStats& other);
};

struct TokenizedPair {
  TokenSequence hyp;
  std::vector<TokenSequence> refs;
};

struct TextPair {
  std::string hyp;
  std::vector<std::string> refs;
};

// Multi-reference clipped n-gram statistics of one segment.
CorpusStats bleu_stats(const TokenSequence& hyp, std::span<const TokenSequence> refs,
                       const BleuConfig& cfg);
MetricScore bleu_from_stats(const CorpusStats& stats, const BleuConfig& cfg);

MetricScore bleu_sentence(const TokenSequence& hyp, std::span<const TokenSequence> refs,
                          const BleuConfig& cfg = {});
MetricScore bleu_corpus(std::span<const TokenizedPair> pairs, const BleuConfig& cfg = {});

MetricScore spbleu_corpus(std::span<const TextPair> pairs, const textproc::SubwordVocab& vocab,
                          const BleuConfig& cfg = {});
// Text is already segmented into subwords; tokens are split on whitespace.
MetricScore spbleu_corpus_pretokenized(std::span<const TextPair> pairs, const BleuConfig& cfg = {});

struct ChrfConfig {
  std::size_t n_max = 6;
  double beta = 2.0;

  void validate() const;
};

struct ChrfStats {
  std::vector<std::size_t> hyp_total;
  std::vector<std::size_t> ref_total;
  std::vector<std::size_t> matches;

  explicit ChrfStats(std::size_t n_max = 6) : hyp_total(n_max, 0), ref_total(n_max, 0), matches(n_max, 0) {}
  ChrfStats& operator+=(const ChrfStats& other);
};

// Character n-gram statistics against a single reference (inputs are
// char-granularity sequences).
ChrfStats chrf_stats(const TokenSequence& hyp_chars, const TokenSequence& ref_chars,
                     const ChrfConfig& cfg);
// Statistics of the reference that maximizes segment chrF (ties: earliest).
ChrfStats chrf_best_ref_stats(const TokenSequence& hyp_chars, std::span<const TokenSequence> refs_chars,
                              const ChrfConfig& cfg);
MetricScore chrf_from_stats(const ChrfStats& stats, const ChrfConfig& cfg);

MetricScore chrf_sentence(const std::string& hyp, std::span<const std::string> refs,
                          const ChrfConfig& cfg = {});
MetricScore chrf_corpus(std::span<const TextPair> pairs, const ChrfConfig& cfg = {});

MetricScore rouge_n(const TokenSequence& hyp, std::span<const TokenSequence> refs, std::size_t n);
MetricScore rouge_l(const TokenSequence& hyp, std::span<const TokenSequence> refs);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace llmref::metrics

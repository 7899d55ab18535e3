#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "llmref/corpus_io.hpp"
#include "llmref/ngram_metrics.hpp"
#include "llmref/score_combine.hpp"
#include "llmref/textproc.hpp"

namespace llmref::cli {

inline constexpr const char* kMetricBleu = "bleu";
inline constexpr const char* kMetricSpBleu = "spbleu";
inline constexpr const char* kMetricChrf = "chrf";
inline constexpr const char* kMetricRouge1 = "rouge1";
inline constexpr const char* kMetricRouge2 = "rouge2";
inline constexpr const char* kMetricRougeL = "rougeL";

struct ScoreOptions {
  std::vector<std::string> metrics{kMetricBleu};
  metrics::BleuConfig bleu;
  metrics::ChrfConfig chrf;
  // Unset: segment-level rows use the corpus' ref_selection; system-level
  // rows use generated references only (gold when a segment has none, unless
  // the corpus is restricted to generated references).
  std::optional<corpus::RefSelection> refs;
  std::optional<std::size_t> max_refs;
  std::optional<textproc::SubwordVocab> vocab;  // required for spbleu unless pretokenized
  bool lowercase = false;
  bool segment_level = true;
  bool per_reference_matrix = true;
  std::size_t jobs = 1;
};

struct ScoreResult {
  std::vector<corpus::MetricScoreRow> rows;                  // segment and system level
  std::map<std::string, combine::ScoreMatrix> matrices;      // per (hypothesis, single reference)
};

ScoreResult score_corpus(const corpus::EvalCorpus& corpus, const ScoreOptions& options);

// System-level scores for every reference count in [from, to].
std::vector<corpus::MetricScoreRow> sweep_reference_counts(const corpus::EvalCorpus& corpus,
                                                           const ScoreOptions& options, std::size_t from,
                                                           std::size_t to);

// Parses "a..b" (or a single "k").
std::pair<std::size_t, std::size_t> parse_range(const std::string& text);

// Entry point shared by the executable and the tests. Returns the exit status:
// 0 success, 1 input/usage error, 2 aborted generation (transport/auth).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace llmref::cli

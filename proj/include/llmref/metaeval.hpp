#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmref/score_combine.hpp"

namespace llmref::metaeval {

using combine::RowKey;

struct HumanJudgment {
  std::string system;
  std::optional<std::string> segment;    // absent: system-level judgment
  std::optional<std::string> dimension;  // e.g. "coherence"
  double score = 0.0;
};

struct AccuracyResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t pairs_used = 0;
};

// Fraction of system pairs whose metric delta has the same sign as the
// human delta. Pairs tied under the human scores are skipped; pairs tied
// under the metric count as wrong.
AccuracyResult pairwise_accuracy(const std::map<std::string, double>& metric_scores,
                                 const std::map<std::string, double>& human_scores);

// Unnormalized counts, so accuracy can be pooled over language pairs.
AccuracyResult pairwise_agreement_counts(const std::map<std::string, double>& metric_scores,
                                         const std::map<std::string, double>& human_scores);

double pearson(std::span<const double> x, std::span<const double> y);

// Tau-b. O(n log n) (Knight's merge-sort method).
double kendall_tau(std::span<const double> x, std::span<const double> y);

// Pearson correlation of mid-ranks.
double spearman(std::span<const double> x, std::span<const double> y);

// Average (1-based) ranks with ties sharing their mean rank.
std::vector<double> mid_ranks(std::span<const double> values);

double segment_kendall(const std::map<RowKey, double>& metric, const std::map<RowKey, double>& human);

struct LeakageGapReport {
  std::string system_a;
  std::string system_b;
  double delta_single = 0.0;
  double delta_multi = 0.0;
  double shrinkage = 0.0;            // delta_multi - delta_single
  std::optional<double> ratio;       // delta_multi / delta_single
};

LeakageGapReport leakage_gap(const std::map<std::string, double>& scores_single,
                             const std::map<std::string, double>& scores_multi, const std::string& a,
                             const std::string& b);

struct LanguagePairReport {
  std::string name;
  std::optional<double> pearson;
  std::optional<double> kendall;  // segment-level tau-b, pooled over (system, segment)
  std::optional<double> pairwise_accuracy;
  std::size_t n_systems = 0;
  std::size_t n_segments_scored = 0;
  std::size_t pairs_used = 0;
  std::size_t pairs_correct = 0;
};

struct MetaEvalReport {
  std::string metric;
  std::optional<double> pairwise_accuracy;  // pooled over language pairs
  std::size_t n_pairs_used = 0;
  std::vector<LanguagePairReport> language_pairs;
  std::map<std::string, double> spearman;  // per quality dimension
};

// Inputs for one language pair (or task). Metric rows with an empty segment
// id are system-level scores; if absent they are derived by averaging the
// segment rows. The same holds for human judgments.
struct LanguagePairInput {
  std::string name;
  std::vector<HumanJudgment> metric;  // dimension ignored
  std::vector<HumanJudgment> human;
};

MetaEvalReport evaluate(const std::string& metric_name, std::span<const LanguagePairInput> inputs);

}  // namespace llmref::metaeval

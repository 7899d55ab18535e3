#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace llmref::combine {

// (system, segment) identifies one hypothesis.
struct RowKey {
  std::string system;
  std::string segment;

  auto operator<=>(const RowKey&) const = default;
};

struct ScoreRow {
  RowKey key;
  std::map<std::string, double> scores;  // reference id -> score
};

// Per-(hypothesis, reference) scores of one metric, e.g. an external
// BLEURT or COMET run scored against every reference separately.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  explicit ScoreMatrix(std::string metric_name) : metric_(std::move(metric_name)) {}

  // Throws InvalidArgument on duplicate rows, empty or non-finite scores.
  void add_row(RowKey key, std::map<std::string, double> scores);

  const std::string& metric() const noexcept { return metric_; }
  void set_metric(std::string name) { metric_ = std::move(name); }
  const std::vector<ScoreRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }

  std::optional<std::pair<double, double>> declared_range;

 private:
  std::string metric_;
  std::vector<ScoreRow> rows_;
  std::map<RowKey, std::size_t> index_;
};

enum class PolicyKind { kMax, kMean, kTopKMean };

struct CombinePolicy {
  PolicyKind kind = PolicyKind::kMax;
  std::optional<std::size_t> k;

  static CombinePolicy max() { return {PolicyKind::kMax, std::nullopt}; }
  static CombinePolicy mean() { return {PolicyKind::kMean, std::nullopt}; }
  static CombinePolicy top_k_mean(std::size_t k) { return {PolicyKind::kTopKMean, k}; }

  // "max", "mean", "topk:<k>".
  static CombinePolicy parse(const std::string& text);
  std::string to_string() const;
};

double combine_row(std::span<const double> scores, const CombinePolicy& policy);

std::map<RowKey, double> combine_matrix(const ScoreMatrix& matrix, const CombinePolicy& policy);

// Arithmetic mean over segments.
double system_score(const std::map<std::string, double>& per_segment);

// Groups combined (system, segment) scores by system and averages each.
std::map<std::string, double> system_scores(const std::map<RowKey, double>& per_row);

}  // namespace llmref::combine

#include "llmref/score_combine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "llmref/error.hpp"

namespace llmref::combine {

void ScoreMatrix::add_row(RowKey key, std::map<std::string, double> scores) {
  if (scores.empty()) {
    throw InvalidArgument("row (" + key.system + ", " + key.segment + ") has no scores");
  }
  for (const auto& [ref, value] : scores) {
    if (!std::isfinite(value)) {
      throw InvalidArgument("non-finite score for reference '" + ref + "' in row (" + key.system + ", " +
                            key.segment + ")");
    }
  }
  if (index_.contains(key)) {
    throw InvalidArgument("duplicate row (" + key.system + ", " + key.segment + ")");
  }
  index_.emplace(key, rows_.size());
  rows_.push_back(ScoreRow{std::move(key), std::move(scores)});
}

CombinePolicy CombinePolicy::parse(const std::string& text) {
  if (text == "max") return max();
  if (text == "mean") return mean();
  if (text.rfind("topk:", 0) == 0) {
    const std::string k_text = text.substr(5);
    std::size_t consumed = 0;
    long long k = 0;
    try {
      k = std::stoll(k_text, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed != k_text.size() || k_text.empty() || k < 1) {
      throw InvalidArgument("invalid top-k policy '" + text + "'");
    }
    return top_k_mean(static_cast<std::size_t>(k));
  }
  throw InvalidArgument("unknown combine policy '" + text + "' (expected max, mean or topk:<k>)");
}

std::string CombinePolicy::to_string() const {
  switch (kind) {
    case PolicyKind::kMax:
      return "max";
    case PolicyKind::kMean:
      return "mean";
    case PolicyKind::kTopKMean:
      return "topk:" + std::to_string(k.value_or(0));
  }
  return "max";
}

double combine_row(std::span<const double> scores, const CombinePolicy& policy) {
  if (scores.empty()) throw InvalidArgument("cannot combine an empty score list");
  switch (policy.kind) {
    case PolicyKind::kMax:
      return *std::max_element(scores.begin(), scores.end());
    case PolicyKind::kMean:
      return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    case PolicyKind::kTopKMean: {
      if (!policy.k || *policy.k < 1 || *policy.k > scores.size()) {
        throw InvalidArgument("top-k requires 1 <= k <= " + std::to_string(scores.size()));
      }
      std::vector<double> sorted(scores.begin(), scores.end());
      const auto k = static_cast<std::ptrdiff_t>(*policy.k);
      std::partial_sort(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<>());
      return std::accumulate(sorted.begin(), sorted.begin() + k, 0.0) / static_cast<double>(k);
    }
  }
  throw InvalidArgument("unknown combine policy");
}

std::map<RowKey, double> combine_matrix(const ScoreMatrix& matrix, const CombinePolicy& policy) {
  if (matrix.empty()) throw InvalidArgument("score matrix is empty");
  std::map<RowKey, double> out;
  std::vector<double> values;
  for (const auto& row : matrix.rows()) {
    values.clear();
    for (const auto& [ref, v] : row.scores) values.push_back(v);
    out.emplace(row.key, combine_row(values, policy));
  }
  return out;
}

double system_score(const std::map<std::string, double>& per_segment) {
  if (per_segment.empty()) throw InvalidArgument("system score needs at least one segment");
  double sum = 0.0;
  for (const auto& [seg, v] : per_segment) sum += v;
  return sum / static_cast<double>(per_segment.size());
}

std::map<std::string, double> system_scores(const std::map<RowKey, double>& per_row) {
  std::map<std::string, std::map<std::string, double>> grouped;
  for (const auto& [key, v] : per_row) grouped[key.system][key.segment] = v;
  std::map<std::string, double> out;
  for (const auto& [system, segs] : grouped) out[system] = system_score(segs);
  return out;
}

}  // namespace llmref::combine

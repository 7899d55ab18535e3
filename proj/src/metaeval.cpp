#include "llmref/metaeval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>

#include "llmref/error.hpp"

namespace llmref::metaeval {
namespace {

void check_paired(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) throw InvalidArgument(std::string(what) + ": vectors differ in length");
  if (x.size() < 2) throw InvalidArgument(std::string(what) + ": need at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidArgument(std::string(what) + ": non-finite value");
    }
  }
}

int sign(double v) { return (v > 0) - (v < 0); }

// Sum over tie groups of t(t-1)/2 for a sorted range.
template <typename Equal>
std::uint64_t tied_pairs(const std::vector<std::size_t>& order, Equal eq) {
  std::uint64_t ties = 0;
  std::uint64_t run = 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (eq(order[i - 1], order[i])) {
      ++run;
    } else {
      ties += run * (run - 1) / 2;
      run = 1;
    }
  }
  ties += run * (run - 1) / 2;
  return ties;
}

// Stable merge sort of `idx` by y, returning the number of strict inversions.
std::uint64_t sort_count_swaps(std::vector<std::size_t>& idx, std::span<const double> y) {
  std::uint64_t swaps = 0;
  std::vector<std::size_t> buffer(idx.size());
  for (std::size_t width = 1; width < idx.size(); width *= 2) {
    for (std::size_t lo = 0; lo < idx.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, idx.size());
      const std::size_t hi = std::min(lo + 2 * width, idx.size());
      std::size_t i = lo;
      std::size_t j = mid;
      std::size_t k = lo;
      while (i < mid && j < hi) {
        if (y[idx[j]] < y[idx[i]]) {
          swaps += mid - i;
          buffer[k++] = idx[j++];
        } else {
          buffer[k++] = idx[i++];
        }
      }
      while (i < mid) buffer[k++] = idx[i++];
      while (j < hi) buffer[k++] = idx[j++];
    }
    std::swap(idx, buffer);
  }
  return swaps;
}

std::map<std::string, double> average_by_system(const std::vector<HumanJudgment>& rows) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    auto& [sum, n] = acc[r.system];
    sum += r.score;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [system, sn] : acc) out[system] = sn.first / static_cast<double>(sn.second);
  return out;
}

struct SplitRows {
  std::map<std::string, double> system_level;
  std::map<RowKey, double> segment_level;
};

// Rows with a dimension are excluded; they feed the per-dimension Spearman.
SplitRows split_rows(const std::vector<HumanJudgment>& rows, const std::string& what) {
  SplitRows out;
  std::vector<HumanJudgment> seg_rows;
  for (const auto& r : rows) {
    if (r.dimension) continue;
    if (!std::isfinite(r.score)) throw InvalidArgument(what + ": non-finite score for system " + r.system);
    if (r.segment) {
      if (!out.segment_level.emplace(RowKey{r.system, *r.segment}, r.score).second) {
        throw InvalidArgument(what + ": duplicate score for (" + r.system + ", " + *r.segment + ")");
      }
      seg_rows.push_back(r);
    } else if (!out.system_level.emplace(r.system, r.score).second) {
      throw InvalidArgument(what + ": duplicate system-level score for " + r.system);
    }
  }
  if (out.system_level.empty()) out.system_level = average_by_system(seg_rows);
  return out;
}

}  // namespace

AccuracyResult pairwise_agreement_counts(const std::map<std::string, double>& metric_scores,
                                         const std::map<std::string, double>& human_scores) {
  std::vector<std::string> systems;
  for (const auto& [name, v] : human_scores) {
    if (metric_scores.contains(name)) systems.push_back(name);
  }
  if (systems.size() < 2) throw InvalidArgument("pairwise accuracy needs at least two common systems");
  AccuracyResult out;
  for (std::size_t i = 0; i < systems.size(); ++i) {
    for (std::size_t j = i + 1; j < systems.size(); ++j) {
      const int human = sign(human_scores.at(systems[i]) - human_scores.at(systems[j]));
      if (human == 0) continue;
      ++out.pairs_used;
      const int metric = sign(metric_scores.at(systems[i]) - metric_scores.at(systems[j]));
      if (metric == human) ++out.correct;
    }
  }
  if (out.pairs_used > 0) {
    out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.pairs_used);
  }
  return out;
}

AccuracyResult pairwise_accuracy(const std::map<std::string, double>& metric_scores,
                                 const std::map<std::string, double>& human_scores) {
  AccuracyResult out = pairwise_agreement_counts(metric_scores, human_scores);
  if (out.pairs_used == 0) {
    throw DegenerateInput("pairwise accuracy undefined: every system pair is tied under human scores");
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_paired(x, y, "pearson");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_paired(x, y, "kendall");
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const std::uint64_t x_ties = tied_pairs(idx, [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  const std::uint64_t joint_ties =
      tied_pairs(idx, [&](std::size_t a, std::size_t b) { return x[a] == x[b] && y[a] == y[b]; });
  const std::uint64_t swaps = sort_count_swaps(idx, y);
  const std::uint64_t y_ties = tied_pairs(idx, [&](std::size_t a, std::size_t b) { return y[a] == y[b]; });

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (x_ties == total || y_ties == total) throw DegenerateInput("kendall tau undefined: all values tied");
  const auto concordant_minus_discordant = static_cast<double>(
      static_cast<std::int64_t>(total - x_ties - y_ties + joint_ties) - 2 * static_cast<std::int64_t>(swaps));
  const double denom = std::sqrt(static_cast<double>(total - x_ties) * static_cast<double>(total - y_ties));
  return std::clamp(concordant_minus_discordant / denom, -1.0, 1.0);
}

std::vector<double> mid_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i + 1;
    while (j < idx.size() && values[idx[j]] == values[idx[i]]) ++j;
    // Positions i..j-1 share ranks i+1..j.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_paired(x, y, "spearman");
  const auto rx = mid_ranks(x);
  const auto ry = mid_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const DegenerateInput&) {
    throw DegenerateInput("spearman undefined: zero rank variance");
  }
}

double segment_kendall(const std::map<RowKey, double>& metric, const std::map<RowKey, double>& human) {
  std::vector<double> m;
  std::vector<double> h;
  for (const auto& [key, hv] : human) {
    const auto it = metric.find(key);
    if (it == metric.end()) continue;
    m.push_back(it->second);
    h.push_back(hv);
  }
  if (m.size() < 2) throw InvalidArgument("segment-level kendall needs at least two common (system, segment) keys");
  return kendall_tau(m, h);
}

LeakageGapReport leakage_gap(const std::map<std::string, double>& scores_single,
                             const std::map<std::string, double>& scores_multi, const std::string& a,
                             const std::string& b) {
  const auto get = [](const std::map<std::string, double>& m, const std::string& sys, const char* which) {
    const auto it = m.find(sys);
    if (it == m.end()) {
      throw InvalidArgument("system '" + sys + "' missing from " + which + "-reference scores");
    }
    return it->second;
  };
  LeakageGapReport r;
  r.system_a = a;
  r.system_b = b;
  r.delta_single = get(scores_single, a, "single") - get(scores_single, b, "single");
  r.delta_multi = get(scores_multi, a, "multi") - get(scores_multi, b, "multi");
  r.shrinkage = r.delta_multi - r.delta_single;
  if (r.delta_single != 0.0) r.ratio = r.delta_multi / r.delta_single;
  return r;
}

MetaEvalReport evaluate(const std::string& metric_name, std::span<const LanguagePairInput> inputs) {
  if (inputs.empty()) throw InvalidArgument("meta-evaluation needs at least one language pair");
  MetaEvalReport report;
  report.metric = metric_name;
  std::size_t pooled_correct = 0;
  bool any_system_level = false;

  // dimension -> pooled (metric, human) values
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_dimension;

  for (const auto& lp : inputs) {
    LanguagePairReport out;
    out.name = lp.name;
    const SplitRows metric = split_rows(lp.metric, lp.name + " metric");
    const SplitRows human = split_rows(lp.human, lp.name + " human");

    std::vector<double> ms;
    std::vector<double> hs;
    for (const auto& [system, hv] : human.system_level) {
      const auto it = metric.system_level.find(system);
      if (it == metric.system_level.end()) continue;
      ms.push_back(it->second);
      hs.push_back(hv);
    }
    out.n_systems = ms.size();
    if (ms.size() >= 2) {
      any_system_level = true;
      const AccuracyResult acc = pairwise_agreement_counts(metric.system_level, human.system_level);
      out.pairs_used = acc.pairs_used;
      out.pairs_correct = acc.correct;
      if (acc.pairs_used > 0) out.pairwise_accuracy = acc.accuracy;
      pooled_correct += acc.correct;
      report.n_pairs_used += acc.pairs_used;
      out.pearson = pearson(ms, hs);
    }

    std::size_t common_segments = 0;
    for (const auto& [key, v] : human.segment_level) common_segments += metric.segment_level.contains(key);
    out.n_segments_scored = common_segments;
    if (common_segments >= 2) out.kendall = segment_kendall(metric.segment_level, human.segment_level);

    for (const auto& j : lp.human) {
      if (!j.dimension || !j.segment) continue;
      const auto it = metric.segment_level.find(RowKey{j.system, *j.segment});
      if (it == metric.segment_level.end()) continue;
      auto& [mv, hv] = by_dimension[*j.dimension];
      mv.push_back(it->second);
      hv.push_back(j.score);
    }
    report.language_pairs.push_back(std::move(out));
  }

  if (any_system_level) {
    if (report.n_pairs_used == 0) {
      throw DegenerateInput("pairwise accuracy undefined: every system pair is tied under human scores");
    }
    report.pairwise_accuracy = static_cast<double>(pooled_correct) / static_cast<double>(report.n_pairs_used);
  }
  for (const auto& [dimension, values] : by_dimension) {
    if (values.first.size() >= 2) report.spearman[dimension] = spearman(values.first, values.second);
  }
  return report;
}

}  // namespace llmref::metaeval

#include "llmref/ngram_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "llmref/error.hpp"

namespace llmref::metrics {
namespace {

using textproc::extract_ngrams;
using textproc::NgramCounts;

void require_refs(std::size_t n_refs) {
  if (n_refs == 0) throw InvalidArgument("at least one reference is required");
}

double clamp_score(double v) { return std::clamp(v, 0.0, 100.0); }

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

std::size_t clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t overlap = 0;
  for (const auto& [gram, count] : hyp.counts) overlap += std::min(count, ref.count(gram));
  return overlap;
}

std::size_t effective_ref_length(std::size_t hyp_len, std::span<const TokenSequence> refs, RefLength mode) {
  std::size_t best = refs.front().size();
  for (const auto& ref : refs) {
    const std::size_t len = ref.size();
    if (mode == RefLength::kShortest) {
      best = std::min(best, len);
      continue;
    }
    const auto diff = [hyp_len](std::size_t l) {
      return l > hyp_len ? l - hyp_len : hyp_len - l;
    };
    if (diff(len) < diff(best) || (diff(len) == diff(best) && len < best)) best = len;
  }
  return best;
}

}  // namespace

void BleuConfig::validate() const {
  if (max_order == 0) throw InvalidArgument("BLEU max_order must be >= 1");
}

CorpusStats& CorpusStats::operator+=(const CorpusStats& other) {
  if (matches.size() != other.matches.size()) throw InvalidArgument("BLEU statistics of different orders");
  for (std::size_t i = 0; i < matches.size(); ++i) {
    matches[i] += other.matches[i];
    totals[i] += other.totals[i];
  }
  hyp_length += other.hyp_length;
  ref_length += other.ref_length;
  return *this;
}

CorpusStats bleu_stats(const TokenSequence& hyp, std::span<const TokenSequence> refs, const BleuConfig& cfg) {
  cfg.validate();
  require_refs(refs.size());
  CorpusStats stats(cfg.max_order);
  stats.hyp_length = hyp.size();
  stats.ref_length = effective_ref_length(hyp.size(), refs, cfg.effective_ref_length);
  for (std::size_t n = 1; n <= cfg.max_order; ++n) {
    const NgramCounts hyp_counts = extract_ngrams(hyp, n);
    std::map<textproc::Ngram, std::size_t> max_ref;
    for (const auto& ref : refs) {
      for (const auto& [gram, count] : extract_ngrams(ref, n).counts) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, count);
      }
    }
    std::size_t matched = 0;
    for (const auto& [gram, count] : hyp_counts.counts) {
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(count, it->second);
    }
    stats.matches[n - 1] = matched;
    stats.totals[n - 1] = hyp_counts.total();
  }
  return stats;
}

MetricScore bleu_from_stats(const CorpusStats& stats, const BleuConfig& cfg) {
  cfg.validate();
  if (stats.matches.size() != cfg.max_order) throw InvalidArgument("statistics do not match max_order");
  MetricScore score;
  score.per_order.resize(cfg.max_order, 0.0);
  const auto c = static_cast<double>(stats.hyp_length);
  const auto r = static_cast<double>(stats.ref_length);
  const double bp = (stats.hyp_length == 0) ? 0.0 : (c >= r ? 1.0 : std::exp(1.0 - r / c));
  score.detail["bp"] = bp;
  score.detail["hyp_len"] = c;
  score.detail["ref_len"] = r;

  bool zero = stats.hyp_length == 0 ||
              std::all_of(stats.matches.begin(), stats.matches.end(), [](std::size_t m) { return m == 0; });
  double smooth = 1.0;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < cfg.max_order; ++i) {
    const auto total = static_cast<double>(stats.totals[i]);
    const auto matched = static_cast<double>(stats.matches[i]);
    if (stats.totals[i] == 0) {
      zero = true;
      continue;
    }
    score.per_order[i] = matched / total;
    if (stats.matches[i] == 0) {
      if (cfg.smoothing == Smoothing::kNone) {
        zero = true;
        continue;
      }
      smooth *= 2.0;
      log_sum += std::log(1.0 / (smooth * total));
    } else {
      log_sum += std::log(matched / total);
    }
  }
  score.value = zero ? 0.0 : clamp_score(bp * std::exp(log_sum / static_cast<double>(cfg.max_order)) * 100.0);
  return score;
}

MetricScore bleu_sentence(const TokenSequence& hyp, std::span<const TokenSequence> refs, const BleuConfig& cfg) {
  return bleu_from_stats(bleu_stats(hyp, refs, cfg), cfg);
}

MetricScore bleu_corpus(std::span<const TokenizedPair> pairs, const BleuConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw InvalidArgument("corpus BLEU needs at least one segment");
  CorpusStats total(cfg.max_order);
  for (const auto& pair : pairs) total += bleu_stats(pair.hyp, pair.refs, cfg);
  return bleu_from_stats(total, cfg);
}

namespace {

template <typename Tokenizer>
std::vector<TokenizedPair> tokenize_pairs(std::span<const TextPair> pairs, Tokenizer&& tok) {
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    TokenizedPair tp{tok(p.hyp), {}};
    for (const auto& r : p.refs) tp.refs.push_back(tok(r));
    out.push_back(std::move(tp));
  }
  return out;
}

}  // namespace

MetricScore spbleu_corpus(std::span<const TextPair> pairs, const textproc::SubwordVocab& vocab,
                          const BleuConfig& cfg) {
  const auto tokenized =
      tokenize_pairs(pairs, [&vocab](const std::string& s) { return textproc::tokenize_subwords(s, vocab); });
  return bleu_corpus(tokenized, cfg);
}

MetricScore spbleu_corpus_pretokenized(std::span<const TextPair> pairs, const BleuConfig& cfg) {
  const auto tokenized = tokenize_pairs(pairs, [](const std::string& s) {
    return textproc::split_pretokenized(s, textproc::Granularity::kSubword);
  });
  return bleu_corpus(tokenized, cfg);
}

void ChrfConfig::validate() const {
  if (n_max == 0) throw InvalidArgument("chrF n_max must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("chrF beta must be positive");
}

ChrfStats& ChrfStats::operator+=(const ChrfStats& other) {
  if (matches.size() != other.matches.size()) throw InvalidArgument("chrF statistics of different orders");
  for (std::size_t i = 0; i < matches.size(); ++i) {
    hyp_total[i] += other.hyp_total[i];
    ref_total[i] += other.ref_total[i];
    matches[i] += other.matches[i];
  }
  return *this;
}

ChrfStats chrf_stats(const TokenSequence& hyp_chars, const TokenSequence& ref_chars, const ChrfConfig& cfg) {
  cfg.validate();
  ChrfStats stats(cfg.n_max);
  for (std::size_t n = 1; n <= cfg.n_max; ++n) {
    const auto h = extract_ngrams(hyp_chars, n);
    const auto r = extract_ngrams(ref_chars, n);
    stats.hyp_total[n - 1] = h.total();
    stats.ref_total[n - 1] = r.total();
    stats.matches[n - 1] = clipped_overlap(h, r);
  }
  return stats;
}

MetricScore chrf_from_stats(const ChrfStats& stats, const ChrfConfig& cfg) {
  cfg.validate();
  if (stats.matches.size() != cfg.n_max) throw InvalidArgument("statistics do not match n_max");
  MetricScore score;
  score.per_order.resize(cfg.n_max, 0.0);
  double sum = 0.0;
  std::size_t effective = 0;
  for (std::size_t i = 0; i < cfg.n_max; ++i) {
    if (stats.hyp_total[i] == 0 && stats.ref_total[i] == 0) continue;
    ++effective;
    if (stats.hyp_total[i] == 0 || stats.ref_total[i] == 0) continue;
    const double p = static_cast<double>(stats.matches[i]) / static_cast<double>(stats.hyp_total[i]);
    const double r = static_cast<double>(stats.matches[i]) / static_cast<double>(stats.ref_total[i]);
    score.per_order[i] = f_beta(p, r, cfg.beta);
    sum += score.per_order[i];
  }
  score.detail["effective_order"] = static_cast<double>(effective);
  score.value = effective == 0 ? 0.0 : clamp_score(sum / static_cast<double>(effective) * 100.0);
  return score;
}

ChrfStats chrf_best_ref_stats(const TokenSequence& hyp_chars, std::span<const TokenSequence> refs_chars,
                              const ChrfConfig& cfg) {
  require_refs(refs_chars.size());
  ChrfStats best = chrf_stats(hyp_chars, refs_chars.front(), cfg);
  double best_score = chrf_from_stats(best, cfg).value;
  for (std::size_t i = 1; i < refs_chars.size(); ++i) {
    ChrfStats candidate = chrf_stats(hyp_chars, refs_chars[i], cfg);
    const double s = chrf_from_stats(candidate, cfg).value;
    if (s > best_score) {
      best_score = s;
      best = std::move(candidate);
    }
  }
  return best;
}

MetricScore chrf_sentence(const std::string& hyp, std::span<const std::string> refs, const ChrfConfig& cfg) {
  const TextPair pair{hyp, std::vector<std::string>(refs.begin(), refs.end())};
  return chrf_corpus(std::span<const TextPair>(&pair, 1), cfg);
}

MetricScore chrf_corpus(std::span<const TextPair> pairs, const ChrfConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw InvalidArgument("chrF needs at least one segment");
  ChrfStats total(cfg.n_max);
  for (const auto& pair : pairs) {
    require_refs(pair.refs.size());
    const auto hyp = textproc::tokenize_chars(pair.hyp);
    std::vector<TokenSequence> refs;
    refs.reserve(pair.refs.size());
    for (const auto& r : pair.refs) refs.push_back(textproc::tokenize_chars(r));
    total += chrf_best_ref_stats(hyp, refs, cfg);
  }
  return chrf_from_stats(total, cfg);
}

MetricScore rouge_n(const TokenSequence& hyp, std::span<const TokenSequence> refs, std::size_t n) {
  if (n == 0) throw InvalidArgument("ROUGE-N order must be >= 1");
  require_refs(refs.size());
  const auto h = extract_ngrams(hyp, n);
  const double hyp_total = static_cast<double>(h.total());
  MetricScore best;
  best.value = -1.0;
  for (const auto& ref : refs) {
    const auto r = extract_ngrams(ref, n);
    const double ref_total = static_cast<double>(r.total());
    const double overlap = static_cast<double>(clipped_overlap(h, r));
    const double p = hyp_total > 0 ? overlap / hyp_total : 0.0;
    const double rec = ref_total > 0 ? overlap / ref_total : 0.0;
    const double f = clamp_score(f_beta(p, rec, 1.0) * 100.0);
    if (f > best.value) {
      best.value = f;
      best.detail = {{"precision", p}, {"recall", rec}};
    }
  }
  return best;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

MetricScore rouge_l(const TokenSequence& hyp, std::span<const TokenSequence> refs) {
  require_refs(refs.size());
  MetricScore best;
  best.value = -1.0;
  for (const auto& ref : refs) {
    const double lcs = static_cast<double>(lcs_length(hyp.tokens, ref.tokens));
    const double p = hyp.empty() ? 0.0 : lcs / static_cast<double>(hyp.size());
    const double rec = ref.empty() ? 0.0 : lcs / static_cast<double>(ref.size());
    const double f = clamp_score(f_beta(p, rec, 1.0) * 100.0);
    if (f > best.value) {
      best.value = f;
      best.detail = {{"precision", p}, {"recall", rec}, {"lcs", lcs}};
    }
  }
  return best;
}

}  // namespace llmref::metrics

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "llmref/ngram_metrics.hpp"
#include "llmref/textproc.hpp"

namespace llmref::diversity {

using metrics::BleuConfig;
using textproc::TokenSequence;

inline constexpr double kDefaultSelfBleuThreshold = 35.0;

enum class Provenance { kLlm, kGold, kExternal };

struct CandidateSet {
  std::string segment_id;
  std::vector<std::string> candidates;
  Provenance provenance = Provenance::kLlm;
};

struct DiversityReport {
  double distinct_n = 0.0;
  std::size_t n = 6;
  std::size_t unique_tokens = 0;
  std::vector<double> self_bleu;
};

struct Selection {
  CandidateSet selected;
  std::vector<double> self_bleu;      // one per input candidate; empty for a single candidate
  std::vector<std::size_t> kept;      // indices into the input candidates
  bool fallback = false;              // every candidate was at/above threshold
};

// result[i] = BLEU of candidate i with all other candidates as its
// (joint) reference set.
std::vector<double> self_bleu(std::span<const TokenSequence> candidates, const BleuConfig& cfg = {});

// Single pass over Self-BLEU computed on the full set; keeps candidates
// scoring strictly below `threshold`. If nothing survives, the
// lowest-scoring candidate (earliest on ties) is kept.
Selection select_diverse(const CandidateSet& set, double threshold = kDefaultSelfBleuThreshold,
                         const BleuConfig& cfg = {});

double distinct_n(std::span<const TokenSequence> corpus, std::size_t n = 6);
std::size_t unique_tokens(std::span<const TokenSequence> corpus);

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

}  // namespace llmref::diversity

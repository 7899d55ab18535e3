#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "llmref/corpus_io.hpp"
#include "llmref/textproc.hpp"

namespace fixtures {

using Rng = std::mt19937_64;
using Tokens = std::vector<std::string>;

// Tokens over the first `alphabet` lowercase letters.
Tokens random_tokens(Rng& rng, std::size_t min_len, std::size_t max_len, std::size_t alphabet = 5);
llmref::textproc::TokenSequence as_seq(const Tokens& t,
                                       llmref::textproc::Granularity g = llmref::textproc::Granularity::kWord);
std::string join(const Tokens& t, const std::string& sep = " ");

// Values drawn from `levels` distinct numbers so ties are common.
std::vector<double> random_with_ties(Rng& rng, std::size_t n, std::size_t levels);

// Sentences built from templates with interchangeable synonyms per slot.
class SentenceModel {
 public:
  explicit SentenceModel(std::uint64_t seed);

  struct Plan {
    std::size_t tmpl = 0;
    std::vector<std::size_t> concepts;
  };

  Plan plan();
  // canonical_bias: probability of the first synonym; otherwise uniform.
  std::string render(const Plan& p, double canonical_bias);
  std::string render_uniform(const Plan& p);
  // Each slot keeps its canonical rendering with probability `quality`, else
  // is replaced by an unrelated word.
  std::string render_degraded(const Plan& p, const std::string& reference_rendering, double quality);

  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

// ≥200 segments; "L" copies the gold reference, "H" paraphrases it; each
// segment carries `n_generated` independent paraphrases as generated refs.
llmref::corpus::EvalCorpus leakage_corpus(std::size_t n_segments = 240, std::size_t n_generated = 10,
                                          std::uint64_t seed = 20240611);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Writes segments.jsonl, outputs.jsonl and human.jsonl for an end-to-end run
// with four systems of graded quality.
void write_pipeline_fixture(const std::filesystem::path& dir, std::size_t n_segments = 20,
                            std::uint64_t seed = 7);

}  // namespace fixtures

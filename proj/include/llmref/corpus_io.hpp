#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmref/metaeval.hpp"
#include "llmref/refgen.hpp"
#include "llmref/score_combine.hpp"

namespace llmref::corpus {

namespace fs = std::filesystem;

struct Segment {
  std::string id;
  std::string source;
  std::vector<std::string> gold_refs;
  std::vector<std::string> generated_refs;
};

enum class RefSelection { kGold, kGenerated, kBoth };

RefSelection ref_selection_from_string(const std::string& s);
std::string to_string(RefSelection s);

// Reference ids are "gold:<i>" and "gen:<i>".
struct Reference {
  std::string id;
  std::string text;
};

// Gold references come first, then generated ones; `max_refs` truncates.
std::vector<Reference> scoring_references(const Segment& seg, RefSelection selection,
                                          std::optional<std::size_t> max_refs = std::nullopt);

class EvalCorpus {
 public:
  std::string name;
  // Text fields hold whitespace-separated tokens (bypasses tokenizers).
  bool pretokenized = false;
  RefSelection ref_selection = RefSelection::kBoth;

  void add_segment(Segment seg);
  // Throws InvalidArgument for unknown segment ids and duplicate hypotheses.
  void add_hypothesis(const std::string& system, const std::string& segment_id, std::string hypothesis);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::vector<Segment>& mutable_segments() noexcept { return segments_; }
  const Segment* find(const std::string& id) const;
  Segment* find(const std::string& id);
  bool contains(const std::string& id) const { return index_.contains(id); }

  // system -> segment id -> hypothesis
  const std::map<std::string, std::map<std::string, std::string>>& systems() const noexcept { return systems_; }

 private:
  std::vector<Segment> segments_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::map<std::string, std::string>> systems_;
};

struct LoadOptions {
  std::string name;
  bool pretokenized = false;
  // System name for TSV output files ("id\ttext" lines); defaults to the file stem.
  std::optional<std::string> tsv_system;
};

// segments: segments.jsonl or a "id\tsource[\tgold]" TSV. outputs:
// outputs.jsonl or TSV files. Every error names file and line.
EvalCorpus load_corpus(const fs::path& segments_path, std::span<const fs::path> output_paths,
                       const LoadOptions& options = {});

void save_segments(const EvalCorpus& corpus, const fs::path& path);
void save_outputs(const EvalCorpus& corpus, const fs::path& path);

std::vector<refgen::GenerationRecord> load_records(const fs::path& path);
void save_records(std::span<const refgen::GenerationRecord> records, const fs::path& path);

// Latest successful record per segment fills generated_refs; the corpus'
// reference selection becomes kBoth when use_gold, else kGenerated.
EvalCorpus merge_references(const EvalCorpus& corpus, std::span<const refgen::GenerationRecord> records,
                            bool use_gold);

std::vector<metaeval::HumanJudgment> load_judgments(const fs::path& path);
void save_judgments(std::span<const metaeval::HumanJudgment> rows, const fs::path& path);

// Metric scores share the judgment layout: {"system","segment"|null,"metric","score"}.
struct MetricScoreRow {
  std::string system;
  std::optional<std::string> segment;
  std::string metric;
  double score = 0.0;
  std::optional<std::size_t> n_refs;
};

std::vector<MetricScoreRow> load_metric_scores(const fs::path& path);
void save_metric_scores(std::span<const MetricScoreRow> rows, const fs::path& path);

// matrix.jsonl may mix metrics; one ScoreMatrix per metric name.
std::map<std::string, combine::ScoreMatrix> load_score_matrices(const fs::path& path);
void save_score_matrices(const std::map<std::string, combine::ScoreMatrix>& matrices, const fs::path& path);

}  // namespace llmref::corpus

#include "llmref/corpus_io.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "llmref/error.hpp"

namespace llmref::corpus {
namespace {

using nlohmann::json;

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), 0, "cannot open file");
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

// Calls fn(record, line_number) for every non-blank line; any failure is
// reported as a LoadError naming file and line.
void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw InvalidArgument("expected a JSON object");
      fn(j, lineno);
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw LoadError(path.string(), lineno, e.what());
    }
  }
}

void for_each_tsv(const fs::path& path, const std::function<void(const std::vector<std::string>&, std::size_t)>& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    try {
      fn(fields, lineno);
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw LoadError(path.string(), lineno, e.what());
    }
  }
}

bool is_tsv(const fs::path& p) { return p.extension() == ".tsv"; }

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

double finite_number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw InvalidArgument(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw InvalidArgument(std::string("field '") + key + "' must be finite");
  return d;
}

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

RefSelection ref_selection_from_string(const std::string& s) {
  if (s == "gold") return RefSelection::kGold;
  if (s == "generated") return RefSelection::kGenerated;
  if (s == "both") return RefSelection::kBoth;
  throw InvalidArgument("unknown reference selection '" + s + "' (gold, generated, both)");
}

std::string to_string(RefSelection s) {
  switch (s) {
    case RefSelection::kGold:
      return "gold";
    case RefSelection::kGenerated:
      return "generated";
    case RefSelection::kBoth:
      return "both";
  }
  return "both";
}

std::vector<Reference> scoring_references(const Segment& seg, RefSelection selection,
                                          std::optional<std::size_t> max_refs) {
  std::vector<Reference> refs;
  if (selection != RefSelection::kGenerated) {
    for (std::size_t i = 0; i < seg.gold_refs.size(); ++i) refs.push_back({"gold:" + std::to_string(i), seg.gold_refs[i]});
  }
  if (selection != RefSelection::kGold) {
    for (std::size_t i = 0; i < seg.generated_refs.size(); ++i) {
      refs.push_back({"gen:" + std::to_string(i), seg.generated_refs[i]});
    }
  }
  if (max_refs && refs.size() > *max_refs) refs.resize(*max_refs);
  return refs;
}

void EvalCorpus::add_segment(Segment seg) {
  if (seg.id.empty()) throw InvalidArgument("segment id must be non-empty");
  if (index_.contains(seg.id)) throw InvalidArgument("duplicate segment id '" + seg.id + "'");
  index_.emplace(seg.id, segments_.size());
  segments_.push_back(std::move(seg));
}

void EvalCorpus::add_hypothesis(const std::string& system, const std::string& segment_id, std::string hypothesis) {
  if (system.empty()) throw InvalidArgument("system name must be non-empty");
  if (!index_.contains(segment_id)) throw InvalidArgument("unknown segment id '" + segment_id + "'");
  auto& per_system = systems_[system];
  if (!per_system.emplace(segment_id, std::move(hypothesis)).second) {
    throw InvalidArgument("duplicate hypothesis for system '" + system + "', segment '" + segment_id + "'");
  }
}

const Segment* EvalCorpus::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &segments_[it->second];
}

Segment* EvalCorpus::find(const std::string& id) {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &segments_[it->second];
}

EvalCorpus load_corpus(const fs::path& segments_path, std::span<const fs::path> output_paths,
                       const LoadOptions& options) {
  EvalCorpus corpus;
  corpus.name = options.name.empty() ? segments_path.stem().string() : options.name;
  corpus.pretokenized = options.pretokenized;

  if (is_tsv(segments_path)) {
    for_each_tsv(segments_path, [&](const std::vector<std::string>& f, std::size_t) {
      if (f.size() < 2) throw InvalidArgument("expected id<TAB>source[<TAB>gold...]");
      Segment seg{f[0], f[1], {}, {}};
      for (std::size_t i = 2; i < f.size(); ++i) seg.gold_refs.push_back(f[i]);
      corpus.add_segment(std::move(seg));
    });
  } else {
    for_each_jsonl(segments_path, [&](const json& j, std::size_t) {
      Segment seg;
      seg.id = j.at("id").get<std::string>();
      seg.source = j.value("source", std::string());
      if (j.contains("gold_refs")) seg.gold_refs = j.at("gold_refs").get<std::vector<std::string>>();
      if (j.contains("generated_refs")) seg.generated_refs = j.at("generated_refs").get<std::vector<std::string>>();
      corpus.add_segment(std::move(seg));
    });
  }

  for (const auto& path : output_paths) {
    if (is_tsv(path)) {
      const std::string system = options.tsv_system.value_or(path.stem().string());
      for_each_tsv(path, [&](const std::vector<std::string>& f, std::size_t) {
        if (f.size() != 2) throw InvalidArgument("expected id<TAB>hypothesis");
        corpus.add_hypothesis(system, f[0], f[1]);
      });
    } else {
      for_each_jsonl(path, [&](const json& j, std::size_t) {
        corpus.add_hypothesis(j.at("system").get<std::string>(), j.at("segment").get<std::string>(),
                              j.at("hypothesis").get<std::string>());
      });
    }
  }
  return corpus;
}

void save_segments(const EvalCorpus& corpus, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& seg : corpus.segments()) {
    json j = {{"id", seg.id}, {"source", seg.source}, {"gold_refs", seg.gold_refs}};
    if (!seg.generated_refs.empty()) j["generated_refs"] = seg.generated_refs;
    out << j.dump() << '\n';
  }
}

void save_outputs(const EvalCorpus& corpus, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& [system, hyps] : corpus.systems()) {
    for (const auto& seg : corpus.segments()) {
      const auto it = hyps.find(seg.id);
      if (it == hyps.end()) continue;
      out << json{{"system", system}, {"segment", seg.id}, {"hypothesis", it->second}}.dump() << '\n';
    }
  }
}

std::vector<refgen::GenerationRecord> load_records(const fs::path& path) {
  std::vector<refgen::GenerationRecord> records;
  for_each_jsonl(path, [&](const json& j, std::size_t) { records.push_back(refgen::record_from_json(j)); });
  return records;
}

void save_records(std::span<const refgen::GenerationRecord> records, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& r : records) out << refgen::to_json(r).dump() << '\n';
}

EvalCorpus merge_references(const EvalCorpus& corpus, std::span<const refgen::GenerationRecord> records,
                            bool use_gold) {
  EvalCorpus merged = corpus;
  for (const auto& r : records) {
    Segment* seg = merged.find(r.segment_id);
    if (seg == nullptr) throw InvalidArgument("reference record for unknown segment id '" + r.segment_id + "'");
    if (r.status == refgen::RecordStatus::kOk && !r.candidates.empty()) seg->generated_refs = r.candidates;
  }
  merged.ref_selection = use_gold ? RefSelection::kBoth : RefSelection::kGenerated;
  return merged;
}

std::vector<metaeval::HumanJudgment> load_judgments(const fs::path& path) {
  std::vector<metaeval::HumanJudgment> rows;
  std::set<std::tuple<std::string, std::optional<std::string>, std::optional<std::string>>> seen;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    metaeval::HumanJudgment h;
    h.system = j.at("system").get<std::string>();
    h.segment = optional_string(j, "segment");
    h.dimension = optional_string(j, "dimension");
    h.score = finite_number(j, "score");
    if (!seen.emplace(h.system, h.segment, h.dimension).second) {
      throw InvalidArgument("duplicate judgment for system '" + h.system + "'");
    }
    rows.push_back(std::move(h));
  });
  return rows;
}

void save_judgments(std::span<const metaeval::HumanJudgment> rows, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& h : rows) {
    out << json{{"system", h.system}, {"segment", nullable(h.segment)}, {"dimension", nullable(h.dimension)},
                {"score", h.score}}
               .dump()
        << '\n';
  }
}

std::vector<MetricScoreRow> load_metric_scores(const fs::path& path) {
  std::vector<MetricScoreRow> rows;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    MetricScoreRow r;
    r.system = j.at("system").get<std::string>();
    r.segment = optional_string(j, "segment");
    r.metric = j.value("metric", std::string("metric"));
    r.score = finite_number(j, "score");
    if (j.contains("n_refs") && !j.at("n_refs").is_null()) r.n_refs = j.at("n_refs").get<std::size_t>();
    rows.push_back(std::move(r));
  });
  return rows;
}

void save_metric_scores(std::span<const MetricScoreRow> rows, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& r : rows) {
    json j = {{"system", r.system}, {"segment", nullable(r.segment)}, {"metric", r.metric}, {"score", r.score}};
    if (r.n_refs) j["n_refs"] = *r.n_refs;
    out << j.dump() << '\n';
  }
}

std::map<std::string, combine::ScoreMatrix> load_score_matrices(const fs::path& path) {
  std::map<std::string, combine::ScoreMatrix> matrices;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    const std::string metric = j.value("metric", std::string("metric"));
    const json& scores = j.at("scores");
    if (!scores.is_object() || scores.empty()) throw InvalidArgument("'scores' must be a non-empty object");
    std::map<std::string, double> cells;
    for (const auto& [ref, v] : scores.items()) {
      if (!v.is_number()) throw InvalidArgument("score for reference '" + ref + "' is not a number");
      cells.emplace(ref, v.get<double>());
    }
    auto [it, inserted] = matrices.try_emplace(metric, metric);
    it->second.add_row({j.at("system").get<std::string>(), j.at("segment").get<std::string>()}, std::move(cells));
  });
  return matrices;
}

void save_score_matrices(const std::map<std::string, combine::ScoreMatrix>& matrices, const fs::path& path) {
  auto out = open_output(path);
  for (const auto& [metric, m] : matrices) {
    for (const auto& row : m.rows()) {
      out << json{{"system", row.key.system}, {"segment", row.key.segment}, {"scores", row.scores},
                  {"metric", metric}}
                 .dump()
          << '\n';
    }
  }
}

}  // namespace llmref::corpus

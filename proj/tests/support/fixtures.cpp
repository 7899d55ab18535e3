#include "fixtures.hpp"

#include <array>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace fixtures {
namespace fs = std::filesystem;

Tokens random_tokens(Rng& rng, std::size_t min_len, std::size_t max_len, std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> sym(0, static_cast<int>(alphabet) - 1);
  Tokens out(len(rng));
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + sym(rng)));
  return out;
}

llmref::textproc::TokenSequence as_seq(const Tokens& t, llmref::textproc::Granularity g) { return {t, g}; }

std::string join(const Tokens& t, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += sep;
    out += t[i];
  }
  return out;
}

std::vector<double> random_with_ties(Rng& rng, std::size_t n, std::size_t levels) {
  std::uniform_int_distribution<std::size_t> pick(0, levels - 1);
  std::vector<double> out(n);
  for (auto& v : out) v = static_cast<double>(pick(rng)) * 0.37 - 1.1;
  return out;
}

namespace {

const std::vector<std::array<const char*, 4>> kConcepts = {
    {"car", "automobile", "vehicle", "auto"},
    {"big", "large", "huge", "enormous"},
    {"small", "little", "tiny", "compact"},
    {"quickly", "rapidly", "swiftly", "fast"},
    {"house", "home", "residence", "dwelling"},
    {"bought", "purchased", "acquired", "obtained"},
    {"said", "stated", "declared", "remarked"},
    {"city", "town", "municipality", "metropolis"},
    {"children", "kids", "youngsters", "minors"},
    {"old", "elderly", "aged", "senior"},
    {"road", "street", "avenue", "route"},
    {"meeting", "gathering", "assembly", "session"},
    {"began", "started", "commenced", "initiated"},
    {"problem", "issue", "difficulty", "trouble"},
    {"important", "significant", "crucial", "vital"},
    {"government", "administration", "authorities", "state"},
    {"help", "assist", "support", "aid"},
    {"river", "stream", "waterway", "creek"},
    {"yesterday", "previously", "earlier", "recently"},
    {"report", "account", "statement", "summary"},
    {"built", "constructed", "erected", "assembled"},
    {"beautiful", "lovely", "pretty", "attractive"},
    {"answer", "reply", "response", "reaction"},
    {"journey", "trip", "voyage", "excursion"},
};

// "*" marks a slot filled by a concept.
const std::vector<std::vector<const char*>> kTemplates = {
    {"the", "*", "*", "was", "*", "near", "the", "*", "."},
    {"our", "*", "*", "the", "*", "*", "on", "the", "*", "."},
    {"a", "*", "*", "has", "been", "*", "in", "the", "*", "*", "."},
    {"they", "*", "that", "the", "*", "is", "*", "for", "the", "*", "."},
    {"after", "the", "*", ",", "the", "*", "*", "the", "*", "."},
    {"the", "*", "of", "the", "*", "*", "*", "and", "*", "."},
    {"everyone", "*", "the", "*", "*", "was", "*", "."},
    {"in", "the", "*", "*", "the", "*", "*", "a", "*", "*", "."},
    {"this", "*", "will", "*", "the", "*", "of", "the", "*", "."},
    {"we", "*", "a", "*", "*", "along", "the", "*", "*", "."},
    {"the", "*", "*", "to", "*", "the", "*", "*", "."},
    {"no", "*", "*", "the", "*", "because", "the", "*", "was", "*", "."},
    {"her", "*", "about", "the", "*", "*", "was", "*", "."},
    {"when", "the", "*", "*", ",", "the", "*", "*", "*", "."},
    {"an", "*", "*", "*", "the", "*", "beside", "the", "*", "."},
};

std::vector<std::string> unrelated_words() {
  return {"banana", "purple", "seven", "whistle", "glacier", "pencil", "orbit", "velvet", "thunder", "marble"};
}

}  // namespace

SentenceModel::SentenceModel(std::uint64_t seed) : rng_(seed) {}

SentenceModel::Plan SentenceModel::plan() {
  std::uniform_int_distribution<std::size_t> t(0, kTemplates.size() - 1);
  std::uniform_int_distribution<std::size_t> c(0, kConcepts.size() - 1);
  Plan p;
  p.tmpl = t(rng_);
  for (const char* w : kTemplates[p.tmpl]) {
    if (std::string(w) == "*") p.concepts.push_back(c(rng_));
  }
  return p;
}

std::string SentenceModel::render(const Plan& p, double canonical_bias) {
  std::bernoulli_distribution canonical(canonical_bias);
  std::uniform_int_distribution<std::size_t> other(1, 3);
  Tokens words;
  std::size_t slot = 0;
  for (const char* w : kTemplates[p.tmpl]) {
    if (std::string(w) != "*") {
      words.emplace_back(w);
      continue;
    }
    const std::size_t form = canonical(rng_) ? 0 : other(rng_);
    words.emplace_back(kConcepts[p.concepts[slot++]][form]);
  }
  return join(words);
}

std::string SentenceModel::render_uniform(const Plan& p) {
  std::uniform_int_distribution<std::size_t> any(0, 3);
  Tokens words;
  std::size_t slot = 0;
  for (const char* w : kTemplates[p.tmpl]) {
    if (std::string(w) != "*") {
      words.emplace_back(w);
      continue;
    }
    words.emplace_back(kConcepts[p.concepts[slot++]][any(rng_)]);
  }
  return join(words);
}

std::string SentenceModel::render_degraded(const Plan& p, const std::string& reference_rendering, double quality) {
  std::bernoulli_distribution keep(quality);
  const auto noise = unrelated_words();
  std::uniform_int_distribution<std::size_t> pick(0, noise.size() - 1);
  Tokens words;
  std::string word;
  for (char ch : reference_rendering + " ") {
    if (ch == ' ') {
      if (!word.empty()) words.push_back(word);
      word.clear();
    } else {
      word += ch;
    }
  }
  for (std::size_t i = 0; i < words.size() && i < kTemplates[p.tmpl].size(); ++i) {
    if (std::string(kTemplates[p.tmpl][i]) != "*") continue;
    if (!keep(rng_)) words[i] = noise[pick(rng_)];
  }
  return join(words);
}

llmref::corpus::EvalCorpus leakage_corpus(std::size_t n_segments, std::size_t n_generated, std::uint64_t seed) {
  SentenceModel model(seed);
  llmref::corpus::EvalCorpus corpus;
  corpus.name = "leakage";
  for (std::size_t i = 0; i < n_segments; ++i) {
    const auto plan = model.plan();
    llmref::corpus::Segment seg;
    seg.id = "s" + std::to_string(i);
    seg.source = "source " + std::to_string(i);
    const std::string gold = model.render(plan, 0.8);
    seg.gold_refs = {gold};
    for (std::size_t k = 0; k < n_generated; ++k) seg.generated_refs.push_back(model.render_uniform(plan));
    const std::string paraphrase = model.render_uniform(plan);
    corpus.add_segment(seg);
    corpus.add_hypothesis("L", seg.id, gold);
    corpus.add_hypothesis("H", seg.id, paraphrase);
  }
  return corpus;
}

TempDir::TempDir() {
  std::random_device rd;
  const auto base = fs::temp_directory_path();
  for (;;) {
    path_ = base / ("llmref-test-" + std::to_string(rd()) + std::to_string(rd()));
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_pipeline_fixture(const fs::path& dir, std::size_t n_segments, std::uint64_t seed) {
  SentenceModel model(seed);
  const std::vector<std::pair<std::string, double>> systems = {
      {"sysA", 0.95}, {"sysB", 0.75}, {"sysC", 0.5}, {"sysD", 0.25}};
  std::ofstream segs(dir / "segments.jsonl");
  std::ofstream outs(dir / "outputs.jsonl");
  std::ofstream human(dir / "human.jsonl");
  std::map<std::string, double> totals;
  for (std::size_t i = 0; i < n_segments; ++i) {
    const auto plan = model.plan();
    const std::string id = "seg" + std::to_string(i);
    const std::string gold = model.render(plan, 0.8);
    const std::string source = model.render_uniform(plan);
    segs << nlohmann::json{{"id", id}, {"source", source}, {"gold_refs", {gold}}}.dump() << '\n';
    for (const auto& [name, quality] : systems) {
      const std::string hyp = model.render_degraded(plan, model.render_uniform(plan), quality);
      outs << nlohmann::json{{"system", name}, {"segment", id}, {"hypothesis", hyp}}.dump() << '\n';
      const double judged = 100.0 * quality - static_cast<double>(i % 3);
      totals[name] += judged;
      human << nlohmann::json{{"system", name}, {"segment", id}, {"dimension", nullptr}, {"score", judged}}.dump()
            << '\n';
    }
  }
  for (const auto& [name, total] : totals) {
    human << nlohmann::json{{"system", name}, {"segment", nullptr}, {"dimension", nullptr},
                            {"score", total / static_cast<double>(n_segments)}}
                 .dump()
          << '\n';
  }
}

}  // namespace fixtures

#include "llmref/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "llmref/diversity.hpp"
#include "llmref/error.hpp"
#include "llmref/http_transport.hpp"
#include "llmref/metaeval.hpp"
#include "llmref/refgen.hpp"
#include "llmref/unicode.hpp"

namespace llmref::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  {
    std::vector<std::jthread> threads;
    threads.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t) {
      threads.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
            next = n;
            return;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Scoring

bool is_rouge(const std::string& m) { return m == kMetricRouge1 || m == kMetricRouge2 || m == kMetricRougeL; }

void validate_metrics(const std::vector<std::string>& metrics, const ScoreOptions& opts, bool pretokenized) {
  if (metrics.empty()) throw InvalidArgument("no metrics selected");
  for (const auto& m : metrics) {
    if (m != kMetricBleu && m != kMetricSpBleu && m != kMetricChrf && !is_rouge(m)) {
      throw InvalidArgument("unknown metric '" + m + "' (bleu, spbleu, chrf, rouge1, rouge2, rougeL)");
    }
    if (m == kMetricSpBleu && !opts.vocab && !pretokenized) {
      throw InvalidArgument("spbleu needs a subword vocabulary (--vocab) unless the corpus is pretokenized");
    }
  }
}

struct Prepared {
  textproc::TokenSequence words;
  textproc::TokenSequence subwords;
  textproc::TokenSequence chars;
};

Prepared prepare(const std::string& raw, const ScoreOptions& opts, bool pretokenized, bool need_subwords) {
  const std::string text = opts.lowercase ? unicode::to_lower(raw) : raw;
  Prepared p;
  if (pretokenized) {
    p.words = textproc::split_pretokenized(text);
    if (need_subwords) p.subwords = textproc::split_pretokenized(text, textproc::Granularity::kSubword);
  } else {
    p.words = textproc::tokenize_words(text);
    if (need_subwords) p.subwords = textproc::tokenize_subwords(text, *opts.vocab);
  }
  p.chars = textproc::tokenize_chars(text);
  return p;
}

struct PreparedSegment {
  std::map<std::string, Prepared> refs;  // by reference id
  std::vector<std::string> segment_ref_ids;
  std::vector<std::string> system_ref_ids;
};

std::vector<std::string> ids_of(const std::vector<corpus::Reference>& refs) {
  std::vector<std::string> ids;
  ids.reserve(refs.size());
  for (const auto& r : refs) ids.push_back(r.id);
  return ids;
}

double segment_metric(const std::string& metric, const Prepared& hyp, const std::vector<const Prepared*>& refs,
                      const ScoreOptions& opts) {
  std::vector<textproc::TokenSequence> seqs;
  seqs.reserve(refs.size());
  const auto collect = [&](auto member) {
    seqs.clear();
    for (const Prepared* r : refs) seqs.push_back(r->*member);
  };
  if (metric == kMetricBleu) {
    collect(&Prepared::words);
    return metrics::bleu_sentence(hyp.words, seqs, opts.bleu).value;
  }
  if (metric == kMetricSpBleu) {
    collect(&Prepared::subwords);
    return metrics::bleu_sentence(hyp.subwords, seqs, opts.bleu).value;
  }
  if (metric == kMetricChrf) {
    collect(&Prepared::chars);
    return metrics::chrf_from_stats(metrics::chrf_best_ref_stats(hyp.chars, seqs, opts.chrf), opts.chrf).value;
  }
  collect(&Prepared::words);
  if (metric == kMetricRouge1) return metrics::rouge_n(hyp.words, seqs, 1).value;
  if (metric == kMetricRouge2) return metrics::rouge_n(hyp.words, seqs, 2).value;
  return metrics::rouge_l(hyp.words, seqs).value;
}

struct SystemAccumulator {
  metrics::CorpusStats bleu;
  metrics::CorpusStats spbleu;
  metrics::ChrfStats chrf;
  std::map<std::string, double> rouge_sum;
  std::size_t segments = 0;

  explicit SystemAccumulator(const ScoreOptions& o)
      : bleu(o.bleu.max_order), spbleu(o.bleu.max_order), chrf(o.chrf.n_max) {}
};

struct TaskResult {
  std::map<std::string, double> segment_scores;
  std::map<std::string, std::map<std::string, double>> per_ref;  // metric -> ref id -> score
  metrics::CorpusStats bleu;
  metrics::CorpusStats spbleu;
  metrics::ChrfStats chrf;
  std::map<std::string, double> rouge;

  explicit TaskResult(const ScoreOptions& o) : bleu(o.bleu.max_order), spbleu(o.bleu.max_order), chrf(o.chrf.n_max) {}
};

}  // namespace

ScoreResult score_corpus(const corpus::EvalCorpus& corpus, const ScoreOptions& opts) {
  validate_metrics(opts.metrics, opts, corpus.pretokenized);
  opts.bleu.validate();
  opts.chrf.validate();
  const bool need_subwords =
      std::find(opts.metrics.begin(), opts.metrics.end(), kMetricSpBleu) != opts.metrics.end();

  const auto& segments = corpus.segments();
  std::vector<PreparedSegment> prepared(segments.size());
  parallel_for(segments.size(), opts.jobs, [&](std::size_t i) {
    const corpus::Segment& seg = segments[i];
    PreparedSegment& ps = prepared[i];
    for (const auto& ref : corpus::scoring_references(seg, corpus::RefSelection::kBoth)) {
      ps.refs.emplace(ref.id, prepare(ref.text, opts, corpus.pretokenized, need_subwords));
    }
    const auto seg_sel = opts.refs.value_or(corpus.ref_selection);
    ps.segment_ref_ids = ids_of(corpus::scoring_references(seg, seg_sel, opts.max_refs));
    if (opts.refs || corpus.ref_selection == corpus::RefSelection::kGenerated) {
      ps.system_ref_ids = ps.segment_ref_ids;
    } else {
      const auto sys_sel = seg.generated_refs.empty() ? corpus::RefSelection::kGold : corpus::RefSelection::kGenerated;
      ps.system_ref_ids = ids_of(corpus::scoring_references(seg, sys_sel, opts.max_refs));
    }
  });

  struct Task {
    std::string system;
    std::size_t segment;
    const std::string* hypothesis;
  };
  std::vector<Task> tasks;
  for (const auto& [system, hyps] : corpus.systems()) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto it = hyps.find(segments[i].id);
      if (it != hyps.end()) tasks.push_back({system, i, &it->second});
    }
  }

  std::vector<TaskResult> results(tasks.size(), TaskResult(opts));
  parallel_for(tasks.size(), opts.jobs, [&](std::size_t t) {
    const Task& task = tasks[t];
    const PreparedSegment& ps = prepared[task.segment];
    const std::string& seg_id = segments[task.segment].id;
    const auto lookup = [&](const std::vector<std::string>& ids, const char* level) {
      if (ids.empty()) {
        throw InvalidArgument("segment '" + seg_id + "' has no references for " + level + " scoring");
      }
      std::vector<const Prepared*> refs;
      for (const auto& id : ids) refs.push_back(&ps.refs.at(id));
      return refs;
    };
    const Prepared hyp = prepare(*task.hypothesis, opts, corpus.pretokenized, need_subwords);
    TaskResult& r = results[t];

    if (opts.segment_level) {
      const auto refs = lookup(ps.segment_ref_ids, "segment-level");
      for (const auto& m : opts.metrics) r.segment_scores[m] = segment_metric(m, hyp, refs, opts);
      if (opts.per_reference_matrix) {
        for (const auto& id : ps.segment_ref_ids) {
          const std::vector<const Prepared*> single{&ps.refs.at(id)};
          for (const auto& m : opts.metrics) r.per_ref[m][id] = segment_metric(m, hyp, single, opts);
        }
      }
    }

    const auto refs = lookup(ps.system_ref_ids, "system-level");
    std::vector<textproc::TokenSequence> seqs;
    for (const auto& m : opts.metrics) {
      seqs.clear();
      if (m == kMetricBleu) {
        for (const Prepared* p : refs) seqs.push_back(p->words);
        r.bleu = metrics::bleu_stats(hyp.words, seqs, opts.bleu);
      } else if (m == kMetricSpBleu) {
        for (const Prepared* p : refs) seqs.push_back(p->subwords);
        r.spbleu = metrics::bleu_stats(hyp.subwords, seqs, opts.bleu);
      } else if (m == kMetricChrf) {
        for (const Prepared* p : refs) seqs.push_back(p->chars);
        r.chrf = metrics::chrf_best_ref_stats(hyp.chars, seqs, opts.chrf);
      } else {
        r.rouge[m] = segment_metric(m, hyp, refs, opts);
      }
    }
  });

  ScoreResult out;
  std::map<std::string, SystemAccumulator> systems;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Task& task = tasks[t];
    TaskResult& r = results[t];
    const std::string& seg_id = segments[task.segment].id;
    for (const auto& m : opts.metrics) {
      if (opts.segment_level) out.rows.push_back({task.system, seg_id, m, r.segment_scores.at(m), std::nullopt});
      auto per_ref = r.per_ref.find(m);
      if (per_ref != r.per_ref.end()) {
        auto [it, inserted] = out.matrices.try_emplace(m, m);
        it->second.add_row({task.system, seg_id}, std::move(per_ref->second));
      }
    }
    auto [acc_it, inserted] = systems.try_emplace(task.system, opts);
    SystemAccumulator& acc = acc_it->second;
    ++acc.segments;
    acc.bleu += r.bleu;
    acc.spbleu += r.spbleu;
    acc.chrf += r.chrf;
    for (const auto& [m, v] : r.rouge) acc.rouge_sum[m] += v;
  }

  for (const auto& [system, acc] : systems) {
    for (const auto& m : opts.metrics) {
      double value = 0.0;
      if (m == kMetricBleu) {
        value = metrics::bleu_from_stats(acc.bleu, opts.bleu).value;
      } else if (m == kMetricSpBleu) {
        value = metrics::bleu_from_stats(acc.spbleu, opts.bleu).value;
      } else if (m == kMetricChrf) {
        value = metrics::chrf_from_stats(acc.chrf, opts.chrf).value;
      } else {
        value = acc.rouge_sum.at(m) / static_cast<double>(acc.segments);
      }
      out.rows.push_back({system, std::nullopt, m, value, opts.max_refs});
    }
  }
  return out;
}

std::vector<corpus::MetricScoreRow> sweep_reference_counts(const corpus::EvalCorpus& corpus,
                                                           const ScoreOptions& options, std::size_t from,
                                                           std::size_t to) {
  if (from < 1 || from > to) throw InvalidArgument("reference sweep range must satisfy 1 <= a <= b");
  ScoreOptions opts = options;
  opts.segment_level = false;
  opts.per_reference_matrix = false;
  std::vector<corpus::MetricScoreRow> rows;
  for (std::size_t k = from; k <= to; ++k) {
    opts.max_refs = k;
    auto result = score_corpus(corpus, opts);
    for (auto& row : result.rows) {
      row.n_refs = k;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto parse_count = [&](const std::string& s) {
    std::size_t consumed = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (s.empty() || consumed != s.size() || s.front() == '-') {
      throw InvalidArgument("invalid reference range '" + text + "' (expected a..b)");
    }
    return static_cast<std::size_t>(v);
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const std::size_t k = parse_count(text);
    return {k, k};
  }
  const std::size_t a = parse_count(text.substr(0, dots));
  const std::size_t b = parse_count(text.substr(dots + 2));
  if (a < 1 || a > b) throw InvalidArgument("reference range must satisfy 1 <= a <= b");
  return {a, b};
}

namespace {

// ---------------------------------------------------------------------------
// Output helpers

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  const auto display_width = [](const std::string& s) { return unicode::decode(s).size(); };
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = display_width(header[c]);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
  }
  const auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::size_t pad = width[c] - display_width(row[c]);
      if (c == 0) {
        out << row[c] << std::string(pad, ' ');
      } else {
        out << "  " << std::string(pad, ' ') << row[c];
      }
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : rows) emit(row);
}

std::string fmt_score(double v) { return fmt::format("{:.2f}", v); }
std::string fmt_corr(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : "-"; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_json_file(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw LoadError(path, 0, "cannot open config file");
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw LoadError(path, 1, "config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw LoadError(path, 0, e.what());
  }
}

metrics::BleuConfig bleu_from_config(const json& config) {
  metrics::BleuConfig cfg;
  if (!config.contains("bleu")) return cfg;
  const json& b = config.at("bleu");
  cfg.max_order = b.value("max_order", cfg.max_order);
  const std::string smoothing = b.value("smoothing", std::string("exp"));
  if (smoothing == "exp") {
    cfg.smoothing = metrics::Smoothing::kExp;
  } else if (smoothing == "none") {
    cfg.smoothing = metrics::Smoothing::kNone;
  } else {
    throw InvalidArgument("unknown smoothing '" + smoothing + "'");
  }
  const std::string ref_len = b.value("effective_ref_length", std::string("closest"));
  if (ref_len == "closest") {
    cfg.effective_ref_length = metrics::RefLength::kClosest;
  } else if (ref_len == "shortest") {
    cfg.effective_ref_length = metrics::RefLength::kShortest;
  } else {
    throw InvalidArgument("unknown effective_ref_length '" + ref_len + "'");
  }
  cfg.validate();
  return cfg;
}

struct GlobalOptions {
  std::string config_path;
  std::size_t jobs = 1;
  bool lowercase = false;
};

struct BleuFlags {
  std::optional<std::size_t> max_order;
  std::optional<std::string> smoothing;
  std::optional<std::string> ref_length;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--bleu-max-order", max_order, "BLEU maximum n-gram order")->check(CLI::PositiveNumber);
    cmd->add_option("--smoothing", smoothing, "BLEU smoothing")->check(CLI::IsMember({"none", "exp"}));
    cmd->add_option("--ref-length", ref_length, "Effective reference length")
        ->check(CLI::IsMember({"closest", "shortest"}));
  }

  metrics::BleuConfig resolve(const json& config) const {
    metrics::BleuConfig cfg = bleu_from_config(config);
    if (max_order) cfg.max_order = *max_order;
    if (smoothing) cfg.smoothing = *smoothing == "none" ? metrics::Smoothing::kNone : metrics::Smoothing::kExp;
    if (ref_length) {
      cfg.effective_ref_length = *ref_length == "shortest" ? metrics::RefLength::kShortest : metrics::RefLength::kClosest;
    }
    return cfg;
  }
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string segments;
  std::string out;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<std::size_t> n;
  std::optional<std::size_t> max_retries;
  std::optional<std::size_t> concurrency;
  std::optional<double> rpm;
  std::optional<long long> timeout;
  std::optional<std::string> language;
  std::optional<std::string> task;
  std::optional<std::string> api_key_env;
  bool no_ground_truth = false;
};

int cmd_generate(const GenerateArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  const json config = load_config(g.config_path);
  json gen_config = config;
  if (a.language || a.task) {
    json t = gen_config.value("template", json::object());
    if (a.language) t["language"] = *a.language;
    if (a.task) t["task"] = *a.task;
    gen_config["template"] = t;
  }
  refgen::PromptTemplate tmpl = refgen::default_template();
  refgen::GenerationConfig cfg = refgen::generation_config_from_json(gen_config, &tmpl);
  if (a.endpoint) cfg.endpoint_url = *a.endpoint;
  if (a.model) cfg.model_name = *a.model;
  if (a.n) cfg.n_references = *a.n;
  if (a.max_retries) cfg.max_retries = *a.max_retries;
  if (a.concurrency) cfg.concurrency = *a.concurrency;
  if (a.rpm) cfg.requests_per_minute = *a.rpm;
  if (a.timeout) cfg.timeout = std::chrono::seconds(*a.timeout);
  if (a.api_key_env) cfg.api_key_env = *a.api_key_env;
  if (a.no_ground_truth) tmpl.include_ground_truth = false;
  if (!a.concurrency && !config.contains("concurrency")) cfg.concurrency = std::max<std::size_t>(1, g.jobs);
  cfg.validate();

  const corpus::EvalCorpus corpus = corpus::load_corpus(a.segments, {});
  std::vector<refgen::SourceSegment> segments;
  for (const auto& seg : corpus.segments()) {
    refgen::SourceSegment s{seg.id, seg.source, std::nullopt};
    if (!seg.gold_refs.empty()) s.gold = seg.gold_refs.front();
    segments.push_back(std::move(s));
  }

  std::unique_ptr<refgen::ChatTransport> transport;
  try {
    transport = refgen::make_transport(cfg);
  } catch (const TransportError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  const auto done = refgen::completed_segments(a.out);
  refgen::RecordSink sink(a.out);
  refgen::GenerationSummary summary;
  try {
    summary = refgen::generate_references(segments, tmpl, cfg, *transport, &sink, done);
  } catch (const TransportError& e) {
    err << "error: generation aborted: " << e.what() << '\n';
    return 2;
  }
  for (const auto& r : summary.records) {
    if (r.status == refgen::RecordStatus::kFailed) {
      err << "warning: segment " << r.segment_id << " failed after " << r.attempt_count
          << " attempts: " << r.error << '\n';
    }
  }
  out << fmt::format("generate: {} segments, {} done, {} failed, {} skipped (already complete), {} requests\n",
                     segments.size(), summary.succeeded, summary.failed, summary.skipped, summary.requests);
  return 0;
}

// ---------------------------------------------------------------------------
// select

struct SelectArgs {
  std::string refs;
  std::string out;
  std::optional<std::string> report;
  std::optional<double> threshold;
  BleuFlags bleu;
};

int cmd_select(const SelectArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream&) {
  const json config = load_config(g.config_path);
  const double threshold = a.threshold.value_or(config.value("threshold", diversity::kDefaultSelfBleuThreshold));
  const metrics::BleuConfig bleu = a.bleu.resolve(config);

  // Latest successful record per segment, in first-seen order.
  std::vector<std::string> order;
  std::map<std::string, refgen::GenerationRecord> latest;
  for (auto& r : corpus::load_records(a.refs)) {
    if (r.status != refgen::RecordStatus::kOk || r.candidates.empty()) continue;
    if (!latest.contains(r.segment_id)) order.push_back(r.segment_id);
    latest[r.segment_id] = std::move(r);
  }

  std::vector<diversity::Selection> selections(order.size());
  parallel_for(order.size(), g.jobs, [&](std::size_t i) {
    const auto& rec = latest.at(order[i]);
    diversity::CandidateSet set{rec.segment_id, rec.candidates, diversity::Provenance::kLlm};
    if (g.lowercase) {
      for (auto& c : set.candidates) c = unicode::to_lower(c);
    }
    selections[i] = diversity::select_diverse(set, threshold, bleu);
  });

  std::vector<refgen::GenerationRecord> selected;
  json report_lines = json::array();
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    refgen::GenerationRecord rec = latest.at(order[i]);
    const auto& sel = selections[i];
    total += rec.candidates.size();
    kept += sel.kept.size();
    fallbacks += sel.fallback ? 1 : 0;
    std::vector<std::string> survivors;
    for (std::size_t k : sel.kept) survivors.push_back(rec.candidates[k]);
    rec.candidates = std::move(survivors);
    selected.push_back(std::move(rec));
    report_lines.push_back({{"segment_id", order[i]},
                            {"threshold", threshold},
                            {"self_bleu", sel.self_bleu},
                            {"kept", sel.kept},
                            {"fallback", sel.fallback}});
  }
  corpus::save_records(selected, a.out);
  if (a.report) {
    fs::path p(*a.report);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream rep(p, std::ios::binary | std::ios::trunc);
    for (const auto& line : report_lines) rep << line.dump() << '\n';
  }
  out << fmt::format("select: {} segments, kept {} of {} candidates (Self-BLEU < {}), {} fallbacks\n",
                     order.size(), kept, total, threshold, fallbacks);
  return 0;
}

// ---------------------------------------------------------------------------
// score

struct CorpusArgs {
  std::string segments;
  std::vector<std::string> outputs;
  std::optional<std::string> generated;
  bool pretokenized = false;

  void add_to(CLI::App* cmd, bool outputs_required = true) {
    cmd->add_option("--segments", segments, "segments.jsonl (or id<TAB>source[<TAB>gold] TSV)")
        ->required()
        ->check(CLI::ExistingFile);
    auto* o = cmd->add_option("--outputs", outputs, "System outputs (outputs.jsonl or id<TAB>hyp TSV)");
    if (outputs_required) o->required();
    cmd->add_option("--generated", generated, "Generated references (refs.jsonl)")->check(CLI::ExistingFile);
    cmd->add_flag("--pretokenized", pretokenized, "Text is already tokenized (whitespace separated)");
  }

  corpus::EvalCorpus load(bool use_gold) const {
    std::vector<fs::path> paths(outputs.begin(), outputs.end());
    for (const auto& p : paths) {
      if (!fs::exists(p)) throw LoadError(p.string(), 0, "system output file does not exist");
    }
    corpus::LoadOptions lo;
    lo.pretokenized = pretokenized;
    corpus::EvalCorpus c = corpus::load_corpus(segments, paths, lo);
    if (generated) c = corpus::merge_references(c, corpus::load_records(*generated), use_gold);
    return c;
  }
};

struct ScoreArgs {
  CorpusArgs corpus;
  std::vector<std::string> metrics{"bleu"};
  std::optional<std::string> refs;
  std::optional<std::size_t> max_refs;
  std::optional<std::string> sweep;
  std::optional<std::string> vocab;
  std::string out = "scores.jsonl";
  std::optional<std::string> matrix;
  std::optional<std::string> series;
  BleuFlags bleu;
  std::size_t chrf_order = 6;
  double chrf_beta = 2.0;
};

ScoreOptions score_options(const ScoreArgs& a, const GlobalOptions& g, const json& config) {
  ScoreOptions opts;
  opts.metrics = split_list(a.metrics);
  opts.bleu = a.bleu.resolve(config);
  opts.chrf.n_max = a.chrf_order;
  opts.chrf.beta = a.chrf_beta;
  if (a.refs) opts.refs = corpus::ref_selection_from_string(*a.refs);
  opts.max_refs = a.max_refs;
  if (a.vocab) opts.vocab = textproc::SubwordVocab::load(*a.vocab);
  opts.lowercase = g.lowercase;
  opts.jobs = g.jobs;
  return opts;
}

int cmd_score(const ScoreArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream&) {
  const json config = load_config(g.config_path);
  const corpus::EvalCorpus corpus = a.corpus.load(true);
  ScoreOptions opts = score_options(a, g, config);

  if (a.sweep) {
    const auto [from, to] = parse_range(*a.sweep);
    const auto rows = sweep_reference_counts(corpus, opts, from, to);
    corpus::save_metric_scores(rows, a.out);
    if (a.series) {
      fs::path p(*a.series);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      std::ofstream csv(p, std::ios::binary | std::ios::trunc);
      csv << "metric,system,n_refs,score\n";
      for (const auto& r : rows) csv << fmt::format("{},{},{},{:.6f}\n", r.metric, r.system, *r.n_refs, r.score);
    }
    std::vector<std::vector<std::string>> table;
    for (const auto& r : rows) table.push_back({r.system, r.metric, std::to_string(*r.n_refs), fmt_score(r.score)});
    print_table(out, {"system", "metric", "refs", "score"}, table);
    return 0;
  }

  const ScoreResult result = score_corpus(corpus, opts);
  corpus::save_metric_scores(result.rows, a.out);
  if (a.matrix) corpus::save_score_matrices(result.matrices, *a.matrix);

  std::map<std::string, std::map<std::string, double>> by_system;
  for (const auto& r : result.rows) {
    if (!r.segment) by_system[r.system][r.metric] = r.score;
  }
  std::vector<std::string> header{"system"};
  header.insert(header.end(), opts.metrics.begin(), opts.metrics.end());
  std::vector<std::vector<std::string>> table;
  for (const auto& [system, scores] : by_system) {
    std::vector<std::string> row{system};
    for (const auto& m : opts.metrics) row.push_back(fmt_score(scores.at(m)));
    table.push_back(std::move(row));
  }
  print_table(out, header, table);
  return 0;
}

// ---------------------------------------------------------------------------
// combine

struct CombineArgs {
  std::string matrix;
  std::string policy = "max";
  std::string out = "combined.jsonl";
  std::vector<std::string> metrics;
};

int cmd_combine(const CombineArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream&) {
  const json config = load_config(g.config_path);
  const combine::CombinePolicy policy =
      combine::CombinePolicy::parse(a.policy.empty() ? config.value("combine_policy", std::string("max")) : a.policy);
  const auto matrices = corpus::load_score_matrices(a.matrix);
  if (matrices.empty()) throw LoadError(a.matrix, 0, "score matrix file has no rows");
  const auto wanted = split_list(a.metrics);

  std::vector<corpus::MetricScoreRow> rows;
  std::vector<std::vector<std::string>> table;
  for (const auto& [metric, matrix] : matrices) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), metric) == wanted.end()) continue;
    const std::string name = metric + "-" + policy.to_string();
    const auto per_row = combine::combine_matrix(matrix, policy);
    for (const auto& [key, v] : per_row) rows.push_back({key.system, key.segment, name, v, std::nullopt});
    for (const auto& [system, v] : combine::system_scores(per_row)) {
      rows.push_back({system, std::nullopt, name, v, std::nullopt});
      table.push_back({system, name, fmt::format("{:.4f}", v)});
    }
  }
  if (rows.empty()) throw InvalidArgument("no matrix rows matched the requested metrics");
  corpus::save_metric_scores(rows, a.out);
  print_table(out, {"system", "metric", "score"}, table);
  return 0;
}

// ---------------------------------------------------------------------------
// metaeval

struct MetaevalArgs {
  std::vector<std::string> scores;
  std::vector<std::string> human;
  std::vector<std::string> lps;
  std::vector<std::string> metrics;
  std::optional<std::string> out;
};

std::string metric_key(const corpus::MetricScoreRow& r) {
  return r.n_refs ? r.metric + "@" + std::to_string(*r.n_refs) : r.metric;
}

json report_to_json(const metaeval::MetaEvalReport& r) {
  json lps = json::array();
  for (const auto& lp : r.language_pairs) {
    lps.push_back({{"name", lp.name},
                   {"pearson", optional_json(lp.pearson)},
                   {"kendall", optional_json(lp.kendall)},
                   {"pairwise_accuracy", optional_json(lp.pairwise_accuracy)},
                   {"n_systems", lp.n_systems},
                   {"n_segments_scored", lp.n_segments_scored},
                   {"pairs_used", lp.pairs_used},
                   {"pairs_correct", lp.pairs_correct}});
  }
  return {{"metric", r.metric},
          {"pairwise_accuracy", optional_json(r.pairwise_accuracy)},
          {"n_pairs_used", r.n_pairs_used},
          {"kendall_variant", "tau-b over pooled (system, segment) items"},
          {"language_pairs", std::move(lps)},
          {"spearman", r.spearman}};
}

int cmd_metaeval(const MetaevalArgs& a, const GlobalOptions&, std::ostream& out, std::ostream&) {
  if (a.scores.size() != a.human.size()) {
    throw InvalidArgument("--scores and --human must be given the same number of times (one per language pair)");
  }
  if (!a.lps.empty() && a.lps.size() != a.human.size()) {
    throw InvalidArgument("--lp must be given once per --human file");
  }
  const auto wanted = split_list(a.metrics);

  struct LpData {
    std::string name;
    std::map<std::string, std::vector<metaeval::HumanJudgment>> metric_rows;  // by metric key
    std::vector<metaeval::HumanJudgment> human;
  };
  std::vector<LpData> lps;
  std::set<std::string> metric_keys;
  for (std::size_t i = 0; i < a.human.size(); ++i) {
    LpData lp;
    lp.name = a.lps.empty() ? fs::path(a.human[i]).stem().string() : a.lps[i];
    lp.human = corpus::load_judgments(a.human[i]);
    for (const auto& row : corpus::load_metric_scores(a.scores[i])) {
      const std::string key = metric_key(row);
      if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), row.metric) == wanted.end() &&
          std::find(wanted.begin(), wanted.end(), key) == wanted.end()) {
        continue;
      }
      metric_keys.insert(key);
      lp.metric_rows[key].push_back({row.system, row.segment, std::nullopt, row.score});
    }
    lps.push_back(std::move(lp));
  }
  if (metric_keys.empty()) throw InvalidArgument("no metric scores matched");

  json reports = json::array();
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"metric", "accuracy"};
  for (const auto& lp : lps) {
    header.push_back(lp.name + " rho");
    header.push_back(lp.name + " tau");
  }
  std::set<std::string> dimensions;
  std::vector<metaeval::MetaEvalReport> all;
  for (const auto& key : metric_keys) {
    std::vector<metaeval::LanguagePairInput> inputs;
    for (const auto& lp : lps) {
      const auto it = lp.metric_rows.find(key);
      inputs.push_back({lp.name, it == lp.metric_rows.end() ? std::vector<metaeval::HumanJudgment>{} : it->second,
                        lp.human});
    }
    auto report = metaeval::evaluate(key, inputs);
    reports.push_back(report_to_json(report));
    for (const auto& [d, v] : report.spearman) dimensions.insert(d);
    all.push_back(std::move(report));
  }
  for (const auto& d : dimensions) header.push_back("spearman " + d);
  for (const auto& report : all) {
    std::vector<std::string> row{report.metric, fmt_corr(report.pairwise_accuracy)};
    for (const auto& lp : report.language_pairs) {
      row.push_back(fmt_corr(lp.pearson));
      row.push_back(fmt_corr(lp.kendall));
    }
    for (const auto& d : dimensions) {
      const auto it = report.spearman.find(d);
      row.push_back(it == report.spearman.end() ? "-" : fmt::format("{:.3f}", it->second));
    }
    table.push_back(std::move(row));
  }
  print_table(out, header, table);
  if (a.out) write_json_file({{"reports", reports}}, *a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// diversity

struct DiversityArgs {
  CorpusArgs corpus;
  std::size_t n = 6;
  bool include_gold = false;
  std::optional<std::string> out;
};

int cmd_diversity(const DiversityArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream&) {
  const corpus::EvalCorpus corpus = a.corpus.load(true);
  const auto tokenize = [&](const std::string& s) {
    const std::string text = g.lowercase ? unicode::to_lower(s) : s;
    return corpus.pretokenized ? textproc::split_pretokenized(text) : textproc::tokenize_words(text);
  };
  std::vector<std::pair<std::string, std::vector<textproc::TokenSequence>>> groups;
  for (const auto& [system, hyps] : corpus.systems()) {
    std::vector<textproc::TokenSequence> seqs;
    for (const auto& seg : corpus.segments()) {
      const auto it = hyps.find(seg.id);
      if (it != hyps.end()) seqs.push_back(tokenize(it->second));
    }
    groups.emplace_back(system, std::move(seqs));
  }
  if (a.include_gold) {
    std::vector<textproc::TokenSequence> seqs;
    for (const auto& seg : corpus.segments()) {
      if (!seg.gold_refs.empty()) seqs.push_back(tokenize(seg.gold_refs.front()));
    }
    groups.emplace_back("(gold reference)", std::move(seqs));
  }
  json rows = json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& [name, seqs] : groups) {
    const double dn = diversity::distinct_n(seqs, a.n);
    const std::size_t ut = diversity::unique_tokens(seqs);
    std::size_t total = 0;
    for (const auto& s : seqs) total += s.size();
    rows.push_back({{"system", name}, {"n", a.n}, {"distinct_n", dn}, {"unique_tokens", ut}, {"tokens", total}});
    table.push_back({name, fmt::format("{:.4f}", dn), std::to_string(ut), std::to_string(total)});
  }
  print_table(out, {"system", fmt::format("DistinctN(n={})", a.n), "unique tokens", "tokens"}, table);
  if (a.out) write_json_file({{"diversity", rows}}, *a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// leakage-report

struct LeakageArgs {
  std::optional<std::string> single;
  std::optional<std::string> multi;
  CorpusArgs corpus;
  bool have_corpus = false;
  std::string metric = "bleu";
  std::vector<std::string> pairs;
  bool multi_use_gold = false;
  std::optional<std::string> vocab;
  std::optional<std::string> out;
};

std::map<std::string, double> system_level(const std::vector<corpus::MetricScoreRow>& rows, const std::string& metric,
                                           const std::string& what) {
  std::set<std::string> names;
  for (const auto& r : rows) {
    if (!r.segment) names.insert(r.metric);
  }
  std::string chosen = metric;
  if (!names.contains(chosen) && names.size() == 1) chosen = *names.begin();
  std::map<std::string, double> out;
  for (const auto& r : rows) {
    if (!r.segment && r.metric == chosen) out[r.system] = r.score;
  }
  if (out.empty()) throw InvalidArgument("no system-level '" + metric + "' scores in " + what);
  return out;
}

int cmd_leakage(const LeakageArgs& a, const GlobalOptions& g, std::ostream& out, std::ostream&) {
  std::map<std::string, double> single;
  std::map<std::string, double> multi;
  if (a.single || a.multi) {
    if (!a.single || !a.multi) throw InvalidArgument("--single and --multi must be given together");
    single = system_level(corpus::load_metric_scores(*a.single), a.metric, *a.single);
    multi = system_level(corpus::load_metric_scores(*a.multi), a.metric, *a.multi);
  } else {
    if (a.corpus.segments.empty() || !a.corpus.generated) {
      throw InvalidArgument("give either --single/--multi score files or --segments/--outputs/--generated");
    }
    const corpus::EvalCorpus corpus = a.corpus.load(a.multi_use_gold);
    ScoreOptions opts;
    opts.metrics = {a.metric};
    opts.segment_level = false;
    opts.per_reference_matrix = false;
    opts.lowercase = g.lowercase;
    opts.jobs = g.jobs;
    if (a.vocab) opts.vocab = textproc::SubwordVocab::load(*a.vocab);
    opts.refs = corpus::RefSelection::kGold;
    opts.max_refs = 1;
    for (const auto& r : score_corpus(corpus, opts).rows) single[r.system] = r.score;
    opts.refs = a.multi_use_gold ? corpus::RefSelection::kBoth : corpus::RefSelection::kGenerated;
    opts.max_refs.reset();
    for (const auto& r : score_corpus(corpus, opts).rows) multi[r.system] = r.score;
  }
  if (a.pairs.empty()) throw InvalidArgument("at least one --pair A:B is required");

  json reports = json::array();
  std::vector<std::vector<std::string>> table;
  for (const auto& pair : a.pairs) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == pair.size()) {
      throw InvalidArgument("invalid --pair '" + pair + "' (expected A:B)");
    }
    const auto report = metaeval::leakage_gap(single, multi, pair.substr(0, colon), pair.substr(colon + 1));
    reports.push_back({{"system_a", report.system_a},
                       {"system_b", report.system_b},
                       {"delta_single", report.delta_single},
                       {"delta_multi", report.delta_multi},
                       {"shrinkage", report.shrinkage},
                       {"ratio", optional_json(report.ratio)},
                       {"metric", a.metric}});
    table.push_back({report.system_a + " - " + report.system_b, fmt::format("{:+.2f}", report.delta_single),
                     fmt::format("{:+.2f}", report.delta_multi), fmt::format("{:+.2f}", report.shrinkage),
                     report.ratio ? fmt::format("{:.3f}", *report.ratio) : "-"});
  }
  print_table(out, {"pair", "delta single-ref", "delta multi-ref", "shrinkage", "ratio"}, table);
  if (a.out) write_json_file({{"leakage", reports}}, *a.out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-reference NLG evaluation: LLM reference generation, diversity-aware selection, "
               "n-gram scoring and metric meta-evaluation"};
  app.name("llmref");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--config", global.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--jobs", global.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--lowercase", global.lowercase, "Lowercase text before tokenization");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate reference candidates with an LLM endpoint");
  generate->add_option("--segments", gen.segments, "segments.jsonl")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", gen.out, "refs.jsonl (appended; completed segments are skipped)")->required();
  generate->add_option("--endpoint", gen.endpoint, "OpenAI-compatible base URL or mock://<mode>");
  generate->add_option("--model", gen.model, "Model name");
  generate->add_option("-n,--n,--n-references", gen.n, "Candidates requested per segment")->check(CLI::PositiveNumber);
  generate->add_option("--max-retries", gen.max_retries, "Retries for malformed responses");
  generate->add_option("--concurrency", gen.concurrency, "Requests in flight")->check(CLI::PositiveNumber);
  generate->add_option("--rpm", gen.rpm, "Request rate limit per minute (0: unlimited)");
  generate->add_option("--timeout", gen.timeout, "Request timeout in seconds")->check(CLI::PositiveNumber);
  generate->add_option("--language", gen.language, "Prompt language")->check(CLI::IsMember({"english", "chinese"}));
  generate->add_option("--task", gen.task, "Task")->check(CLI::IsMember({"translation", "summarization"}));
  generate->add_option("--api-key-env", gen.api_key_env, "Environment variable holding the API key");
  generate->add_flag("--no-ground-truth", gen.no_ground_truth, "Do not show the gold reference in the prompt");

  SelectArgs sel;
  auto* select = app.add_subcommand("select", "Diversity-aware selection of candidates by Self-BLEU");
  select->add_option("--refs", sel.refs, "refs.jsonl from generate")->required()->check(CLI::ExistingFile);
  select->add_option("--out", sel.out, "Filtered refs.jsonl")->required();
  select->add_option("--report", sel.report, "Per-segment Self-BLEU report (JSONL)");
  select->add_option("--threshold", sel.threshold, "Keep candidates with Self-BLEU strictly below this (default 35)");
  sel.bleu.add_to(select);

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score system outputs against single or multiple references");
  sc.corpus.add_to(score);
  score->add_option("--metrics", sc.metrics, "bleu, spbleu, chrf, rouge1, rouge2, rougeL (comma separated)");
  score->add_option("--refs", sc.refs, "Reference set (default: both for segments, generated for systems)")
      ->check(CLI::IsMember({"gold", "generated", "both"}));
  score->add_option("--max-refs", sc.max_refs, "Use at most K references per segment")->check(CLI::PositiveNumber);
  score->add_option("--sweep-refs", sc.sweep, "System-level scores for every reference count in a..b");
  score->add_option("--vocab", sc.vocab, "Subword vocabulary for spbleu")->check(CLI::ExistingFile);
  score->add_option("--out", sc.out, "Scores (JSONL)");
  score->add_option("--matrix", sc.matrix, "Per-reference score matrix (JSONL)");
  score->add_option("--series", sc.series, "Sweep series as CSV");
  score->add_option("--chrf-order", sc.chrf_order, "chrF character n-gram order")->check(CLI::PositiveNumber);
  score->add_option("--chrf-beta", sc.chrf_beta, "chrF recall weight")->check(CLI::PositiveNumber);
  sc.bleu.add_to(score);

  CombineArgs cb;
  auto* comb = app.add_subcommand("combine", "Combine per-reference scores (max, mean, topk:K)");
  comb->add_option("--matrix", cb.matrix, "matrix.jsonl")->required()->check(CLI::ExistingFile);
  comb->add_option("--policy", cb.policy, "max, mean or topk:<k>");
  comb->add_option("--out", cb.out, "Combined scores (JSONL)");
  comb->add_option("--metric", cb.metrics, "Only combine these metrics");

  MetaevalArgs me;
  auto* meta = app.add_subcommand("metaeval", "Correlate metric scores with human judgments");
  meta->add_option("--scores", me.scores, "Metric scores, one file per language pair")
      ->required()
      ->check(CLI::ExistingFile);
  meta->add_option("--human", me.human, "Human judgments, one file per language pair")
      ->required()
      ->check(CLI::ExistingFile);
  meta->add_option("--lp", me.lps, "Language pair names (default: human file stems)");
  meta->add_option("--metric", me.metrics, "Only evaluate these metrics");
  meta->add_option("--out", me.out, "Report (JSON)");

  DiversityArgs dv;
  auto* div = app.add_subcommand("diversity", "DistinctN and unique-token counts per system");
  dv.corpus.add_to(div);
  div->add_option("--n", dv.n, "DistinctN order")->check(CLI::PositiveNumber);
  div->add_flag("--include-gold", dv.include_gold, "Add the first gold reference as a row");
  div->add_option("--out", dv.out, "Report (JSON)");

  LeakageArgs lk;
  auto* leak = app.add_subcommand("leakage-report", "Single- vs multi-reference score gaps between systems");
  leak->add_option("--single", lk.single, "Single-reference system scores (JSONL)")->check(CLI::ExistingFile);
  leak->add_option("--multi", lk.multi, "Multi-reference system scores (JSONL)")->check(CLI::ExistingFile);
  leak->add_option("--segments", lk.corpus.segments, "segments.jsonl")->check(CLI::ExistingFile);
  leak->add_option("--outputs", lk.corpus.outputs, "System outputs");
  leak->add_option("--generated", lk.corpus.generated, "Generated references")->check(CLI::ExistingFile);
  leak->add_flag("--pretokenized", lk.corpus.pretokenized, "Text is already tokenized");
  leak->add_option("--metric", lk.metric, "bleu, spbleu or chrf (or the metric name in the score files)");
  leak->add_option("--pair", lk.pairs, "System pair A:B (repeatable)")->required();
  leak->add_flag("--multi-use-gold", lk.multi_use_gold, "Include the gold reference in the multi-reference set");
  leak->add_option("--vocab", lk.vocab, "Subword vocabulary for spbleu")->check(CLI::ExistingFile);
  leak->add_option("--out", lk.out, "Report (JSON)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*generate) return cmd_generate(gen, global, out, err);
    if (*select) return cmd_select(sel, global, out, err);
    if (*score) return cmd_score(sc, global, out, err);
    if (*comb) return cmd_combine(cb, global, out, err);
    if (*meta) return cmd_metaeval(me, global, out, err);
    if (*div) return cmd_diversity(dv, global, out, err);
    if (*leak) return cmd_leakage(lk, global, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace llmref::cli

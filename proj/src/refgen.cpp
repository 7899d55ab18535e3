#include "llmref/refgen.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include "llmref/error.hpp"

namespace llmref::refgen {
namespace {

using nlohmann::json;

constexpr std::string_view kEnglishTranslationRules =
    "You are a professional translator with native fluency in the target language.\n"
    "Follow these rules:\n"
    "- Preserve the full meaning of the source; do not add or omit information.\n"
    "- Write fluent, natural text that an expert human translator would produce.\n"
    "- Make the candidates differ from each other in wording and sentence structure.\n"
    "- Return only a numbered list with one candidate per line and no commentary.";

constexpr std::string_view kEnglishSummarizationRules =
    "You are a professional editor who writes concise news summaries.\n"
    "Follow these rules:\n"
    "- Cover the key facts of the article and nothing that is not supported by it.\n"
    "- Write fluent, coherent text of a few sentences.\n"
    "- Make the candidates differ from each other in wording and sentence structure.\n"
    "- Return only a numbered list with one candidate per line and no commentary.";

constexpr std::string_view kChineseTranslationRules =
    "你是一名专业翻译，精通目标语言。\n"
    "请遵守以下规则：\n"
    "- 完整保留原文含义，不增不减。\n"
    "- 译文流畅自然，符合专业译者的表达习惯。\n"
    "- 各候选译文在用词和句式上应有所不同。\n"
    "- 只输出编号列表，每行一个候选，不要附加任何说明。";

constexpr std::string_view kChineseSummarizationRules =
    "你是一名专业编辑，擅长撰写简洁的新闻摘要。\n"
    "请遵守以下规则：\n"
    "- 涵盖文章的关键事实，不添加文章未提及的内容。\n"
    "- 摘要流畅连贯，篇幅为几句话。\n"
    "- 各候选摘要在用词和句式上应有所不同。\n"
    "- 只输出编号列表，每行一个候选，不要附加任何说明。";

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string ground_truth_label(Language language) {
  return language == Language::kChinese ? "参考答案：" : "Ground Truth:";
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Language language_from_string(const std::string& s) {
  if (s == "english") return Language::kEnglish;
  if (s == "chinese") return Language::kChinese;
  if (s == "custom") return Language::kCustom;
  throw InvalidArgument("unknown prompt language '" + s + "'");
}

Task task_from_string(const std::string& s) {
  if (s == "translation") return Task::kTranslation;
  if (s == "summarization") return Task::kSummarization;
  throw InvalidArgument("unknown task '" + s + "'");
}

class RateLimiter {
 public:
  explicit RateLimiter(double per_minute)
      : interval_(per_minute > 0 ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                       std::chrono::duration<double>(60.0 / per_minute))
                                 : std::chrono::steady_clock::duration::zero()) {}

  void wait() {
    if (interval_ == std::chrono::steady_clock::duration::zero()) return;
    std::unique_lock lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    const auto slot = std::max(now, next_);
    next_ = slot + interval_;
    lock.unlock();
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::steady_clock::duration interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

}  // namespace

void PromptTemplate::validate() const {
  if (count_occurrences(task_description, kCountPlaceholder) != 1) {
    throw InvalidArgument("task description must contain exactly one {n} placeholder");
  }
  if (count_occurrences(task_description, kSourcePlaceholder) != 1) {
    throw InvalidArgument("task description must contain exactly one {source} placeholder");
  }
}

PromptTemplate default_template(Language language, Task task) {
  PromptTemplate t;
  t.language = language;
  const bool zh = language == Language::kChinese;
  if (task == Task::kTranslation) {
    t.rules = std::string(zh ? kChineseTranslationRules : kEnglishTranslationRules);
    t.task_description = zh ? "请为以下文本提供{n}个高质量的译文：\n{source}"
                            : "Please provide {n} high-quality translations of the following text:\n{source}";
  } else {
    t.rules = std::string(zh ? kChineseSummarizationRules : kEnglishSummarizationRules);
    t.task_description = zh ? "请为以下文章提供{n}个高质量的摘要：\n{source}"
                            : "Please provide {n} high-quality summaries of the following article:\n{source}";
  }
  return t;
}

std::string build_prompt(const PromptTemplate& t, const std::string& source,
                         const std::optional<std::string>& ground_truth, std::size_t n) {
  t.validate();
  if (n == 0) throw InvalidArgument("number of requested candidates must be >= 1");
  if (ground_truth.has_value() != t.include_ground_truth) {
    throw InvalidArgument(t.include_ground_truth ? "template requires a ground truth but none was given"
                                                 : "ground truth given but the template excludes it");
  }
  // Substitute by template position so placeholders inside `source` stay literal.
  std::string task;
  const std::string& d = t.task_description;
  std::size_t pos = 0;
  while (pos < d.size()) {
    if (d.compare(pos, kCountPlaceholder.size(), kCountPlaceholder) == 0) {
      task += std::to_string(n);
      pos += kCountPlaceholder.size();
    } else if (d.compare(pos, kSourcePlaceholder.size(), kSourcePlaceholder) == 0) {
      task += source;
      pos += kSourcePlaceholder.size();
    } else {
      task += d[pos++];
    }
  }
  std::string prompt;
  if (!t.rules.empty()) prompt = t.rules + "\n\n";
  prompt += task;
  if (ground_truth) prompt += "\n\n" + ground_truth_label(t.language) + "\n" + *ground_truth;
  return prompt;
}

std::vector<std::string> parse_candidates(const std::string& raw, std::size_t expected_n) {
  if (trim(raw).empty()) throw MalformedResponse("empty response");
  static const std::regex kNumbered(R"(^\s*\(?(\d{1,3})\s*[.)](?:\s+|$)(.*)$)");
  std::vector<std::string> numbered;
  std::vector<std::string> lines;
  bool any_numbered = false;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, kNumbered)) {
      any_numbered = true;
      std::string item = trim(m[2].str());
      if (!item.empty()) numbered.push_back(std::move(item));
      continue;
    }
    std::string item = trim(line);
    if (!item.empty()) lines.push_back(std::move(item));
  }
  std::vector<std::string>& found = any_numbered ? numbered : lines;
  if (found.size() != expected_n) {
    throw MalformedResponse("expected " + std::to_string(expected_n) + " candidates, parsed " +
                            std::to_string(found.size()) + (any_numbered ? " numbered items" : " lines"));
  }
  return std::move(found);
}

json to_wire_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", request.model}, {"messages", std::move(messages)}};
}

std::string mock_paraphrase_list(const std::string& segment_id, const std::string& source, std::size_t n) {
  std::vector<std::string> words;
  {
    std::istringstream in(source);
    std::string w;
    while (in >> w) words.push_back(w);
  }
  if (words.empty()) words.push_back("...");
  std::string out;
  for (std::size_t k = 0; k < n; ++k) {
    std::mt19937_64 rng(fnv1a(segment_id + "#" + std::to_string(k)));
    std::vector<std::string> v = words;
    if (v.size() >= 2) {
      const std::size_t swaps = 1 + rng() % 2;
      for (std::size_t s = 0; s < swaps; ++s) {
        const std::size_t i = rng() % (v.size() - 1);
        std::swap(v[i], v[i + 1]);
      }
    }
    if (v.size() >= 4 && rng() % 3 == 0) v.erase(v.begin() + 1 + static_cast<std::ptrdiff_t>(rng() % (v.size() - 1)));
    out += std::to_string(k + 1) + ". ";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + v[i];
    out += "\n";
  }
  return out;
}

std::unique_ptr<MockTransport> MockTransport::from_url(const std::string& url) {
  constexpr std::string_view kScheme = "mock://";
  if (url.rfind(kScheme, 0) != 0) throw InvalidArgument("not a mock endpoint: " + url);
  const std::string mode = url.substr(kScheme.size());
  if (mode.empty() || mode == "paraphrase") return std::make_unique<MockTransport>(Mode::kParaphrase);
  if (mode == "garbage") return std::make_unique<MockTransport>(Mode::kGarbage);
  if (mode == "flaky") return std::make_unique<MockTransport>(Mode::kFlaky);
  throw InvalidArgument("unknown mock mode '" + mode + "' (paraphrase, garbage, flaky)");
}

std::string MockTransport::complete(const ChatRequest& request) {
  const bool garbage = mode_ == Mode::kGarbage || (mode_ == Mode::kFlaky && request.attempt == 1);
  if (garbage) return "\n";
  return mock_paraphrase_list(request.segment_id, request.source, request.n_candidates);
}

void GenerationConfig::validate() const {
  if (n_references < 1) throw InvalidArgument("n_references must be >= 1");
  if (concurrency < 1) throw InvalidArgument("concurrency must be >= 1");
  if (requests_per_minute < 0) throw InvalidArgument("requests_per_minute must be >= 0");
  if (model_name.empty()) throw InvalidArgument("model name must be set");
  if (endpoint_url.empty()) throw InvalidArgument("endpoint URL must be set");
}

GenerationConfig generation_config_from_json(const json& j, PromptTemplate* tmpl) {
  GenerationConfig cfg;
  if (!j.is_object()) throw InvalidArgument("generation config must be a JSON object");
  cfg.endpoint_url = j.value("endpoint", cfg.endpoint_url);
  cfg.model_name = j.value("model", cfg.model_name);
  cfg.n_references = j.value("n_references", cfg.n_references);
  cfg.max_retries = j.value("max_retries", cfg.max_retries);
  cfg.timeout = std::chrono::seconds(j.value("timeout_seconds", static_cast<long long>(cfg.timeout.count())));
  cfg.concurrency = j.value("concurrency", cfg.concurrency);
  cfg.requests_per_minute = j.value("requests_per_minute", cfg.requests_per_minute);
  cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
  if (tmpl != nullptr && j.contains("template")) {
    const json& t = j.at("template");
    const Language language = language_from_string(t.value("language", std::string("english")));
    const Task task = task_from_string(t.value("task", std::string("translation")));
    PromptTemplate out = default_template(language == Language::kCustom ? Language::kEnglish : language, task);
    out.language = language;
    out.rules = t.value("rules", out.rules);
    out.task_description = t.value("task_description", out.task_description);
    out.include_ground_truth = t.value("include_ground_truth", out.include_ground_truth);
    out.validate();
    *tmpl = std::move(out);
  }
  cfg.validate();
  return cfg;
}

json to_json(const GenerationRecord& r) {
  json j = {{"segment_id", r.segment_id},
            {"prompt", r.prompt_used},
            {"raw_response", r.raw_response},
            {"candidates", r.candidates},
            {"attempt_count", r.attempt_count},
            {"timestamp", r.timestamp},
            {"status", r.status == RecordStatus::kOk ? "ok" : "failed"},
            {"model", r.model}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

GenerationRecord record_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("generation record must be a JSON object");
  GenerationRecord r;
  r.segment_id = j.at("segment_id").get<std::string>();
  r.candidates = j.at("candidates").get<std::vector<std::string>>();
  r.prompt_used = j.value("prompt", std::string());
  r.raw_response = j.value("raw_response", std::string());
  r.attempt_count = j.value("attempt_count", std::size_t{0});
  r.timestamp = j.value("timestamp", std::string());
  r.model = j.value("model", std::string());
  r.error = j.value("error", std::string());
  const std::string status = j.value("status", std::string("ok"));
  if (status == "ok") {
    r.status = RecordStatus::kOk;
  } else if (status == "failed") {
    r.status = RecordStatus::kFailed;
  } else {
    throw InvalidArgument("unknown record status '" + status + "'");
  }
  return r;
}

RecordSink::RecordSink(const std::filesystem::path& path) {
  bool needs_newline = false;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream in(path, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char last = '\n';
    in.get(last);
    needs_newline = last != '\n';
  }
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for appending");
  // A previous run died mid-line; terminate the fragment so new records stay parseable.
  if (needs_newline) out_ << '\n' << std::flush;
}

void RecordSink::append(const GenerationRecord& record) {
  const std::string line = to_json(record).dump() + "\n";
  std::lock_guard lock(mu_);
  out_ << line << std::flush;
}

std::set<std::string> completed_segments(const std::filesystem::path& log_path) {
  std::set<std::string> done;
  std::ifstream in(log_path, std::ios::binary);
  if (!in) return done;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    GenerationRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception&) {
      // Truncated fragment from an interrupted append.
      continue;
    }
    if (r.status == RecordStatus::kOk && !r.candidates.empty()) done.insert(r.segment_id);
  }
  return done;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

GenerationSummary generate_references(const std::vector<SourceSegment>& segments, const PromptTemplate& tmpl,
                                      const GenerationConfig& cfg, ChatTransport& transport, RecordSink* sink,
                                      const std::set<std::string>& skip) {
  cfg.validate();
  tmpl.validate();
  if (segments.empty()) throw InvalidArgument("no segments to generate references for");

  std::vector<std::optional<GenerationRecord>> results(segments.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> requests{0};
  std::atomic<std::size_t> skipped{0};
  std::atomic<bool> aborted{false};
  std::exception_ptr abort_error;
  std::mutex abort_mu;
  RateLimiter limiter(cfg.requests_per_minute);

  auto worker = [&] {
    while (!aborted.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= segments.size()) return;
      const SourceSegment& seg = segments[i];
      if (skip.contains(seg.id)) {
        ++skipped;
        continue;
      }
      GenerationRecord rec;
      rec.segment_id = seg.id;
      rec.model = cfg.model_name;
      try {
        PromptTemplate t = tmpl;
        std::optional<std::string> gold;
        if (t.include_ground_truth && seg.gold) {
          gold = seg.gold;
        } else {
          t.include_ground_truth = false;
        }
        rec.prompt_used = build_prompt(t, seg.source, gold, cfg.n_references);
        ChatRequest req{cfg.model_name, {{"user", rec.prompt_used}}, seg.id, seg.source, cfg.n_references, 1};
        for (std::size_t attempt = 1; attempt <= 1 + cfg.max_retries; ++attempt) {
          req.attempt = attempt;
          rec.attempt_count = attempt;
          limiter.wait();
          ++requests;
          try {
            rec.raw_response = transport.complete(req);
            rec.candidates = parse_candidates(rec.raw_response, cfg.n_references);
            rec.status = RecordStatus::kOk;
            rec.error.clear();
            break;
          } catch (const MalformedResponse& e) {
            rec.status = RecordStatus::kFailed;
            rec.error = e.what();
          } catch (const TransientTransportError& e) {
            rec.status = RecordStatus::kFailed;
            rec.error = e.what();
          }
        }
      } catch (...) {
        std::lock_guard lock(abort_mu);
        if (!abort_error) abort_error = std::current_exception();
        aborted = true;
        return;
      }
      if (rec.status == RecordStatus::kFailed) rec.candidates.clear();
      rec.timestamp = utc_timestamp();
      if (sink != nullptr) sink->append(rec);
      results[i] = std::move(rec);
    }
  };

  const std::size_t n_threads = std::min(cfg.concurrency, segments.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  if (abort_error) std::rethrow_exception(abort_error);

  GenerationSummary summary;
  summary.requests = requests.load();
  summary.skipped = skipped.load();
  for (auto& r : results) {
    if (!r) continue;
    (r->status == RecordStatus::kOk ? summary.succeeded : summary.failed) += 1;
    summary.records.push_back(std::move(*r));
  }
  return summary;
}

}  // namespace llmref::refgen

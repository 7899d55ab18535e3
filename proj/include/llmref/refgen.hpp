#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace llmref::refgen {

enum class Language { kEnglish, kChinese, kCustom };
enum class Task { kTranslation, kSummarization };

inline constexpr std::string_view kCountPlaceholder = "{n}";
inline constexpr std::string_view kSourcePlaceholder = "{source}";

// Rules block + task description ({n} and {source} placeholders, each
// exactly once) + optional labeled ground-truth block.
struct PromptTemplate {
  std::string rules;
  std::string task_description;
  bool include_ground_truth = true;
  Language language = Language::kEnglish;

  void validate() const;
};

PromptTemplate default_template(Language language = Language::kEnglish, Task task = Task::kTranslation);

std::string build_prompt(const PromptTemplate& t, const std::string& source,
                         const std::optional<std::string>& ground_truth, std::size_t n);

// Numbered items ("1. x", "1) x") or, when no line is numbered, one
// candidate per non-empty line. Throws MalformedResponse unless exactly
// `expected_n` candidates are found.
std::vector<std::string> parse_candidates(const std::string& raw, std::size_t expected_n);

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  // Not sent on the wire; lets offline transports answer deterministically.
  std::string segment_id;
  std::string source;
  std::size_t n_candidates = 0;
  std::size_t attempt = 1;
};

nlohmann::json to_wire_json(const ChatRequest& request);

// Returns the first choice's message content. Throws TransportError for
// abort-class failures, TransientTransportError for retryable ones.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

class FunctionTransport final : public ChatTransport {
 public:
  explicit FunctionTransport(std::function<std::string(const ChatRequest&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& request) override { return fn_(request); }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

// Offline endpoint selected with "mock://<mode>" URLs:
//   paraphrase  well-formed numbered list of word-order variants of the source
//   garbage     never parseable
//   flaky       garbage on the first attempt of every segment, then valid
class MockTransport final : public ChatTransport {
 public:
  enum class Mode { kParaphrase, kGarbage, kFlaky };
  explicit MockTransport(Mode mode = Mode::kParaphrase) : mode_(mode) {}
  static std::unique_ptr<MockTransport> from_url(const std::string& url);

  std::string complete(const ChatRequest& request) override;

 private:
  Mode mode_;
};

std::string mock_paraphrase_list(const std::string& segment_id, const std::string& source, std::size_t n);

struct GenerationConfig {
  std::string model_name = "gpt-3.5-turbo";
  std::size_t n_references = 40;
  std::string endpoint_url = "https://api.openai.com";
  std::size_t max_retries = 3;
  std::chrono::seconds timeout{120};
  std::size_t concurrency = 1;
  double requests_per_minute = 0.0;  // 0: unlimited
  std::string api_key_env = "OPENAI_API_KEY";

  void validate() const;
};

// Reads the documented JSON config; missing keys keep their defaults.
GenerationConfig generation_config_from_json(const nlohmann::json& j, PromptTemplate* tmpl = nullptr);

enum class RecordStatus { kOk, kFailed };

struct GenerationRecord {
  std::string segment_id;
  std::string prompt_used;
  std::string raw_response;
  std::vector<std::string> candidates;
  std::size_t attempt_count = 0;
  std::string timestamp;
  RecordStatus status = RecordStatus::kOk;
  std::string error;
  std::string model;
};

nlohmann::json to_json(const GenerationRecord& r);
GenerationRecord record_from_json(const nlohmann::json& j);

struct SourceSegment {
  std::string id;
  std::string source;
  std::optional<std::string> gold;
};

// Append-only JSONL log; each record is written and flushed under a lock.
class RecordSink {
 public:
  explicit RecordSink(const std::filesystem::path& path);
  void append(const GenerationRecord& record);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

// Segment ids with a successful record in an existing log (missing file: none).
std::set<std::string> completed_segments(const std::filesystem::path& log_path);

struct GenerationSummary {
  std::vector<GenerationRecord> records;  // in input order, skipped ids omitted
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  std::size_t requests = 0;
};

// One chat call per segment asking for all N candidates. Malformed or
// transient responses are retried up to cfg.max_retries times; a segment that
// exhausts its retries is recorded as failed and the run continues. A
// TransportError aborts the run and is rethrown after in-flight segments
// finish. Ids in `skip` are not requested.
GenerationSummary generate_references(const std::vector<SourceSegment>& segments, const PromptTemplate& tmpl,
                                      const GenerationConfig& cfg, ChatTransport& transport,
                                      RecordSink* sink = nullptr, const std::set<std::string>& skip = {});

std::string utc_timestamp();

}  // namespace llmref::refgen

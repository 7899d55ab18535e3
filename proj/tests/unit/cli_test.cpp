#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "llmref/cli.hpp"
#include "llmref/corpus_io.hpp"
#include "oracles.hpp"

using namespace llmref;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int rc;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int rc = cli::run(args, out, err);
  return {rc, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

const corpus::MetricScoreRow* system_row(const std::vector<corpus::MetricScoreRow>& rows, const std::string& sys,
                                         const std::string& metric) {
  for (const auto& r : rows) {
    if (r.system == sys && !r.segment && r.metric == metric) return &r;
  }
  return nullptr;
}

// Two systems, three segments, one gold reference each.
void write_small_corpus(const fixtures::TempDir& dir) {
  write(dir / "segments.jsonl",
        R"({"id":"1","source":"s","gold_refs":["the cat sat on the mat"]})"
        "\n"
        R"({"id":"2","source":"s","gold_refs":["there is a dog in the garden"]})"
        "\n"
        R"({"id":"3","source":"s","gold_refs":["it rains a lot in spring"]})"
        "\n");
  write(dir / "outputs.jsonl",
        R"({"system":"A","segment":"1","hypothesis":"the cat sat on a mat"})"
        "\n"
        R"({"system":"A","segment":"2","hypothesis":"a dog is in the garden"})"
        "\n"
        R"({"system":"A","segment":"3","hypothesis":"it rains often in spring"})"
        "\n"
        R"({"system":"B","segment":"1","hypothesis":"cat on mat"})"
        "\n"
        R"({"system":"B","segment":"2","hypothesis":"dog garden there"})"
        "\n"
        R"({"system":"B","segment":"3","hypothesis":"spring rain"})"
        "\n");
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).rc, 0);
  EXPECT_EQ(run({}).rc, 1);
  EXPECT_EQ(run({"score", "--no-such-flag"}).rc, 1);
  EXPECT_EQ(run({"frobnicate"}).rc, 1);
}

TEST(Cli, GenerateWithMockAndResume) {
  fixtures::TempDir dir;
  fixtures::write_pipeline_fixture(dir.path(), 4);
  const auto seg = (dir / "segments.jsonl").string();
  const auto out = (dir / "refs.jsonl").string();
  auto r = run({"generate", "--segments", seg, "--out", out, "--endpoint", "mock://paraphrase", "--n", "3"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("4 done"), std::string::npos) << r.out;
  const auto first = read(out);
  const auto records = corpus::load_records(out);
  ASSERT_EQ(records.size(), 4u);
  for (const auto& rec : records) EXPECT_EQ(rec.candidates.size(), 3u);

  r = run({"generate", "--segments", seg, "--out", out, "--endpoint", "mock://paraphrase", "--n", "3"});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.out.find("4 skipped"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("0 requests"), std::string::npos) << r.out;
  EXPECT_EQ(read(out), first);
}

TEST(Cli, GenerateGarbageIsRecordedAsFailure) {
  fixtures::TempDir dir;
  fixtures::write_pipeline_fixture(dir.path(), 2);
  const auto out = (dir / "refs.jsonl").string();
  const auto r = run({"generate", "--segments", (dir / "segments.jsonl").string(), "--out", out, "--endpoint",
                      "mock://garbage", "--max-retries", "1"});
  EXPECT_EQ(r.rc, 0) << r.err;
  for (const auto& rec : corpus::load_records(out)) EXPECT_EQ(rec.status, refgen::RecordStatus::kFailed);
}

TEST(Cli, GenerateWithoutApiKeyAborts) {
  fixtures::TempDir dir;
  fixtures::write_pipeline_fixture(dir.path(), 2);
  ::unsetenv("LLMREF_CLI_TEST_KEY_UNSET");
  const auto r = run({"generate", "--segments", (dir / "segments.jsonl").string(), "--out",
                      (dir / "refs.jsonl").string(), "--endpoint", "http://127.0.0.1:9", "--model", "m",
                      "--api-key-env", "LLMREF_CLI_TEST_KEY_UNSET"});
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.err.find("LLMREF_CLI_TEST_KEY_UNSET"), std::string::npos) << r.err;
}

TEST(Cli, SelectThresholdExtremes) {
  fixtures::TempDir dir;
  fixtures::write_pipeline_fixture(dir.path(), 3);
  const auto refs = (dir / "refs.jsonl").string();
  ASSERT_EQ(run({"generate", "--segments", (dir / "segments.jsonl").string(), "--out", refs, "--endpoint",
                 "mock://paraphrase", "--n", "5"})
                .rc,
            0);
  const auto all = corpus::load_records(refs);

  const auto sel0 = (dir / "sel0.jsonl").string();
  const auto rep0 = (dir / "rep0.jsonl").string();
  ASSERT_EQ(run({"select", "--refs", refs, "--out", sel0, "--report", rep0, "--threshold", "0"}).rc, 0);
  for (const auto& rec : corpus::load_records(sel0)) EXPECT_EQ(rec.candidates.size(), 1u);
  for (const auto& row : read_jsonl(rep0)) EXPECT_TRUE(row.at("fallback").get<bool>());

  const auto sel101 = (dir / "sel101.jsonl").string();
  ASSERT_EQ(run({"select", "--refs", refs, "--out", sel101, "--threshold", "101"}).rc, 0);
  const auto kept = corpus::load_records(sel101);
  ASSERT_EQ(kept.size(), all.size());
  for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(kept[i].candidates, all[i].candidates);
}

TEST(Cli, ScoreIdentityCorpusIsPerfect) {
  fixtures::TempDir dir;
  write(dir / "segments.jsonl",
        "{\"id\":\"1\",\"source\":\"s\",\"gold_refs\":[\"a b c d e\"]}\n"
        "{\"id\":\"2\",\"source\":\"s\",\"gold_refs\":[\"f g h i j k\"]}\n");
  write(dir / "outputs.jsonl",
        "{\"system\":\"A\",\"segment\":\"1\",\"hypothesis\":\"a b c d e\"}\n"
        "{\"system\":\"A\",\"segment\":\"2\",\"hypothesis\":\"f g h i j k\"}\n");
  const auto out = (dir / "scores.jsonl").string();
  const auto r = run({"score", "--segments", (dir / "segments.jsonl").string(), "--outputs",
                      (dir / "outputs.jsonl").string(), "--metrics", "bleu,chrf,rouge1,rougeL", "--out", out});
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const auto& row : corpus::load_metric_scores(out)) EXPECT_NEAR(row.score, 100.0, 1e-9) << row.metric;
}

TEST(Cli, ScoreMatchesOracle) {
  fixtures::TempDir dir;
  write_small_corpus(dir);
  const auto out = (dir / "scores.jsonl").string();
  ASSERT_EQ(run({"score", "--segments", (dir / "segments.jsonl").string(), "--outputs",
                 (dir / "outputs.jsonl").string(), "--metrics", "bleu", "--out", out})
                .rc,
            0);
  const auto rows = corpus::load_metric_scores(out);
  const auto toks = [](const std::string& s) {
    std::vector<std::string> v;
    std::istringstream in(s);
    for (std::string w; in >> w;) v.push_back(w);
    return v;
  };
  const auto c = corpus::load_corpus(dir / "segments.jsonl", std::vector<fs::path>{dir / "outputs.jsonl"});
  for (const auto& [sys, hyps] : c.systems()) {
    std::vector<std::vector<std::string>> h;
    std::vector<std::vector<std::vector<std::string>>> refs;
    for (const auto& s : c.segments()) {
      h.push_back(toks(hyps.at(s.id)));
      refs.push_back({toks(s.gold_refs[0])});
      for (const auto& row : rows) {
        if (row.system == sys && row.segment == s.id) {
          EXPECT_NEAR(row.score, oracle::bleu({h.back()}, {refs.back()}), 1e-9) << sys << " " << s.id;
        }
      }
    }
    const auto* row = system_row(rows, sys, "bleu");
    ASSERT_NE(row, nullptr);
    EXPECT_NEAR(row->score, oracle::corpus_bleu(h, refs), 1e-9) << sys;
  }
  EXPECT_GT(system_row(rows, "A", "bleu")->score, system_row(rows, "B", "bleu")->score);
}

TEST(Cli, ScoreSweepEmitsOneRowPerCount) {
  fixtures::TempDir dir;
  fixtures::write_pipeline_fixture(dir.path(), 6);
  const auto refs = (dir / "refs.jsonl").string();
  ASSERT_EQ(run({"generate", "--segments", (dir / "segments.jsonl").string(), "--out", refs, "--endpoint",
                 "mock://paraphrase", "--n", "5"})
                .rc,
            0);
  const auto out = (dir / "sweep.jsonl").string();
  const auto series = (dir / "sweep.csv").string();
  const auto r = run({"score", "--segments", (dir / "segments.jsonl").string(), "--outputs",
                      (dir / "outputs.jsonl").string(), "--generated", refs, "--sweep-refs", "1..5", "--out", out,
                      "--series", series});
  ASSERT_EQ(r.rc, 0) << r.err;
  std::map<std::string, std::set<std::size_t>> counts;
  for (const auto& row : corpus::load_metric_scores(out)) {
    EXPECT_FALSE(row.segment.has_value());
    ASSERT_TRUE(row.n_refs.has_value());
    counts[row.system].insert(*row.n_refs);
  }
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [sys, ks] : counts) EXPECT_EQ(ks, (std::set<std::size_t>{1, 2, 3, 4, 5})) << sys;
  EXPECT_FALSE(read(series).empty());
}

TEST(Cli, ScoreRejectsSegmentWithoutReferences) {
  fixtures::TempDir dir;
  write(dir / "segments.jsonl", "{\"id\":\"1\",\"source\":\"s\"}\n");
  write(dir / "outputs.jsonl", "{\"system\":\"A\",\"segment\":\"1\",\"hypothesis\":\"x\"}\n");
  const auto r = run({"score", "--segments", (dir / "segments.jsonl").string(), "--outputs",
                      (dir / "outputs.jsonl").string()});
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("'1'"), std::string::npos) << r.err;
}

TEST(Cli, CombinePoliciesAndErrors) {
  fixtures::TempDir dir;
  write(dir / "matrix.jsonl",
        R"({"system":"A","segment":"1","metric":"m","scores":{"r1":10,"r2":30}})"
        "\n"
        R"({"system":"A","segment":"2","metric":"m","scores":{"r1":50}})"
        "\n");
  const auto m = (dir / "matrix.jsonl").string();
  const auto score_of = [](const fs::path& p, const std::string& seg) {
    for (const auto& row : corpus::load_metric_scores(p)) {
      if (row.segment == seg) return row.score;
    }
    return -1.0;
  };
  ASSERT_EQ(run({"combine", "--matrix", m, "--policy", "max", "--out", (dir / "max.jsonl").string()}).rc, 0);
  ASSERT_EQ(run({"combine", "--matrix", m, "--policy", "mean", "--out", (dir / "mean.jsonl").string()}).rc, 0);
  EXPECT_DOUBLE_EQ(score_of(dir / "max.jsonl", "1"), 30.0);
  EXPECT_DOUBLE_EQ(score_of(dir / "mean.jsonl", "1"), 20.0);
  EXPECT_DOUBLE_EQ(score_of(dir / "max.jsonl", "2"), 50.0);
  EXPECT_DOUBLE_EQ(score_of(dir / "mean.jsonl", "2"), 50.0);
  EXPECT_GE(score_of(dir / "max.jsonl", "1"), score_of(dir / "mean.jsonl", "1"));

  write(dir / "bad.jsonl",
        R"({"system":"A","segment":"1","metric":"m","scores":{"r1":10}})"
        "\n{oops\n");
  const auto r = run({"combine", "--matrix", (dir / "bad.jsonl").string()});
  EXPECT_EQ(r.rc, 1);
  EXPECT_NE(r.err.find("bad.jsonl:2"), std::string::npos) << r.err;
  EXPECT_EQ(run({"combine", "--matrix", m, "--policy", "median"}).rc, 1);
}

TEST(Cli, MetaevalAgreementAndDegenerateInput) {
  fixtures::TempDir dir;
  write(dir / "scores.jsonl",
        "{\"system\":\"A\",\"metric\":\"m\",\"score\":3}\n"
        "{\"system\":\"B\",\"metric\":\"m\",\"score\":2}\n"
        "{\"system\":\"C\",\"metric\":\"m\",\"score\":1}\n");
  write(dir / "human.jsonl",
        "{\"system\":\"A\",\"score\":30}\n{\"system\":\"B\",\"score\":20}\n{\"system\":\"C\",\"score\":10}\n");
  const auto report = (dir / "report.json").string();
  ASSERT_EQ(run({"metaeval", "--scores", (dir / "scores.jsonl").string(), "--human", (dir / "human.jsonl").string(),
                 "--out", report})
                .rc,
            0);
  auto doc = json::parse(read(report));
  EXPECT_DOUBLE_EQ(doc.at("reports")[0].at("pairwise_accuracy").get<double>(), 1.0);
  EXPECT_NEAR(doc.at("reports")[0].at("language_pairs")[0].at("pearson").get<double>(), 1.0, 1e-12);

  // One of three pairs flips.
  write(dir / "human2.jsonl",
        "{\"system\":\"A\",\"score\":20}\n{\"system\":\"B\",\"score\":30}\n{\"system\":\"C\",\"score\":10}\n");
  ASSERT_EQ(run({"metaeval", "--scores", (dir / "scores.jsonl").string(), "--human",
                 (dir / "human2.jsonl").string(), "--out", report})
                .rc,
            0);
  doc = json::parse(read(report));
  EXPECT_NEAR(doc.at("reports")[0].at("pairwise_accuracy").get<double>(), 2.0 / 3.0, 1e-12);

  write(dir / "tied.jsonl",
        "{\"system\":\"A\",\"score\":5}\n{\"system\":\"B\",\"score\":5}\n{\"system\":\"C\",\"score\":5}\n");
  const auto r = run({"metaeval", "--scores", (dir / "scores.jsonl").string(), "--human",
                      (dir / "tied.jsonl").string()});
  EXPECT_EQ(r.rc, 1) << r.out;
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, DiversityAndMissingFile) {
  fixtures::TempDir dir;
  write(dir / "segments.jsonl", "{\"id\":\"1\",\"source\":\"s\",\"gold_refs\":[\"x\"]}\n");
  write(dir / "outputs.jsonl", "{\"system\":\"A\",\"segment\":\"1\",\"hypothesis\":\"word\"}\n");
  const auto out = (dir / "div.json").string();
  const auto r = run({"diversity", "--segments", (dir / "segments.jsonl").string(), "--outputs",
                      (dir / "outputs.jsonl").string(), "--n", "6", "--out", out});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_FALSE(read(out).empty());
  EXPECT_EQ(run({"diversity", "--segments", (dir / "nope.jsonl").string(), "--outputs",
                 (dir / "outputs.jsonl").string()})
                .rc,
            1);
}

TEST(Cli, LeakageReportIdenticalSystemsHaveZeroDeltas) {
  fixtures::TempDir dir;
  write(dir / "single.jsonl",
        "{\"system\":\"A\",\"metric\":\"bleu\",\"score\":20}\n{\"system\":\"B\",\"metric\":\"bleu\",\"score\":20}\n");
  write(dir / "multi.jsonl",
        "{\"system\":\"A\",\"metric\":\"bleu\",\"score\":40}\n{\"system\":\"B\",\"metric\":\"bleu\",\"score\":40}\n");
  const auto out = (dir / "leak.json").string();
  const auto r = run({"leakage-report", "--single", (dir / "single.jsonl").string(), "--multi",
                      (dir / "multi.jsonl").string(), "--pair", "A:B", "--out", out});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto doc = json::parse(read(out));
  ASSERT_EQ(doc.at("leakage").size(), 1u);
  for (const auto& [k, v] : doc.at("leakage")[0].items()) {
    if (k.find("delta") != std::string::npos && v.is_number()) {
      EXPECT_DOUBLE_EQ(v.get<double>(), 0.0) << k;
    }
  }
  EXPECT_NE(r.out.find("+0.00"), std::string::npos) << r.out;
  EXPECT_EQ(run({"leakage-report", "--single", (dir / "single.jsonl").string(), "--multi",
                 (dir / "multi.jsonl").string(), "--pair", "A:Z"})
                .rc,
            1);
}

TEST(Cli, ScoringIsDeterministicAcrossJobCounts) {
  fixtures::TempDir dir;
  fixtures::write_pipeline_fixture(dir.path(), 12);
  const auto score = [&](const std::string& jobs, const std::string& name) {
    const auto out = (dir / name).string();
    EXPECT_EQ(run({"--jobs", jobs, "score", "--segments", (dir / "segments.jsonl").string(), "--outputs",
                   (dir / "outputs.jsonl").string(), "--metrics", "bleu,chrf,rougeL", "--out", out})
                  .rc,
              0);
    return read(out);
  };
  const auto a = score("1", "a.jsonl");
  EXPECT_EQ(a, score("1", "b.jsonl"));
  EXPECT_EQ(a, score("4", "c.jsonl"));
}

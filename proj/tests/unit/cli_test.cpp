#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <sstream>

#include "dsq/pipeline.hpp"
#include "dsq/trace.hpp"
#include "support.hpp"

using namespace dsq;
using testkit::fixture;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(DSQ_CLI_PATH) + " --log-level off " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, ReplayMatchesTheLibrary) {
  testkit::TempDir dir;
  const auto out = dir / "traces.jsonl";
  const auto r = run_cli("--config " + quoted(fixture("configs/replay.json")) + " replay --input " +
                         quoted(fixture("dialogs/appendix.json")) + " --mode guided --out " + quoted(out));
  ASSERT_EQ(r.status, 0) << r.out;

  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = Pipeline::from_config(testkit::fixture_config("configs/replay.json"), http);
  ReplayOptions options;
  options.mode = PipelineMode::Guided;
  std::vector<std::string> expected;
  for (const auto& conv : load_conversations(fixture("dialogs/appendix.json").string())) {
    for (const auto& t : replay_conversation(conv, pipeline, options)) {
      expected.push_back(to_jsonl_line(t));
    }
  }
  std::stringstream in(testkit::read_file(out));
  std::vector<std::string> got;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) got.push_back(line);
  }
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto g = nlohmann::json::parse(got[i]);
    const auto e = nlohmann::json::parse(expected[i]);
    EXPECT_EQ(g.at("query"), e.at("query"));
    EXPECT_EQ(g.at("response"), e.at("response"));
    EXPECT_EQ(g.at("flags"), e.at("flags"));
  }
}

TEST(Cli, TaxonomyReport) {
  testkit::TempDir dir;
  const auto out = dir / "tax.json";
  const auto r = run_cli("eval taxonomy --labels " + quoted(fixture("eval/labels.csv")) + " --out " + quoted(out));
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("IncorrectTopic"), std::string::npos);
  const auto j = nlohmann::json::parse(testkit::read_file(out));
  EXPECT_EQ(j.at("phases").at("ZeroShot").at("total"), 51);
  EXPECT_EQ(j.at("reduction_percent").at("IncorrectTopic"), 75.0);
}

TEST(Cli, StatsReportsRejectedRows) {
  const auto r = run_cli("eval stats --ratings " + quoted(fixture("eval/ratings_bad_row.csv")));
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("ratings_bad_row.csv:3"), std::string::npos) << r.out;
}

TEST(Cli, UsageAndConfigErrorsExitNonZero) {
  EXPECT_NE(run_cli("replay").status, 0);
  EXPECT_NE(run_cli("--config /nonexistent/config.json replay --input x").status, 0);
  EXPECT_NE(run_cli("eval taxonomy --labels " + quoted(fixture("eval/ratings_mixed.csv"))).status, 0);
  EXPECT_EQ(run_cli("--help").status, 0);
}

TEST(Fixtures, ReplayStoresRerecordByteForByte) {
  testkit::TempDir dir;
  const auto written = testkit::record_fixture_stores(dir.path());
  ASSERT_FALSE(written.empty());
  for (const auto& [store, path] : written) {
    EXPECT_EQ(testkit::read_file(path), testkit::read_file(fixture(store)))
        << store << " differs from a fresh recording";
  }
}

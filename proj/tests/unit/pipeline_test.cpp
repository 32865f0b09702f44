#include <gtest/gtest.h>

#include <chrono>

#include "dsq/error.hpp"
#include "dsq/pipeline.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace dsq;

namespace {

Pipeline replay_pipeline(std::shared_ptr<testkit::RecordingHttpClient> http) {
  return Pipeline::from_config(testkit::fixture_config("configs/replay.json"), http);
}

Conversation load_one(const std::string& rel) {
  return load_conversations(testkit::fixture(rel).string()).at(0);
}

}  // namespace

TEST(Pipeline, FallbackLadderProperty) {
  for (const auto& m : testkit::check_fallback_ladder(400, 7)) ADD_FAILURE() << m;
}

TEST(Pipeline, GuidedConjuringTurnMatchesTheWorkedExample) {
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = replay_pipeline(http);
  ReplayOptions opts;
  opts.mode = PipelineMode::Guided;
  const auto traces = replay_conversation(load_one("dialogs/conjuring.json"), pipeline, opts);
  ASSERT_EQ(traces.size(), 1u);
  const auto& t = traces[0];
  EXPECT_EQ(t.turn_index, 1u);
  EXPECT_EQ(t.topic->topic, "The Conjuring");
  EXPECT_EQ(t.directive->text, "I heard the reviews for that movie were really good.");
  EXPECT_EQ(t.query->text, "What are the reviews for The Conjuring?");
  EXPECT_EQ(t.query->directive_used, t.directive->text);
  EXPECT_TRUE(t.response.grounded);
  EXPECT_EQ(t.effective_mode, PipelineMode::Guided);
  EXPECT_TRUE(t.timings_ms.empty());
  EXPECT_EQ(t.params.at("query"), GenerationParams::for_query());
  EXPECT_EQ(t.params.at("response"), GenerationParams::for_response());
  EXPECT_EQ(http->calls(), 0u);
}

TEST(Pipeline, UnguidedAndNoQueryModes) {
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = replay_pipeline(http);
  const auto conv = load_one("dialogs/conjuring.json");
  ReplayOptions opts;
  opts.mode = PipelineMode::Unguided;
  const auto u = replay_conversation(conv, pipeline, opts).at(0);
  EXPECT_EQ(u.effective_mode, PipelineMode::Unguided);
  EXPECT_FALSE(u.directive);
  EXPECT_TRUE(u.query);
  EXPECT_FALSE(u.query->directive_used);

  opts.mode = PipelineMode::NoQuery;
  const auto n = replay_conversation(conv, pipeline, opts).at(0);
  EXPECT_EQ(n.effective_mode, PipelineMode::NoQuery);
  EXPECT_FALSE(n.topic);
  EXPECT_FALSE(n.directive);
  EXPECT_FALSE(n.query);
  EXPECT_FALSE(n.retrieval);
  EXPECT_FALSE(n.response.grounded);
  EXPECT_TRUE(n.flags.fallbacks.empty());
  nlohmann::json j = n;
  for (const char* key : {"topic", "directive", "query", "retrieval"}) {
    EXPECT_TRUE(!j.contains(key) || j[key].is_null()) << key;
  }
  EXPECT_EQ(http->calls(), 0u);
}

TEST(Pipeline, ReplayIsDeterministic) {
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = replay_pipeline(http);
  std::string first, second;
  for (auto* out : {&first, &second}) {
    for (const auto& conv : load_conversations(testkit::fixture("dialogs/appendix.json").string())) {
      for (const auto& t : replay_conversation(conv, pipeline)) *out += to_jsonl_line(t) + "\n";
    }
  }
  EXPECT_EQ(first, second);
}

TEST(Pipeline, GeneratedRepliesReplaceSourceBotTurnsWithoutGoldContext) {
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = replay_pipeline(http);
  ReplayOptions opts;
  opts.use_gold_context = false;
  const auto traces = replay_conversation(load_one("dialogs/service.json"), pipeline, opts);
  ASSERT_EQ(traces.size(), 3u);
  EXPECT_EQ(traces[0].turn_index, 0u);
  EXPECT_EQ(traces[2].turn_index, 4u);
  EXPECT_EQ(traces[1].flags.fallbacks, std::vector<std::string>{"retrieval_empty"});
  EXPECT_EQ(traces[2].flags.fallbacks, std::vector<std::string>{"topic_absent"});
  EXPECT_EQ(traces[2].effective_mode, PipelineMode::NoQuery);
}

TEST(Pipeline, RecordsTimingsFromTheInjectedClock) {
  auto hub = std::make_shared<BackendHub>();
  hub->add_chat("responder", testkit::constant_chat("ok"));
  PipelineConfig config;
  Pipeline pipeline(hub, testkit::default_templates(), config);
  auto now = std::chrono::steady_clock::time_point{};
  pipeline.set_clock([&] {
    now += std::chrono::milliseconds(5);
    return now;
  });
  const auto ctx = DialogContext::from_pairs({{Speaker::User, "hi"}});
  const auto t = pipeline.run_turn(ctx, "s", PipelineMode::NoQuery);
  EXPECT_EQ(t.timings_ms.at("response"), 5.0);
  // Unregistered topic backend: the topic stage fails and the turn continues.
  const auto g = pipeline.run_turn(ctx, "s", PipelineMode::Guided);
  EXPECT_EQ(g.flags.fallbacks, std::vector<std::string>{"topic_error"});
  EXPECT_EQ(g.backends.at("topic"), "topic-model (unregistered)");
}

TEST(Pipeline, ResponderFailureAndHookExceptionsEscape) {
  auto hub = std::make_shared<BackendHub>();
  hub->add_chat("responder", testkit::constant_chat(""));
  Pipeline pipeline(hub, testkit::default_templates(), PipelineConfig{});
  const auto ctx = DialogContext::from_pairs({{Speaker::User, "hi"}});
  EXPECT_THROW(pipeline.run_turn(ctx, "s", PipelineMode::NoQuery), Error);
  EXPECT_THROW(pipeline.run_turn(DialogContext::from_pairs({{Speaker::Bot, "x"}}), "s"), Error);
  pipeline.set_stage_hook([](std::string_view stage) {
    if (stage == "response") throw std::runtime_error("boom");
  });
  EXPECT_THROW(pipeline.run_turn(ctx, "s", PipelineMode::NoQuery), std::runtime_error);
}

TEST(Pipeline, TargetTurnsMustBeUserTurns) {
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = replay_pipeline(http);
  auto conv = load_one("dialogs/conjuring.json");
  conv.target_turns = {0};
  EXPECT_THROW(replay_conversation(conv, pipeline), Error);
}

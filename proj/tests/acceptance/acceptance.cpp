// One line per acceptance criterion; exit status is non-zero if any fails.

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dsq/error.hpp"
#include "dsq/eval/judge.hpp"
#include "dsq/eval/stats.hpp"
#include "dsq/eval/taxonomy.hpp"
#include "dsq/pipeline.hpp"
#include "dsq/service.hpp"
#include "dsq/session.hpp"
#include "dsq/woi.hpp"
#include "golden.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace dsq;
using testkit::fixture;

namespace {

using Failures = std::vector<std::string>;

void expect(Failures& f, bool ok, const std::string& what) {
  if (!ok) f.push_back(what);
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// --- replay end to end ------------------------------------------------------

Failures replay_end_to_end() {
  Failures f;
  const std::map<std::string, std::string> expected = {
      {"seventeen", "What are some of Seventeen's most popular social media promotions?"},
      {"carrots", "What are some theories about where carrots originated in Persia?"},
      {"wormrot", "What are some notable live performances by Wormrot?"},
      {"hiking", "What are some popular hiking trails in the AllTrailsPro newsletter?"},
      {"tennis", "What are the best tennis instructors in Miami?"},
  };
  const auto start = std::chrono::steady_clock::now();
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto pipeline = Pipeline::from_config(testkit::fixture_config("configs/replay.json"), http);
  ReplayOptions options;
  options.mode = PipelineMode::Guided;
  std::set<std::string> seen;
  for (const auto& conv : load_conversations(fixture("dialogs/appendix.json").string())) {
    const auto traces = replay_conversation(conv, pipeline, options);
    expect(f, traces.size() == 1, conv.id + ": expected one target turn");
    for (const auto& t : traces) {
      const auto it = expected.find(conv.id);
      if (it == expected.end()) {
        f.push_back("unexpected conversation " + conv.id);
        continue;
      }
      seen.insert(conv.id);
      expect(f, t.query && t.query->text == it->second,
             conv.id + ": query '" + (t.query ? t.query->text : "<none>") + "'");
      expect(f, t.effective_mode == PipelineMode::Guided, conv.id + ": not guided");
      expect(f, t.response.grounded, conv.id + ": reply not grounded");
      expect(f, t.flags.fallbacks.empty(), conv.id + ": fallbacks taken");
    }
  }
  expect(f, seen.size() == expected.size(), "not every appendix dialog replayed");
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  expect(f, elapsed.count() < 5.0, "replay took " + std::to_string(elapsed.count()) + " s");
  expect(f, http->calls() == 0, std::to_string(http->calls()) + " network calls");
  return f;
}

// --- golden prompts -----------------------------------------------------------

Failures golden_prompts() {
  Failures f;
  for (const auto& m : testkit::check_golden_prompts()) f.push_back(m.name + ": " + m.detail);
  return f;
}

// --- stats oracles ------------------------------------------------------------

// Rank by counting: rank = 1 + #smaller + (#equal - 1) / 2.
std::vector<long double> brute_ranks(const std::vector<double>& v) {
  std::vector<long double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    long double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    r[i] = 1.0L + less + (equal - 1.0L) / 2.0L;
  }
  return r;
}

long double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = brute_ranks(x);
  const auto ry = brute_ranks(y);
  const long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxy += rx[i] * ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

bool is_constant(const std::vector<double>& v) {
  for (double x : v) {
    if (x != v.front()) return false;
  }
  return true;
}

ErrorCode code_of(const std::function<void()>& fn, ErrorCode none) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return none;
}

Failures stats_oracles() {
  Failures f;
  std::mt19937_64 rng(20240901);
  std::size_t checked = 0;
  while (checked < 1000) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 40)(rng);
    const bool ties = rng() % 2 == 0;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (ties) {
        x[i] = static_cast<double>(rng() % 5);
        y[i] = static_cast<double>(rng() % 5);
      } else {
        x[i] = std::uniform_real_distribution<double>(-100, 100)(rng);
        y[i] = std::uniform_real_distribution<double>(-100, 100)(rng);
      }
    }
    if (is_constant(x) || is_constant(y)) continue;
    ++checked;
    const double got = eval::spearman(x, y);
    const long double want = brute_spearman(x, y);
    if (!(std::abs(static_cast<long double>(got) - want) < 1e-9L)) {
      f.push_back("spearman case " + std::to_string(checked) + ": " + std::to_string(got) +
                  " vs " + std::to_string(static_cast<double>(want)));
    }
  }

  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(2 + rng() % 20), b(2 + rng() % 20);
    for (auto& v : a) v = std::uniform_real_distribution<double>(1, 5)(rng);
    for (auto& v : b) v = std::uniform_real_distribution<double>(1, 5)(rng);
    const auto ab = eval::significance_z(a, b);
    const auto ba = eval::significance_z(b, a);
    expect(f, ab.z == -ba.z && ab.significant == ba.significant, "z antisymmetry");
  }

  // Mean 0 and SS 12 against a constant sample: pooled SE is exactly 1, so z
  // equals the mean difference.
  const std::vector<double> a{-3, 1, 1, 1};
  const auto at = eval::significance_z(a, std::vector<double>(4, -3.3));
  expect(f, at.z == 3.3 && !at.significant, "z == 3.3 must not be significant");
  const auto above =
      eval::significance_z(a, std::vector<double>(4, std::nextafter(-3.3, -4.0)));
  expect(f, above.z > 3.3 && above.significant, "z just above 3.3 must be significant");
  const auto neg = eval::significance_z(std::vector<double>(4, -3.3), a);
  expect(f, neg.z == -3.3 && !neg.significant, "z == -3.3 must not be significant");

  // A shift large against the spread is significant.
  std::vector<double> base{3, 4, 5, 4, 3, 5, 4, 4};
  std::vector<double> shifted;
  for (double v : base) shifted.push_back(v + 3.0);
  expect(f, eval::significance_z(shifted, base).significant, "large shift not significant");

  const std::vector<double> one{1.0}, two{1.0, 2.0}, three{1.0, 2.0, 3.0}, flat{2.0, 2.0};
  const auto none = ErrorCode::InvalidArgument;
  expect(f, code_of([&] { eval::spearman(two, three); }, none) == ErrorCode::LengthMismatch,
         "length mismatch");
  expect(f, code_of([&] { eval::spearman(one, one); }, none) == ErrorCode::DegenerateInput,
         "n < 2");
  expect(f, code_of([&] { eval::spearman(flat, two); }, none) == ErrorCode::DegenerateInput,
         "constant vector");
  expect(f, code_of([&] { eval::significance_z(one, two); }, none) == ErrorCode::DegenerateInput,
         "z with one value");
  expect(f, eval::significance_z(flat, flat).z == 0.0, "zero variance, equal means");
  expect(f,
         code_of([&] { eval::significance_z(flat, std::vector<double>{3.0, 3.0}); }, none) ==
             ErrorCode::DegenerateInput,
         "zero variance, different means");
  return f;
}

// --- table arithmetic -----------------------------------------------------------

Failures table_arithmetic() {
  Failures f;
  using eval::ErrorCategory;
  using eval::Phase;
  const auto labels = eval::read_labels_csv(fixture("eval/labels.csv"));
  const auto report = eval::taxonomy_report(labels);
  const auto& zs = report.phases.at(Phase::ZeroShot);
  expect(f, zs.total == 51, "zero-shot total " + std::to_string(zs.total));
  const std::map<ErrorCategory, double> want = {{ErrorCategory::IncorrectTopic, 31.4},
                                                {ErrorCategory::TrivialQuery, 29.4},
                                                {ErrorCategory::InstructionMismatch, 23.5},
                                                {ErrorCategory::Other, 15.7}};
  for (const auto& [c, pct] : want) {
    expect(f, near(zs.percent.at(c), pct, 1e-9),
           std::string(to_string(c)) + " " + std::to_string(zs.percent.at(c)));
  }
  expect(f, near(report.reduction_percent.at(ErrorCategory::IncorrectTopic), 75.0, 1e-9),
         "incorrect-topic reduction");

  std::vector<eval::PreferenceJudgment> judgments;
  for (int i = 0; i < 200; ++i) {
    eval::PreferenceJudgment j;
    j.item_id = "p" + std::to_string(i);
    j.winner = i < 114 ? eval::Winner::A : eval::Winner::B;
    judgments.push_back(j);
  }
  const auto tally = eval::tally_preferences(judgments);
  expect(f, tally.a_percent == 57.0 && tally.b_percent == 43.0, "preference 57.0/43.0");

  std::vector<eval::JudgeScore> scores;
  // 50 scores with mean 7.22.
  for (int i = 0; i < 50; ++i) scores.push_back({"s" + std::to_string(i), {}, i < 11 ? 8 : 7});
  expect(f, eval::judge_aggregate(scores) == 72.2, "judge aggregate 72.2");
  std::vector<double> ranks(1000, 0.789);
  expect(f, eval::rank_aggregate(ranks) == 78.9, "rank aggregate 78.9");
  return f;
}

// --- retrieval properties -------------------------------------------------------------

Failures retrieval_properties() {
  Failures f;
  for (auto& m : testkit::check_chunk_coverage(500, 11)) f.push_back("coverage " + m);
  for (auto& m : testkit::check_selection_argmax(500, 12)) f.push_back("argmax " + m);
  for (auto& m : testkit::check_selection_permutation(500, 13)) f.push_back("permutation " + m);
  return f;
}

// --- data pipeline ------------------------------------------------------------

Failures data_pipeline() {
  Failures f;
  const auto dataset = woi::ingest(fixture("woi/mini.jsonl"));
  expect(f, dataset.conversation_count() == 3, "conversation count");
  expect(f, dataset.turn_count() == 15, "turn count " + std::to_string(dataset.turn_count()));
  const auto turns = woi::select_search_turns(dataset);
  expect(f, turns.size() == 6, "search turns " + std::to_string(turns.size()));
  std::set<std::string> kept;
  for (const auto& t : woi::filter_passive(turns)) {
    kept.insert(t.turn.conversation_id + "#" + std::to_string(t.turn.turn_index));
  }
  const std::set<std::string> want_kept = {"woi-seventeen#1", "woi-seventeen#3", "woi-hiking#2"};
  expect(f, kept == want_kept, "passive filter kept the wrong turns");

  auto run = [&](std::shared_ptr<testkit::RecordingHttpClient> http) {
    const auto config = testkit::fixture_config("configs/finetune.replay.json");
    const auto hub = build_backend_hub(config, http);
    woi::FinetuneOptions options;
    options.sample_size = 20000;
    options.seed = 17;
    options.parallelism = 4;
    return woi::build_finetune_set(turns, hub, testkit::default_templates(), options);
  };
  auto http = std::make_shared<testkit::RecordingHttpClient>();
  const auto first = run(http);
  const auto second = run(http);
  const auto a = woi::to_jsonl(first.examples);
  const auto b = woi::to_jsonl(second.examples);
  expect(f, !first.examples.empty(), "no finetune examples");
  expect(f, a == b, "finetune export differs between runs");
  expect(f, first.skipped == 0, "skipped examples");
  expect(f, http->calls() == 0, "finetune touched the network");
  return f;
}

// --- fallback ladder -------------------------------------------------------------

Failures fallback_ladder() { return testkit::check_fallback_ladder(600, 21); }

// --- service contract ----------------------------------------------------------------

struct ServiceRig {
  std::shared_ptr<testkit::RecordingHttpClient> http = std::make_shared<testkit::RecordingHttpClient>();
  std::shared_ptr<Pipeline> pipeline;
  std::shared_ptr<SessionStore> store;
  std::shared_ptr<SessionManager> sessions;

  explicit ServiceRig(const std::filesystem::path& dir) {
    pipeline = std::make_shared<Pipeline>(
        Pipeline::from_config(testkit::fixture_config("configs/replay.json"), http));
    store = std::make_shared<SessionStore>(dir);
    sessions = std::make_shared<SessionManager>(pipeline, store);
  }
};

Failures service_contract() {
  Failures f;
  testkit::TempDir dir;
  const std::vector<std::string> texts = {
      "I watched The Conjuring last night and I could not sleep after that.",
      "The doll scene was the worst part for me.",
      "I think I will stick to comedies for a while."};
  {
    ServiceRig rig(dir.path());
    ChatService service(rig.sessions);
    const int port = service.start_background();
    httplib::Client client("127.0.0.1", port);
    auto created = client.Post("/sessions", R"({"mode":"guided"})", "application/json");
    expect(f, created && created->status == 201, "create session");
    if (!created || created->status != 201) return f;
    const auto id = nlohmann::json::parse(created->body).at("id").get<std::string>();
    for (const auto& text : texts) {
      auto r = client.Post("/sessions/" + id + "/turns", nlohmann::json{{"text", text}}.dump(),
                           "application/json");
      expect(f, r && r->status == 200, "turn: " + text);
      if (r && r->status == 200) {
        const auto body = nlohmann::json::parse(r->body);
        expect(f, !body.at("response").at("text").get<std::string>().empty(), "empty response");
        expect(f, body.at("trace").at("user_text") == text, "trace user text");
      }
    }
    auto history = client.Get("/sessions/" + id);
    expect(f, history && history->status == 200, "history");
    if (history && history->status == 200) {
      const auto h = nlohmann::json::parse(history->body);
      const auto& turns = h.at("turns");
      expect(f, turns.size() == 6, "history has three exchanges");
      for (std::size_t i = 0; i < turns.size() && i < 6; ++i) {
        expect(f, turns[i].at("speaker") == (i % 2 ? "bot" : "user"), "history speakers");
        expect(f, turns[i].at("turn_index") == i, "history indices");
        if (i % 2 == 0) expect(f, turns[i].at("text") == texts[i / 2], "history order");
      }
    }
    auto traces = client.Get("/sessions/" + id + "/traces");
    expect(f, traces && traces->status == 200, "traces");
    if (traces && traces->status == 200) {
      const auto t = nlohmann::json::parse(traces->body).at("traces");
      expect(f, t.size() == 3, "three traces");
      if (t.size() == 3) {
        expect(f, t[0].at("topic").at("topic") == "The Conjuring", "first topic");
        expect(f, t[0].at("effective_mode") == "guided", "first turn guided");
        expect(f, t[1].at("flags").at("fallbacks") == nlohmann::json{"retrieval_empty"},
               "second turn falls back on empty search");
        expect(f, t[2].at("effective_mode") == "noquery", "third turn without a topic");
      }
    }
    auto missing = client.Get("/sessions/s-doesnotexist");
    expect(f, missing && missing->status == 404, "unknown session is 404");
    auto bad = client.Post("/sessions/" + id + "/turns", "{}", "application/json");
    expect(f, bad && bad->status == 400, "missing text is 400");
    service.stop();
    expect(f, rig.http->calls() == 0, "service touched the network");
  }

  // Crash between stages: nothing of the interrupted turn is committed.
  const std::string stages[] = {"topic", "directive", "query", "retrieval", "response"};
  for (const auto& crash_stage : stages) {
    testkit::TempDir crash_dir;
    std::string id;
    {
      ServiceRig rig(crash_dir.path());
      id = rig.sessions->create(PipelineMode::Guided).id;
      rig.sessions->step(id, texts[0]);
      rig.pipeline->set_stage_hook([&](std::string_view stage) {
        if (stage == crash_stage) throw std::runtime_error("crash in " + crash_stage);
      });
      bool threw = false;
      try {
        rig.sessions->step(id, texts[1]);
      } catch (const std::exception&) {
        threw = true;
      }
      expect(f, threw, crash_stage + ": crash did not surface");
      expect(f, rig.sessions->get(id).turns.size() == 1, crash_stage + ": memory advanced");
    }
    ServiceRig reopened(crash_dir.path());
    const auto state = reopened.store->load(id);
    expect(f, state && state->turns.size() == 1, crash_stage + ": store not at previous turn");
    // The session continues from the committed turn.
    const auto next = reopened.sessions->step(id, texts[1]);
    expect(f, next.turn_index == 2, crash_stage + ": resumed at the wrong turn");
  }

  // A failed store write leaves the previous turn as the last committed one.
  {
    testkit::TempDir write_dir;
    ServiceRig rig(write_dir.path());
    const auto id = rig.sessions->create(PipelineMode::Guided).id;
    rig.sessions->step(id, texts[0]);
    rig.store->set_write_hook([](const std::string&) {
      throw Error(ErrorCode::StoreError, "disk full");
    });
    bool threw = false;
    try {
      rig.sessions->step(id, texts[1]);
    } catch (const Error&) {
      threw = true;
    }
    expect(f, threw, "write failure did not surface");
    expect(f, rig.sessions->get(id).turns.size() == 1, "memory advanced past a failed write");
    expect(f, rig.store->load(id)->turns.size() == 1, "store advanced past a failed write");
  }
  return f;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<std::string, std::function<Failures()>>> criteria = {
      {"replay end-to-end", replay_end_to_end},
      {"golden prompts", golden_prompts},
      {"stats oracles", stats_oracles},
      {"table arithmetic", table_arithmetic},
      {"retrieval properties", retrieval_properties},
      {"data pipeline", data_pipeline},
      {"fallback ladder", fallback_ladder},
      {"service contract", service_contract},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Failures failures;
    try {
      failures = check();
    } catch (const std::exception& e) {
      failures.push_back(std::string("threw: ") + e.what());
    }
    std::cout << (failures.empty() ? "PASS" : "FAIL") << "  " << name;
    if (!failures.empty()) {
      ++failed;
      std::cout << "  (" << failures.size() << " problems; first: " << failures.front() << ")";
    }
    std::cout << '\n';
    for (std::size_t i = 1; i < failures.size() && i < 5; ++i) {
      std::cout << "      " << failures[i] << '\n';
    }
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}

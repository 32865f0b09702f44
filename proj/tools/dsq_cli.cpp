#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dsq/config.hpp"
#include "dsq/error.hpp"
#include "dsq/eval/judge.hpp"
#include "dsq/eval/ratings.hpp"
#include "dsq/eval/stats.hpp"
#include "dsq/eval/taxonomy.hpp"
#include "dsq/pipeline.hpp"
#include "dsq/service.hpp"
#include "dsq/session.hpp"
#include "dsq/text.hpp"
#include "dsq/woi.hpp"

namespace {

using namespace dsq;

struct GlobalOptions {
  std::string config_path;
  std::string record_store;
  std::string replay_store;
  std::string log_level = "info";
};

PipelineConfig load_config(const GlobalOptions& g) {
  PipelineConfig config;
  if (!g.config_path.empty()) {
    config = PipelineConfig::from_file(g.config_path);
  } else if (const char* env = std::getenv("DSQ_CONFIG")) {
    config = PipelineConfig::from_file(env);
  } else {
    throw Error(ErrorCode::ConfigError, "no config given (use --config or DSQ_CONFIG)");
  }
  if (!g.record_store.empty() && !g.replay_store.empty()) {
    throw Error(ErrorCode::ConfigError, "--record and --replay are mutually exclusive");
  }
  if (!g.record_store.empty()) {
    config.replay_mode = ReplayMode::Record;
    config.replay_store = g.record_store;
  } else if (!g.replay_store.empty()) {
    config.replay_mode = ReplayMode::Replay;
    config.replay_store = g.replay_store;
  }
  config.validate();
  return config;
}

std::shared_ptr<const PromptTemplates> load_templates(const PipelineConfig& config) {
  auto t = config.template_dir.empty()
               ? PromptTemplates::load_default(config.template_version)
               : PromptTemplates::load(config.template_dir, config.template_version);
  return std::make_shared<const PromptTemplates>(std::move(t));
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::StoreError, "cannot write " + path);
  out << content;
}

std::optional<PipelineMode> parse_mode(const std::string& mode) {
  if (mode.empty()) return std::nullopt;
  return pipeline_mode_from_string(mode);
}

std::string pretty(const nlohmann::json& j) {
  return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------

int run_chat(const GlobalOptions& g, const std::string& mode, bool show_trace) {
  const auto config = load_config(g);
  auto pipeline = std::make_shared<const Pipeline>(Pipeline::from_config(config, make_default_http_client()));
  auto store = std::make_shared<SessionStore>(config.data_dir);
  SessionManager sessions(pipeline, store);
  const auto session = sessions.create(parse_mode(mode));
  std::cerr << "session " << session.id << " (" << session.config["mode"].get<std::string>()
            << "); empty line or EOF to quit\n";
  std::string line;
  while (std::cout << config.tags.user << ": " << std::flush, std::getline(std::cin, line)) {
    if (text::is_blank(line)) break;
    try {
      const auto turn = sessions.step(session.id, line);
      std::cout << config.tags.bot << ": " << turn.bot << '\n';
      if (show_trace) std::cout << pretty(turn.trace) << '\n';
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

ChatService* g_service = nullptr;

int run_serve(const GlobalOptions& g, const std::string& host, int port) {
  const auto config = load_config(g);
  auto pipeline = std::make_shared<const Pipeline>(Pipeline::from_config(config, make_default_http_client()));
  auto sessions =
      std::make_shared<SessionManager>(pipeline, std::make_shared<SessionStore>(config.data_dir));
  ChatService service(sessions);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  if (!service.listen(host, port)) {
    spdlog::error("cannot listen on {}:{}", host, port);
    return 1;
  }
  return 0;
}

int run_replay(const GlobalOptions& g, const std::string& input, const std::string& mode,
               const std::string& out, bool no_gold) {
  const auto config = load_config(g);
  const auto pipeline = Pipeline::from_config(config, make_default_http_client());
  ReplayOptions options;
  options.mode = parse_mode(mode);
  options.use_gold_context = !no_gold;
  std::string lines;
  for (const auto& conv : load_conversations(input)) {
    for (const auto& trace : replay_conversation(conv, pipeline, options)) {
      lines += to_jsonl_line(trace);
      lines += '\n';
    }
  }
  write_output(out, lines);
  return 0;
}

int run_finetune(const GlobalOptions& g, const std::string& woi_path, const std::string& out,
                 std::size_t n, std::uint64_t seed, std::size_t parallelism,
                 const std::string& teacher) {
  const auto config = load_config(g);
  const auto hub = build_backend_hub(config, make_default_http_client());
  const auto dataset = woi::ingest(woi_path);
  const auto turns = woi::select_search_turns(dataset);
  woi::FinetuneOptions options;
  options.sample_size = n;
  options.seed = seed;
  options.parallelism = parallelism;
  options.window_limit = config.window_limit;
  options.tags = config.tags;
  options.teacher = teacher;
  const auto result = woi::build_finetune_set(turns, hub, load_templates(config), options);
  write_output(out, woi::to_jsonl(result.examples));
  std::cerr << "conversations=" << dataset.conversation_count()
            << " turns=" << dataset.turn_count() << " search_turns=" << turns.size()
            << " sampled=" << result.sampled << " exported=" << result.examples.size()
            << " skipped=" << result.skipped << '\n';
  return 0;
}

struct EvalArgs {
  std::string items;
  std::string items_b;
  std::string kind = "query";
  std::string aspect = "overall";
  std::string judge_backend = std::string(backend_ids::kJudge);
  std::string ranker_backend = std::string(backend_ids::kRanker);
  std::string out;
  std::string scores_out;
  std::vector<std::string> ratings;
  std::string judge_scores;
  std::string system_a;
  std::string system_b;
  std::string labels;
  std::size_t parallelism = 8;
};

int run_eval_score(const GlobalOptions& g, const EvalArgs& a) {
  const auto config = load_config(g);
  const auto hub = build_backend_hub(config, make_default_http_client());
  const auto templates = load_templates(config);
  const auto items = eval::load_items(a.items);
  eval::JudgeOptions options;
  options.judge_id = a.judge_backend;
  options.parallelism = a.parallelism;
  const auto scores =
      eval::judge_absolute(items, eval::item_kind_from_string(a.kind), *hub, *templates, options);
  std::string lines;
  for (const auto& s : scores) lines += nlohmann::json(s).dump() + "\n";
  if (!a.scores_out.empty()) write_output(a.scores_out, lines);
  const auto aggregate = eval::judge_aggregate(scores);
  nlohmann::json report = {{"kind", a.kind}, {"items", scores.size()}, {"aggregate", aggregate}};
  if (!a.out.empty()) write_output(a.out, pretty(report) + "\n");
  std::cout << "judge score (mean x10): " << aggregate << " over " << scores.size() << " items\n";
  return 0;
}

int run_eval_prefer(const GlobalOptions& g, const EvalArgs& a) {
  const auto config = load_config(g);
  const auto hub = build_backend_hub(config, make_default_http_client());
  const auto templates = load_templates(config);
  const auto pairs = eval::pair_items(eval::load_items(a.items), eval::load_items(a.items_b));
  eval::JudgeOptions options;
  options.judge_id = a.judge_backend;
  options.parallelism = a.parallelism;
  const auto aspect = eval::preference_aspect_from_string(a.aspect);
  const auto judgments = eval::judge_preference(pairs, aspect, *hub, *templates, options);
  const auto tally = eval::tally_preferences(judgments);
  auto report = tally.to_json();
  report["aspect"] = eval::to_string(aspect);
  report["judgments"] = judgments;
  if (!a.out.empty()) write_output(a.out, pretty(report) + "\n");
  const auto sys_a = pairs.empty() ? std::string("A") : pairs.front().system_a_id;
  const auto sys_b = pairs.empty() ? std::string("B") : pairs.front().system_b_id;
  std::cout << "aspect " << eval::to_string(aspect) << ": " << sys_a << " " << tally.a_percent
            << "% / " << sys_b << " " << tally.b_percent << "% (" << tally.tiebreaks
            << " tie-breaks)\n";
  return 0;
}

int run_eval_rank(const GlobalOptions& g, const EvalArgs& a) {
  const auto config = load_config(g);
  const auto hub = build_backend_hub(config, make_default_http_client());
  const auto items = eval::load_items(a.items);
  const auto scores = eval::rank_responses(items, *hub, a.ranker_backend);
  const auto aggregate = eval::rank_aggregate(scores);
  nlohmann::json report = {{"items", items.size()}, {"scores", scores}, {"aggregate", aggregate}};
  if (!a.out.empty()) write_output(a.out, pretty(report) + "\n");
  std::cout << "ranker score (mean x100): " << aggregate << " over " << items.size() << " items\n";
  return 0;
}

int run_eval_stats(const EvalArgs& a) {
  std::vector<std::filesystem::path> files(a.ratings.begin(), a.ratings.end());
  const auto ratings = eval::ingest_ratings(files);
  nlohmann::json report = ratings.to_json();
  std::cout << ratings.to_table();

  if (!a.judge_scores.empty()) {
    std::map<std::string, double> judge;
    std::ifstream in(a.judge_scores);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + a.judge_scores);
    std::string line;
    while (std::getline(in, line)) {
      if (text::is_blank(line)) continue;
      auto j = nlohmann::json::parse(line);
      judge[j.at("item_id").get<std::string>()] = j.at("raw_score").get<double>();
    }
    std::vector<double> human, model;
    const auto sys = a.system_a;
    auto it = ratings.item_overall.find(sys);
    if (it == ratings.item_overall.end()) {
      throw Error(ErrorCode::NotFound, "no ratings for system '" + sys + "'");
    }
    for (const auto& [item, overall] : it->second) {
      if (auto m = judge.find(item); m != judge.end()) {
        human.push_back(overall);
        model.push_back(m->second);
      }
    }
    const double rho = eval::spearman(human, model);
    report["spearman"] = {{"n", human.size()}, {"rho", rho}};
    std::cout << "spearman(human overall, judge) = " << rho << " over " << human.size()
              << " items\n";
  } else if (!a.system_a.empty() && !a.system_b.empty()) {
    auto values = [&](const std::string& sys) {
      std::vector<double> v;
      auto it = ratings.item_overall.find(sys);
      if (it == ratings.item_overall.end()) {
        throw Error(ErrorCode::NotFound, "no ratings for system '" + sys + "'");
      }
      for (const auto& [_, overall] : it->second) v.push_back(overall);
      return v;
    };
    const auto z = eval::significance_z(values(a.system_a), values(a.system_b));
    report["significance"] = {{"z", z.z}, {"significant", z.significant}};
    std::cout << "z(" << a.system_a << " - " << a.system_b << ") = " << z.z
              << (z.significant ? " (significant)" : " (not significant)") << '\n';
  }
  if (!a.out.empty()) write_output(a.out, pretty(report) + "\n");
  return 0;
}

int run_eval_taxonomy(const EvalArgs& a) {
  const auto report = eval::taxonomy_report(eval::read_labels_csv(a.labels));
  if (!a.out.empty()) write_output(a.out, pretty(report.to_json()) + "\n");
  std::cout << report.to_table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dsq"));

  CLI::App app{"Search query generation for passive dialog turns"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Pipeline config JSON");
  auto* rec = app.add_option("--record", g.record_store, "Record backend traffic to this store");
  auto* rep = app.add_option("--replay", g.replay_store, "Answer backend calls from this store only");
  rec->excludes(rep);
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string mode;
  bool show_trace = false;
  auto* chat = app.add_subcommand("chat", "Interactive chat on stdin");
  chat->add_option("--mode", mode, "guided|unguided|noquery");
  chat->add_flag("--show-trace", show_trace, "Print each turn's trace");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));

  std::string input, out;
  bool no_gold = false;
  auto* replay = app.add_subcommand("replay", "Run the pipeline over conversations and emit traces");
  replay->add_option("--input", input, "Conversation JSON or JSONL")->required();
  replay->add_option("--mode", mode, "guided|unguided|noquery");
  replay->add_option("--out", out, "Trace JSONL output (default stdout)");
  replay->add_flag("--no-gold-context", no_gold,
                   "Feed generated replies into later turns instead of the source bot turns");

  std::string woi_path, teacher = std::string(backend_ids::kTeacher);
  std::size_t n = 20000, parallelism = 8;
  std::uint64_t seed = 17;
  auto* ft = app.add_subcommand("build-finetune-data", "Silver-label finetuning data from WoI");
  ft->add_option("--woi", woi_path, "WoI JSONL file or directory")->required();
  ft->add_option("--out", out, "Export JSONL")->required();
  ft->add_option("--n", n, "Sample size");
  ft->add_option("--seed", seed);
  ft->add_option("--parallelism", parallelism)->check(CLI::Range(1, 64));
  ft->add_option("--teacher", teacher, "Backend id for topic and query labels");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluation tools");
  ev->require_subcommand(1);
  auto* score = ev->add_subcommand("score", "Absolute judge scores (1-10)");
  score->add_option("--items", ea.items, "Candidate JSONL")->required();
  score->add_option("--kind", ea.kind, "query|response");
  score->add_option("--judge-backend", ea.judge_backend);
  score->add_option("--scores-out", ea.scores_out, "Per-item scores JSONL");
  score->add_option("--out", ea.out, "Report JSON");
  score->add_option("--parallelism", ea.parallelism);
  auto* prefer = ev->add_subcommand("prefer", "Pairwise preference with position swap");
  prefer->add_option("--a", ea.items, "Candidates of system A")->required();
  prefer->add_option("--b", ea.items_b, "Candidates of system B")->required();
  prefer->add_option("--aspect", ea.aspect, "relevant|specific|overall");
  prefer->add_option("--judge-backend", ea.judge_backend);
  prefer->add_option("--out", ea.out, "Report JSON");
  prefer->add_option("--parallelism", ea.parallelism);
  auto* rank = ev->add_subcommand("rank", "Ranker scores for responses");
  rank->add_option("--items", ea.items, "Candidate JSONL")->required();
  rank->add_option("--ranker-backend", ea.ranker_backend);
  rank->add_option("--out", ea.out, "Report JSON");
  auto* stats = ev->add_subcommand("stats", "Human rating means, correlation and significance");
  stats->add_option("--ratings", ea.ratings, "Rating CSV files")->required();
  stats->add_option("--judge-scores", ea.judge_scores, "Scores JSONL from eval score");
  stats->add_option("--system-a", ea.system_a);
  stats->add_option("--system-b", ea.system_b);
  stats->add_option("--out", ea.out, "Report JSON");
  auto* tax = ev->add_subcommand("taxonomy", "Error category breakdown");
  tax->add_option("--labels", ea.labels, "Label CSV (item_id,category,phase)")->required();
  tax->add_option("--out", ea.out, "Report JSON");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*chat) return run_chat(g, mode, show_trace);
    if (*serve) return run_serve(g, host, port);
    if (*replay) return run_replay(g, input, mode, out, no_gold);
    if (*ft) return run_finetune(g, woi_path, out, n, seed, parallelism, teacher);
    if (*score) return run_eval_score(g, ea);
    if (*prefer) return run_eval_prefer(g, ea);
    if (*rank) return run_eval_rank(g, ea);
    if (*stats) return run_eval_stats(ea);
    if (*tax) return run_eval_taxonomy(ea);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

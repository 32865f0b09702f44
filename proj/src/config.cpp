#include "dsq/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/live_backends.hpp"

namespace dsq {

namespace {

using KeySet = std::set<std::string, std::less<>>;

void reject_unknown(const nlohmann::json& obj, const KeySet& allowed, std::string_view where) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::ConfigError, std::string(where) + " must be an object");
  }
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      throw Error(ErrorCode::ConfigError,
                  "unknown key '" + key + "' in " + std::string(where));
    }
  }
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || base.empty()) return p;
  std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path);
  auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::ConfigError, path + " is not valid JSON");
  return doc;
}

GenerationParams params_from(const nlohmann::json& j, std::string_view where) {
  reject_unknown(j, {"top_p", "temperature", "max_tokens"}, where);
  GenerationParams p;
  p.top_p = j.value("top_p", p.top_p);
  p.temperature = j.value("temperature", p.temperature);
  p.max_tokens = j.value("max_tokens", p.max_tokens);
  p.validate();
  return p;
}

const KeySet kHttpKeys = {"kind",        "base_url",   "model",    "auth_env",
                          "auth_header", "auth_prefix", "timeout_ms"};

HttpEndpoint endpoint_from(const nlohmann::json& spec, std::string_view where,
                           std::string default_header = "Authorization",
                           std::string default_prefix = "Bearer ") {
  HttpEndpoint e;
  if (!spec.contains("base_url")) {
    throw Error(ErrorCode::ConfigError, std::string(where) + " needs base_url");
  }
  e.base_url = spec["base_url"].get<std::string>();
  e.model = spec.value("model", "");
  e.auth_env = spec.value("auth_env", "");
  e.auth_header = spec.value("auth_header", default_header);
  e.auth_prefix = spec.value("auth_prefix", default_prefix);
  e.timeout = std::chrono::milliseconds(spec.value("timeout_ms", 60'000));
  return e;
}

// Resolves *_file keys so the spec can be used from any working directory.
nlohmann::json resolve_spec_paths(nlohmann::json spec, const std::filesystem::path& base) {
  for (const char* key : {"rules_file", "results_file"}) {
    if (spec.contains(key)) spec[key] = resolve(base, spec[key].get<std::string>());
  }
  return spec;
}

class UnavailableChat final : public ChatBackend {
 public:
  explicit UnavailableChat(std::string id) : id_(std::move(id)) {}
  std::string complete(const ChatBackendRequest&) override {
    throw Error(ErrorCode::TransportError, "backend '" + id_ + "' has no live endpoint");
  }
  std::string describe() const override { return "unavailable"; }

 private:
  std::string id_;
};

class UnavailableScorer final : public RerankBackend {
 public:
  std::vector<double> score(const RerankRequest&) override {
    throw Error(ErrorCode::TransportError, "scorer has no live endpoint");
  }
  std::string describe() const override { return "unavailable"; }
};

class UnavailableSearch final : public SearchBackend {
 public:
  std::vector<SearchPage> search(std::string_view, int) override {
    throw Error(ErrorCode::TransportError, "search has no live endpoint");
  }
  std::string describe() const override { return "unavailable"; }
};

class AliasChat final : public ChatBackend {
 public:
  AliasChat(std::string target, std::shared_ptr<ChatBackend> inner)
      : target_(std::move(target)), inner_(std::move(inner)) {}
  std::string complete(const ChatBackendRequest& request) override {
    return inner_->complete(request);
  }
  std::string describe() const override {
    return "substitute via " + target_ + " (" + inner_->describe() + ")";
  }

 private:
  std::string target_;
  std::shared_ptr<ChatBackend> inner_;
};

bool is_scorer_kind(const std::string& kind) {
  return kind == "http-rerank" || kind == "lexical";
}

void validate_backend_spec(const std::string& id, const nlohmann::json& spec) {
  const std::string where = "backends." + id;
  if (!spec.is_object() || !spec.contains("kind")) {
    throw Error(ErrorCode::ConfigError, where + " needs a kind");
  }
  const auto kind = spec["kind"].get<std::string>();
  if (kind == "chat-completion" || kind == "http-rerank") {
    reject_unknown(spec, kHttpKeys, where);
    if (!spec.contains("base_url")) throw Error(ErrorCode::ConfigError, where + " needs base_url");
  } else if (kind == "scripted") {
    reject_unknown(spec, {"kind", "rules", "rules_file"}, where);
  } else if (kind == "alias") {
    reject_unknown(spec, {"kind", "of"}, where);
    if (!spec.contains("of")) throw Error(ErrorCode::ConfigError, where + " needs 'of'");
  } else if (kind == "lexical" || kind == "unavailable") {
    reject_unknown(spec, {"kind", "role"}, where);
  } else {
    throw Error(ErrorCode::ConfigError, where + " has unknown kind '" + kind + "'");
  }
}

void validate_search_spec(const nlohmann::json& spec) {
  if (spec.empty()) return;
  if (!spec.contains("kind")) throw Error(ErrorCode::ConfigError, "search needs a kind");
  const auto kind = spec["kind"].get<std::string>();
  if (kind == "http-search") {
    auto keys = kHttpKeys;
    keys.insert({"fetch_timeout_ms", "user_agent"});
    reject_unknown(spec, keys, "search");
  } else if (kind == "scripted") {
    reject_unknown(spec, {"kind", "results", "results_file"}, "search");
  } else if (kind == "unavailable") {
    reject_unknown(spec, {"kind"}, "search");
  } else {
    throw Error(ErrorCode::ConfigError, "search has unknown kind '" + kind + "'");
  }
}

}  // namespace

std::map<std::string, GenerationParams> PipelineConfig::default_params() {
  return {{"topic", GenerationParams::for_query()},
          {"directive", GenerationParams::for_response()},
          {"query", GenerationParams::for_query()},
          {"response", GenerationParams::for_response()}};
}

const GenerationParams& PipelineConfig::stage_params(const std::string& stage) const {
  auto it = params.find(stage);
  if (it == params.end()) throw Error(ErrorCode::ConfigError, "no params for stage " + stage);
  return it->second;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir) {
  reject_unknown(doc,
                 {"mode", "window_limit", "page_limit", "max_passages", "passage_source",
                  "chunker", "speaker_tags", "params", "templates", "replay", "search_cache",
                  "data_dir", "record_timings", "retry", "backends", "search"},
                 "config");
  PipelineConfig c;
  try {
    if (doc.contains("mode")) c.mode = pipeline_mode_from_string(doc["mode"].get<std::string>());
    c.window_limit = doc.value("window_limit", c.window_limit);
    c.retrieval.page_limit = doc.value("page_limit", c.retrieval.page_limit);
    c.retrieval.max_passages = doc.value("max_passages", c.retrieval.max_passages);
    if (doc.contains("passage_source")) {
      c.retrieval.source = passage_source_from_string(doc["passage_source"].get<std::string>());
    }
    if (doc.contains("chunker")) {
      const auto& ch = doc["chunker"];
      reject_unknown(ch, {"target_chars", "overlap_chars", "min_chars"}, "chunker");
      c.retrieval.chunker.target_chars = ch.value("target_chars", c.retrieval.chunker.target_chars);
      c.retrieval.chunker.overlap_chars =
          ch.value("overlap_chars", c.retrieval.chunker.overlap_chars);
      c.retrieval.chunker.min_chars = ch.value("min_chars", c.retrieval.chunker.min_chars);
    }
    if (doc.contains("speaker_tags")) {
      const auto& t = doc["speaker_tags"];
      reject_unknown(t, {"user", "bot"}, "speaker_tags");
      c.tags.user = t.value("user", c.tags.user);
      c.tags.bot = t.value("bot", c.tags.bot);
    }
    if (doc.contains("params")) {
      reject_unknown(doc["params"], {"topic", "directive", "query", "response"}, "params");
      for (const auto& [stage, p] : doc["params"].items()) {
        c.params[stage] = params_from(p, "params." + stage);
      }
    }
    if (doc.contains("templates")) {
      const auto& t = doc["templates"];
      reject_unknown(t, {"dir", "version"}, "templates");
      c.template_dir = resolve(base_dir, t.value("dir", ""));
      c.template_version = t.value("version", c.template_version);
    }
    if (doc.contains("replay")) {
      const auto& r = doc["replay"];
      reject_unknown(r, {"mode", "store"}, "replay");
      if (r.contains("mode")) c.replay_mode = replay_mode_from_string(r["mode"].get<std::string>());
      c.replay_store = resolve(base_dir, r.value("store", ""));
    }
    c.search_cache = resolve(base_dir, doc.value("search_cache", ""));
    c.data_dir = resolve(base_dir, doc.value("data_dir", c.data_dir));
    c.record_timings = doc.value("record_timings", c.record_timings);
    if (doc.contains("retry")) {
      const auto& r = doc["retry"];
      reject_unknown(r, {"attempts", "backoff_ms"}, "retry");
      c.retry_attempts = r.value("attempts", c.retry_attempts);
      c.retry_backoff_ms = r.value("backoff_ms", c.retry_backoff_ms);
    }
    if (doc.contains("backends")) {
      c.backends = nlohmann::json::object();
      for (const auto& [id, spec] : doc["backends"].items()) {
        c.backends[id] = resolve_spec_paths(spec, base_dir);
      }
    }
    if (doc.contains("search")) c.search = resolve_spec_paths(doc["search"], base_dir);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad value type: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
  auto doc = read_json_file(path.string());
  return from_json(doc, path.parent_path());
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json params_json = nlohmann::json::object();
  for (const auto& [stage, p] : params) params_json[stage] = p;
  return {{"mode", dsq::to_string(mode)},
          {"window_limit", window_limit},
          {"page_limit", retrieval.page_limit},
          {"max_passages", retrieval.max_passages},
          {"passage_source", dsq::to_string(retrieval.source)},
          {"chunker",
           {{"target_chars", retrieval.chunker.target_chars},
            {"overlap_chars", retrieval.chunker.overlap_chars},
            {"min_chars", retrieval.chunker.min_chars}}},
          {"speaker_tags", {{"user", tags.user}, {"bot", tags.bot}}},
          {"params", params_json},
          {"templates", {{"dir", template_dir}, {"version", template_version}}},
          {"replay", {{"mode", dsq::to_string(replay_mode)}, {"store", replay_store}}},
          {"search_cache", search_cache},
          {"data_dir", data_dir},
          {"record_timings", record_timings},
          {"retry", {{"attempts", retry_attempts}, {"backoff_ms", retry_backoff_ms}}},
          {"backends", backends},
          {"search", search}};
}

void PipelineConfig::validate() const {
  if (window_limit == 0) throw Error(ErrorCode::ConfigError, "window_limit must be positive");
  if (retrieval.page_limit < 1) throw Error(ErrorCode::ConfigError, "page_limit must be >= 1");
  if (retrieval.max_passages < 1) {
    throw Error(ErrorCode::ConfigError, "max_passages must be >= 1");
  }
  retrieval.chunker.validate();
  if (tags.user.empty() || tags.bot.empty() || tags.user == tags.bot) {
    throw Error(ErrorCode::ConfigError, "speaker tags must be distinct and non-empty");
  }
  for (const char* stage : {"topic", "directive", "query", "response"}) {
    if (!params.contains(stage)) {
      throw Error(ErrorCode::ConfigError, std::string("missing params for ") + stage);
    }
    params.at(stage).validate();
  }
  if (retry_attempts < 1) throw Error(ErrorCode::ConfigError, "retry.attempts must be >= 1");
  if (replay_mode == ReplayMode::Replay && replay_store.empty()) {
    throw Error(ErrorCode::ConfigError, "replay mode needs replay.store");
  }
  if (!backends.is_object()) throw Error(ErrorCode::ConfigError, "backends must be an object");
  for (const auto& [id, spec] : backends.items()) {
    validate_backend_spec(id, spec);
    if (spec["kind"] == "alias") {
      const auto target = spec["of"].get<std::string>();
      if (!backends.contains(target) || backends[target]["kind"] == "alias") {
        throw Error(ErrorCode::ConfigError,
                    "backends." + id + " aliases unknown or aliased backend '" + target + "'");
      }
    }
  }
  validate_search_spec(search);
}

std::shared_ptr<BackendHub> build_backend_hub(const PipelineConfig& config,
                                              std::shared_ptr<HttpClient> http,
                                              std::shared_ptr<ReplayStore> store,
                                              RetryPolicy retry) {
  if (!store) {
    store = config.replay_mode == ReplayMode::Passthrough
                ? std::make_shared<ReplayStore>()
                : ReplayStore::open(config.replay_mode, config.replay_store);
  }
  retry.attempts = config.retry_attempts;
  retry.initial_backoff = std::chrono::milliseconds(config.retry_backoff_ms);

  auto hub = std::make_shared<BackendHub>(store);
  std::map<std::string, std::shared_ptr<ChatBackend>> chats;

  for (const auto& [id, spec] : config.backends.items()) {
    const auto kind = spec["kind"].get<std::string>();
    const auto role = spec.value("role", "");
    const bool scorer = is_scorer_kind(kind) || role == "scorer" ||
                        ((id == backend_ids::kReranker || id == backend_ids::kRanker) &&
                         kind == "unavailable");
    if (scorer) {
      std::shared_ptr<RerankBackend> backend;
      if (kind == "http-rerank") {
        backend = std::make_shared<HttpRerankBackend>(endpoint_from(spec, "backends." + id),
                                                      http, retry);
      } else if (kind == "lexical") {
        backend = std::make_shared<LexicalReranker>();
      } else {
        backend = std::make_shared<UnavailableScorer>();
      }
      hub->add_scorer(id, std::move(backend));
      continue;
    }
    if (kind == "chat-completion") {
      chats[id] = std::make_shared<ChatCompletionBackend>(endpoint_from(spec, "backends." + id),
                                                          http, retry);
    } else if (kind == "scripted") {
      auto rules = spec.contains("rules_file") ? read_json_file(spec["rules_file"].get<std::string>())
                                               : spec.value("rules", nlohmann::json::array());
      chats[id] = ScriptedChatBackend::from_json(rules);
    } else if (kind == "unavailable") {
      chats[id] = std::make_shared<UnavailableChat>(id);
    }
  }
  for (const auto& [id, spec] : config.backends.items()) {
    if (spec["kind"] == "alias") {
      const auto target = spec["of"].get<std::string>();
      chats[id] = std::make_shared<AliasChat>(target, chats.at(target));
    }
  }
  for (auto& [id, backend] : chats) hub->add_chat(id, backend);

  const auto& s = config.search;
  if (!s.empty()) {
    const auto kind = s["kind"].get<std::string>();
    std::shared_ptr<SearchBackend> search;
    if (kind == "http-search") {
      FetchOptions fetch;
      fetch.timeout = std::chrono::milliseconds(s.value("fetch_timeout_ms", 10'000));
      fetch.user_agent = s.value("user_agent", fetch.user_agent);
      search = std::make_shared<HttpSearchBackend>(
          endpoint_from(s, "search", "Ocp-Apim-Subscription-Key", ""), http, fetch, retry);
    } else if (kind == "scripted") {
      auto results = s.contains("results_file") ? read_json_file(s["results_file"].get<std::string>())
                                                : s.value("results", nlohmann::json::array());
      search = ScriptedSearchBackend::from_json(results);
    } else {
      search = std::make_shared<UnavailableSearch>();
    }
    if (!config.search_cache.empty()) {
      search = std::make_shared<CachingSearchBackend>(
          search, std::make_shared<ReplayStore>(ReplayMode::Record, config.search_cache));
    }
    hub->set_search(std::move(search));
  }
  return hub;
}

}  // namespace dsq

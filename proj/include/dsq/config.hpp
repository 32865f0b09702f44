#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/dialog.hpp"
#include "dsq/http.hpp"
#include "dsq/retrieval.hpp"
#include "dsq/trace.hpp"

namespace dsq {

/// Pipeline configuration, read from a JSON document whose keys mirror the
/// fields below. Unknown keys are rejected at every level.
///
/// Backend specs live under "backends" (chat models and scorers keyed by
/// backend id) and "search". Supported kinds:
///   chat:   chat-completion {base_url, model, auth_env, auth_header, auth_prefix, timeout_ms}
///           scripted {rules | rules_file}
///           alias {of}          serve this role with another registered chat backend
///           unavailable {}      only usable through a replay store
///   scorer: http-rerank {base_url, model, auth_env, auth_header, auth_prefix, timeout_ms}
///           lexical {}
///           unavailable {}
///   search: http-search {base_url, auth_env, auth_header, auth_prefix, timeout_ms,
///                        fetch_timeout_ms, user_agent}
///           scripted {results | results_file}
///           unavailable {}
struct PipelineConfig {
  PipelineMode mode = PipelineMode::Guided;
  std::size_t window_limit = DialogContext::kDefaultWindow;
  RetrievalOptions retrieval;
  SpeakerTags tags;
  std::map<std::string, GenerationParams> params = default_params();

  std::string template_dir;  // empty = default asset directory
  std::string template_version = "v1";

  ReplayMode replay_mode = ReplayMode::Passthrough;
  std::string replay_store;
  std::string search_cache;
  std::string data_dir = "data";
  bool record_timings = true;

  int retry_attempts = 3;
  int retry_backoff_ms = 500;

  nlohmann::json backends = nlohmann::json::object();
  nlohmann::json search = nlohmann::json::object();

  static std::map<std::string, GenerationParams> default_params();

  /// Relative paths inside the document resolve against base_dir.
  static PipelineConfig from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = {});
  static PipelineConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  void validate() const;
  const GenerationParams& stage_params(const std::string& stage) const;
};

/// Builds the backend registry described by the config. Every live backend
/// shares the given HTTP client; tests pass an instrumented one.
std::shared_ptr<BackendHub> build_backend_hub(const PipelineConfig& config,
                                              std::shared_ptr<HttpClient> http,
                                              std::shared_ptr<ReplayStore> store = nullptr,
                                              RetryPolicy retry = RetryPolicy::standard());

}  // namespace dsq

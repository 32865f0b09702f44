#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/dialog.hpp"

namespace dsq {

// Model roles used by the pipeline and the tooling around it.
namespace backend_ids {
inline constexpr std::string_view kTopic = "topic-model";
inline constexpr std::string_view kCosmo = "cosmo";
inline constexpr std::string_view kQuery = "query-model";
inline constexpr std::string_view kResponder = "responder";
inline constexpr std::string_view kJudge = "judge";
inline constexpr std::string_view kTeacher = "teacher";
inline constexpr std::string_view kIntent = "intent";
inline constexpr std::string_view kReranker = "reranker";
inline constexpr std::string_view kRanker = "ranker";
}  // namespace backend_ids

struct ChatBackendRequest {
  std::string prompt;
  GenerationParams params;
  std::string backend_id;
};

struct SearchPage {
  std::string url;
  int rank = 1;
  std::string raw_content;
  std::string title;
  std::string snippet;

  bool operator==(const SearchPage&) const = default;
};

void to_json(nlohmann::json& j, const SearchPage& page);
void from_json(const nlohmann::json& j, SearchPage& page);

struct RerankRequest {
  std::string query;
  std::vector<std::string> passages;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Raw model text for the request; may carry surrounding whitespace.
  virtual std::string complete(const ChatBackendRequest& request) = 0;
  virtual std::string describe() const = 0;
};

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  /// At most page_limit pages in engine rank order; empty when there are no hits.
  virtual std::vector<SearchPage> search(std::string_view query, int page_limit) = 0;
  virtual std::string describe() const = 0;
};

class RerankBackend {
 public:
  virtual ~RerankBackend() = default;
  /// One relevance score per passage, aligned with the input order.
  virtual std::vector<double> score(const RerankRequest& request) = 0;
  virtual std::string describe() const = 0;
};

// ---------------------------------------------------------------------------
// Replay store

enum class ReplayMode { Record, Replay, Passthrough };

std::string_view to_string(ReplayMode mode);
ReplayMode replay_mode_from_string(std::string_view text);

struct ReplayEntry {
  std::string fingerprint;
  std::string backend_id;
  std::string request_digest;
  nlohmann::json response;
};

std::string sha256_hex(std::string_view data);

std::string chat_fingerprint(const ChatBackendRequest& request);
std::string search_fingerprint(std::string_view query, int page_limit);
std::string rerank_fingerprint(std::string_view backend_id, std::string_view query,
                               std::string_view passage);

/// Fingerprint -> recorded response, optionally persisted as JSONL of
/// {fingerprint, backend_id, request_digest, response}. Concurrent reads,
/// serialized writes. The first response recorded for a fingerprint wins.
class ReplayStore {
 public:
  explicit ReplayStore(ReplayMode mode = ReplayMode::Passthrough,
                       std::filesystem::path path = {});

  static std::shared_ptr<ReplayStore> open(ReplayMode mode, const std::filesystem::path& path);

  ReplayMode mode() const noexcept { return mode_; }
  const std::filesystem::path& path() const noexcept { return path_; }

  std::optional<nlohmann::json> find(const std::string& fingerprint) const;
  /// Returns false when the fingerprint was already present.
  bool put(ReplayEntry entry);
  std::size_t size() const;
  std::vector<ReplayEntry> entries() const;

 private:
  ReplayMode mode_;
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, ReplayEntry> entries_;
  std::vector<std::string> order_;
};

// ---------------------------------------------------------------------------
// Registry + replay routing

/// The single entry point stages use to reach models, search, and scorers.
/// Every call is routed through the replay store according to its mode:
/// Replay answers from the store only (ReplayMiss otherwise), Record answers
/// from the store or calls the live backend and records, Passthrough always
/// calls the live backend.
class BackendHub {
 public:
  explicit BackendHub(std::shared_ptr<ReplayStore> store = nullptr);

  void add_chat(std::string id, std::shared_ptr<ChatBackend> backend);
  void set_search(std::shared_ptr<SearchBackend> backend);
  void add_scorer(std::string id, std::shared_ptr<RerankBackend> backend);

  bool has_chat(std::string_view id) const;
  bool has_scorer(std::string_view id) const;
  bool has_search() const { return search_ != nullptr; }
  std::string describe_chat(std::string_view id) const;
  std::vector<std::string> chat_ids() const;

  ReplayMode mode() const;
  const std::shared_ptr<ReplayStore>& store() const { return store_; }

  /// A hub sharing this one's backends and store in which requests for each
  /// role key are served, and recorded, as requests to the mapped backend id.
  std::shared_ptr<BackendHub> rerouted(
      const std::map<std::string, std::string>& role_to_backend) const;
  /// The backend id a request for `id` is served by.
  std::string resolve(std::string_view id) const;

  /// Model text with leading/trailing whitespace removed.
  std::string generate(const ChatBackendRequest& request) const;
  /// Throws EmptyResults when the engine has no hits.
  std::vector<SearchPage> search(std::string_view query, int page_limit = 3) const;
  std::vector<double> rerank(const RerankRequest& request,
                             std::string_view scorer_id = backend_ids::kReranker) const;

 private:
  ChatBackend& chat(std::string_view id) const;
  RerankBackend& scorer(std::string_view id) const;

  std::shared_ptr<ReplayStore> store_;
  std::map<std::string, std::shared_ptr<ChatBackend>, std::less<>> chats_;
  std::map<std::string, std::shared_ptr<RerankBackend>, std::less<>> scorers_;
  std::shared_ptr<SearchBackend> search_;
  std::map<std::string, std::string, std::less<>> routes_;
};

}  // namespace dsq

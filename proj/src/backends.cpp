#include "dsq/backends.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

void to_json(nlohmann::json& j, const SearchPage& page) {
  j = nlohmann::json{{"url", page.url},
                     {"rank", page.rank},
                     {"title", page.title},
                     {"raw_content", page.raw_content}};
  if (!page.snippet.empty()) j["snippet"] = page.snippet;
}

void from_json(const nlohmann::json& j, SearchPage& page) {
  page.url = j.at("url").get<std::string>();
  page.rank = j.at("rank").get<int>();
  page.title = j.value("title", "");
  page.raw_content = j.value("raw_content", "");
  page.snippet = j.value("snippet", "");
}

std::string_view to_string(ReplayMode mode) {
  switch (mode) {
    case ReplayMode::Record: return "record";
    case ReplayMode::Replay: return "replay";
    case ReplayMode::Passthrough: return "passthrough";
  }
  return "passthrough";
}

ReplayMode replay_mode_from_string(std::string_view value) {
  auto lower = text::to_lower(value);
  if (lower == "record") return ReplayMode::Record;
  if (lower == "replay") return ReplayMode::Replay;
  if (lower == "passthrough" || lower == "live") return ReplayMode::Passthrough;
  throw Error(ErrorCode::ConfigError, "unknown replay mode '" + std::string(value) + "'");
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::StoreError, "SHA-256 digest failed");
  }
  std::ostringstream out;
  out << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < length; ++i) out << std::setw(2) << static_cast<int>(digest[i]);
  return out.str();
}

// Canonical request documents are dumped with sorted keys and shortest
// round-trip doubles, so the hash input is identical across platforms.
std::string chat_fingerprint(const ChatBackendRequest& request) {
  nlohmann::json doc{{"kind", "chat"},
                     {"backend_id", request.backend_id},
                     {"prompt", request.prompt},
                     {"params", request.params}};
  return sha256_hex(doc.dump());
}

std::string search_fingerprint(std::string_view query, int page_limit) {
  nlohmann::json doc{{"kind", "search"}, {"query", query}, {"page_limit", page_limit}};
  return sha256_hex(doc.dump());
}

std::string rerank_fingerprint(std::string_view backend_id, std::string_view query,
                               std::string_view passage) {
  nlohmann::json doc{
      {"kind", "rerank"}, {"backend_id", backend_id}, {"query", query}, {"passage", passage}};
  return sha256_hex(doc.dump());
}

namespace {

std::string tail_digest(std::string_view s, std::size_t max_bytes = 160) {
  if (s.size() <= max_bytes) return std::string(s);
  auto start = s.size() - max_bytes;
  while (start < s.size() && (static_cast<unsigned char>(s[start]) & 0xC0) == 0x80) ++start;
  return "..." + std::string(s.substr(start));
}

}  // namespace

// ---------------------------------------------------------------------------

ReplayStore::ReplayStore(ReplayMode mode, std::filesystem::path path)
    : mode_(mode), path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.contains("fingerprint") || !doc.contains("response")) {
      throw Error(ErrorCode::StoreError,
                  path_.string() + ":" + std::to_string(line_no) + ": malformed replay entry");
    }
    ReplayEntry entry{doc["fingerprint"].get<std::string>(), doc.value("backend_id", ""),
                      doc.value("request_digest", ""), doc["response"]};
    if (entries_.emplace(entry.fingerprint, entry).second) order_.push_back(entry.fingerprint);
  }
}

std::shared_ptr<ReplayStore> ReplayStore::open(ReplayMode mode,
                                               const std::filesystem::path& path) {
  if (mode == ReplayMode::Replay && !path.empty() && !std::filesystem::exists(path)) {
    throw Error(ErrorCode::StoreError, "replay store not found: " + path.string());
  }
  return std::make_shared<ReplayStore>(mode, path);
}

std::optional<nlohmann::json> ReplayStore::find(const std::string& fingerprint) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<nlohmann::json>(std::in_place, it->second.response);
}

bool ReplayStore::put(ReplayEntry entry) {
  std::unique_lock lock(mutex_);
  if (entries_.contains(entry.fingerprint)) return false;
  if (!path_.empty()) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::StoreError, "cannot append to " + path_.string());
    nlohmann::json line{{"fingerprint", entry.fingerprint},
                        {"backend_id", entry.backend_id},
                        {"request_digest", entry.request_digest},
                        {"response", entry.response}};
    out << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::StoreError, "write failed: " + path_.string());
  }
  order_.push_back(entry.fingerprint);
  entries_.emplace(entry.fingerprint, std::move(entry));
  return true;
}

std::size_t ReplayStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<ReplayEntry> ReplayStore::entries() const {
  std::shared_lock lock(mutex_);
  std::vector<ReplayEntry> out;
  out.reserve(order_.size());
  for (const auto& fp : order_) out.push_back(entries_.at(fp));
  return out;
}

// ---------------------------------------------------------------------------

BackendHub::BackendHub(std::shared_ptr<ReplayStore> store)
    : store_(store ? std::move(store) : std::make_shared<ReplayStore>()) {}

void BackendHub::add_chat(std::string id, std::shared_ptr<ChatBackend> backend) {
  chats_[std::move(id)] = std::move(backend);
}

void BackendHub::set_search(std::shared_ptr<SearchBackend> backend) {
  search_ = std::move(backend);
}

void BackendHub::add_scorer(std::string id, std::shared_ptr<RerankBackend> backend) {
  scorers_[std::move(id)] = std::move(backend);
}

bool BackendHub::has_chat(std::string_view id) const {
  return chats_.find(resolve(id)) != chats_.end();
}

bool BackendHub::has_scorer(std::string_view id) const {
  return scorers_.find(id) != scorers_.end();
}

std::string BackendHub::describe_chat(std::string_view id) const {
  return chat(resolve(id)).describe();
}

std::string BackendHub::resolve(std::string_view id) const {
  auto it = routes_.find(id);
  return it == routes_.end() ? std::string(id) : it->second;
}

std::shared_ptr<BackendHub> BackendHub::rerouted(
    const std::map<std::string, std::string>& role_to_backend) const {
  auto hub = std::make_shared<BackendHub>(*this);
  for (const auto& [role, target] : role_to_backend) {
    if (!has_chat(target)) {
      throw Error(ErrorCode::UnknownBackend, "no chat backend registered as '" + target + "'");
    }
    hub->routes_[role] = resolve(target);
  }
  return hub;
}

std::vector<std::string> BackendHub::chat_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : chats_) ids.push_back(id);
  return ids;
}

ReplayMode BackendHub::mode() const { return store_->mode(); }

ChatBackend& BackendHub::chat(std::string_view id) const {
  auto it = chats_.find(id);
  if (it == chats_.end() || !it->second) {
    throw Error(ErrorCode::UnknownBackend, "no chat backend registered as '" +
                                               std::string(id) + "'");
  }
  return *it->second;
}

RerankBackend& BackendHub::scorer(std::string_view id) const {
  auto it = scorers_.find(id);
  if (it == scorers_.end() || !it->second) {
    throw Error(ErrorCode::UnknownBackend, "no scoring backend registered as '" +
                                               std::string(id) + "'");
  }
  return *it->second;
}

std::string BackendHub::generate(const ChatBackendRequest& original) const {
  ChatBackendRequest request = original;
  request.backend_id = resolve(original.backend_id);
  auto& backend = chat(request.backend_id);
  if (text::is_blank(request.prompt)) {
    throw Error(ErrorCode::InvalidArgument, "prompt must be non-empty");
  }
  request.params.validate();

  const auto mode = store_->mode();
  std::string raw;
  if (mode == ReplayMode::Passthrough) {
    raw = backend.complete(request);
  } else {
    const auto fp = chat_fingerprint(request);
    if (auto hit = store_->find(fp)) {
      raw = hit->get<std::string>();
    } else if (mode == ReplayMode::Replay) {
      throw Error(ErrorCode::ReplayMiss, "no recorded response for " + request.backend_id +
                                             " request " + fp.substr(0, 16));
    } else {
      raw = backend.complete(request);
      store_->put({fp, request.backend_id, tail_digest(request.prompt), raw});
    }
  }
  return std::string(text::trim(raw));
}

std::vector<SearchPage> BackendHub::search(std::string_view query, int page_limit) const {
  if (text::is_blank(query)) throw Error(ErrorCode::InvalidArgument, "query must be non-empty");
  if (page_limit < 1) throw Error(ErrorCode::InvalidArgument, "page_limit must be >= 1");
  if (!search_) throw Error(ErrorCode::UnknownBackend, "no search backend configured");

  const auto mode = store_->mode();
  std::vector<SearchPage> pages;
  if (mode == ReplayMode::Passthrough) {
    pages = search_->search(query, page_limit);
  } else {
    const auto fp = search_fingerprint(query, page_limit);
    if (auto hit = store_->find(fp)) {
      pages = hit->get<std::vector<SearchPage>>();
    } else if (mode == ReplayMode::Replay) {
      throw Error(ErrorCode::ReplayMiss, "no recorded search for '" + std::string(query) + "'");
    } else {
      pages = search_->search(query, page_limit);
      store_->put({fp, "search", std::string(query), pages});
    }
  }
  if (static_cast<int>(pages.size()) > page_limit) pages.resize(page_limit);
  if (pages.empty()) {
    throw Error(ErrorCode::EmptyResults, "no search results for '" + std::string(query) + "'");
  }
  return pages;
}

std::vector<double> BackendHub::rerank(const RerankRequest& request,
                                       std::string_view scorer_id) const {
  auto& backend = scorer(scorer_id);
  if (request.passages.empty()) {
    throw Error(ErrorCode::InvalidArgument, "rerank needs at least one passage");
  }
  auto checked_score = [&](const RerankRequest& r) {
    auto scores = backend.score(r);
    if (scores.size() != r.passages.size()) {
      throw Error(ErrorCode::LengthMismatch,
                  std::to_string(scores.size()) + " scores for " +
                      std::to_string(r.passages.size()) + " passages");
    }
    return scores;
  };

  const auto mode = store_->mode();
  if (mode == ReplayMode::Passthrough) return checked_score(request);

  // Scores are recorded per (query, passage) pair so that any ordering or
  // subset of recorded passages replays.
  std::vector<double> scores(request.passages.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> fps;
  for (std::size_t i = 0; i < request.passages.size(); ++i) {
    fps.push_back(rerank_fingerprint(scorer_id, request.query, request.passages[i]));
    if (auto hit = store_->find(fps.back())) {
      scores[i] = hit->get<double>();
    } else {
      missing.push_back(i);
    }
  }
  if (missing.empty()) return scores;
  if (mode == ReplayMode::Replay) {
    throw Error(ErrorCode::ReplayMiss, std::to_string(missing.size()) +
                                           " passages lack recorded scores for '" +
                                           request.query + "'");
  }
  RerankRequest live{request.query, {}};
  for (auto i : missing) live.passages.push_back(request.passages[i]);
  auto fresh = checked_score(live);
  for (std::size_t k = 0; k < missing.size(); ++k) {
    auto i = missing[k];
    scores[i] = fresh[k];
    store_->put({fps[i], std::string(scorer_id),
                 request.query + " || " + std::string(text::utf8_prefix(request.passages[i], 80)),
                 fresh[k]});
  }
  return scores;
}

}  // namespace dsq

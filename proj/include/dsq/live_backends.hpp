#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"
#include "dsq/http.hpp"

namespace dsq {

struct HttpEndpoint {
  std::string base_url;
  std::string model;
  std::string auth_env;  // name of the env var holding the token; empty = no auth
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::chrono::milliseconds timeout{60'000};

  /// Header list with the token read from the environment at call time.
  std::vector<std::pair<std::string, std::string>> auth_headers() const;
};

/// Chat-completion style HTTP contract:
/// POST <base_url>/chat/completions {model, messages, top_p, temperature, max_tokens}
/// and reads choices[0].message.content.
class ChatCompletionBackend final : public ChatBackend {
 public:
  ChatCompletionBackend(HttpEndpoint endpoint, std::shared_ptr<HttpClient> http,
                        RetryPolicy retry = RetryPolicy::standard());

  std::string complete(const ChatBackendRequest& request) override;
  std::string describe() const override;

  static nlohmann::json build_payload(const std::string& model, const ChatBackendRequest& req);
  static std::string parse_reply(const std::string& body);

 private:
  HttpEndpoint endpoint_;
  std::shared_ptr<HttpClient> http_;
  RetryPolicy retry_;
};

struct FetchOptions {
  std::chrono::milliseconds timeout{10'000};
  std::string user_agent = "dialog-search/1.0";
};

/// GET a page and reduce it to visible text. Fetch failures downgrade to an
/// empty body rather than failing the search.
class HtmlFetcher {
 public:
  HtmlFetcher(std::shared_ptr<HttpClient> http, FetchOptions options = {});
  SearchPage fetch(const std::string& url, int rank, std::string title = {},
                   std::string snippet = {}) const;

 private:
  std::shared_ptr<HttpClient> http_;
  FetchOptions options_;
};

/// Search provider contract: GET <base_url>?q=<query>&count=<n> returning a
/// ranked URL list, either Bing style {"webPages":{"value":[{url,name,snippet}]}}
/// or {"results":[{url,title,snippet}]}. Result pages are fetched concurrently.
class HttpSearchBackend final : public SearchBackend {
 public:
  HttpSearchBackend(HttpEndpoint endpoint, std::shared_ptr<HttpClient> http,
                    FetchOptions fetch = {}, RetryPolicy retry = RetryPolicy::standard());

  std::vector<SearchPage> search(std::string_view query, int page_limit) override;
  std::string describe() const override;

  struct Hit {
    std::string url;
    std::string title;
    std::string snippet;
  };
  static std::vector<Hit> parse_hits(const std::string& body);

 private:
  HttpEndpoint endpoint_;
  std::shared_ptr<HttpClient> http_;
  HtmlFetcher fetcher_;
  RetryPolicy retry_;
};

/// Scoring service contract: POST <base_url> {query, passages, texts} returning
/// {"scores":[...]} aligned with the input, or [{"index":i,"score":s}, ...].
class HttpRerankBackend final : public RerankBackend {
 public:
  HttpRerankBackend(HttpEndpoint endpoint, std::shared_ptr<HttpClient> http,
                    RetryPolicy retry = RetryPolicy::standard());

  std::vector<double> score(const RerankRequest& request) override;
  std::string describe() const override;

  static std::vector<double> parse_scores(const std::string& body, std::size_t expected);

 private:
  HttpEndpoint endpoint_;
  std::shared_ptr<HttpClient> http_;
  RetryPolicy retry_;
};

/// Okapi BM25 over the candidate set itself. Offline stand-in for a
/// cross-encoder; deterministic and independent of passage order.
class LexicalReranker final : public RerankBackend {
 public:
  std::vector<double> score(const RerankRequest& request) override;
  std::string describe() const override { return "lexical-bm25"; }
};

/// Answers prompts from an ordered rule list: the first rule whose `contains`
/// text occurs in the prompt wins (empty `contains` matches everything).
/// Used for offline demos and for recording replay fixtures.
class ScriptedChatBackend final : public ChatBackend {
 public:
  struct Rule {
    std::string contains;
    std::string response;
  };
  explicit ScriptedChatBackend(std::vector<Rule> rules, std::string label = "scripted");
  static std::shared_ptr<ScriptedChatBackend> from_json(const nlohmann::json& rules);

  std::string complete(const ChatBackendRequest& request) override;
  std::string describe() const override { return label_; }

 private:
  std::vector<Rule> rules_;
  std::string label_;
};

/// Exact-query lookup of canned result pages. Pages may carry "html", which
/// is run through the same text extraction as live fetches.
class ScriptedSearchBackend final : public SearchBackend {
 public:
  explicit ScriptedSearchBackend(std::map<std::string, std::vector<SearchPage>> results);
  static std::shared_ptr<ScriptedSearchBackend> from_json(const nlohmann::json& doc);

  std::vector<SearchPage> search(std::string_view query, int page_limit) override;
  std::string describe() const override { return "scripted-search"; }

 private:
  std::map<std::string, std::vector<SearchPage>, std::less<>> results_;
};

/// Persistent search cache keyed by (query, page_limit) fingerprint.
class CachingSearchBackend final : public SearchBackend {
 public:
  CachingSearchBackend(std::shared_ptr<SearchBackend> inner, std::shared_ptr<ReplayStore> cache);

  std::vector<SearchPage> search(std::string_view query, int page_limit) override;
  std::string describe() const override;

 private:
  std::shared_ptr<SearchBackend> inner_;
  std::shared_ptr<ReplayStore> cache_;
};

}  // namespace dsq

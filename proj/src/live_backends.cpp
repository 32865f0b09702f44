#include "dsq/live_backends.hpp"

#include <cmath>
#include <cstdlib>
#include <future>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "dsq/error.hpp"
#include "dsq/html.hpp"
#include "dsq/text.hpp"

namespace dsq {

std::vector<std::pair<std::string, std::string>> HttpEndpoint::auth_headers() const {
  if (auth_env.empty()) return {};
  const char* token = std::getenv(auth_env.c_str());
  if (!token || !*token) {
    throw Error(ErrorCode::ConfigError, "environment variable " + auth_env + " is not set");
  }
  return {{auth_header, auth_prefix + token}};
}

namespace {

nlohmann::json parse_body(const std::string& body, std::string_view what) {
  auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::TransportError, std::string(what) + ": response is not JSON");
  }
  return doc;
}

std::string join_url(const std::string& base, std::string_view suffix) {
  if (base.ends_with(suffix)) return base;
  if (base.ends_with('/')) return base + std::string(suffix.substr(1));
  return base + std::string(suffix);
}

}  // namespace

// ---------------------------------------------------------------------------

ChatCompletionBackend::ChatCompletionBackend(HttpEndpoint endpoint,
                                             std::shared_ptr<HttpClient> http, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), http_(std::move(http)), retry_(std::move(retry)) {}

nlohmann::json ChatCompletionBackend::build_payload(const std::string& model,
                                                    const ChatBackendRequest& req) {
  return {{"model", model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
          {"top_p", req.params.top_p},
          {"temperature", req.params.temperature},
          {"max_tokens", req.params.max_tokens}};
}

std::string ChatCompletionBackend::parse_reply(const std::string& body) {
  auto doc = parse_body(body, "chat completion");
  try {
    const auto& choice = doc.at("choices").at(0);
    if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("unexpected chat completion shape: ") +
                                               e.what());
  }
}

std::string ChatCompletionBackend::complete(const ChatBackendRequest& request) {
  HttpRequest http_req;
  http_req.method = "POST";
  http_req.url = join_url(endpoint_.base_url, "/chat/completions");
  http_req.headers = endpoint_.auth_headers();
  http_req.body = build_payload(endpoint_.model, request).dump();
  http_req.timeout = endpoint_.timeout;
  auto response = send_with_retry(*http_, http_req, retry_);
  return parse_reply(response.body);
}

std::string ChatCompletionBackend::describe() const {
  return "chat-completion:" + endpoint_.model + "@" + endpoint_.base_url;
}

// ---------------------------------------------------------------------------

HtmlFetcher::HtmlFetcher(std::shared_ptr<HttpClient> http, FetchOptions options)
    : http_(std::move(http)), options_(std::move(options)) {}

SearchPage HtmlFetcher::fetch(const std::string& url, int rank, std::string title,
                              std::string snippet) const {
  SearchPage page{url, rank, {}, std::move(title), std::move(snippet)};
  HttpRequest req;
  req.url = url;
  req.timeout = options_.timeout;
  req.headers = {{"User-Agent", options_.user_agent}, {"Accept", "text/html"}};
  try {
    auto response = http_->send(req);
    if (response.status < 200 || response.status >= 300) {
      spdlog::warn("fetch {} returned HTTP {}", url, response.status);
      return page;
    }
    auto extracted = html::extract(response.body);
    page.raw_content = std::move(extracted.text);
    if (page.title.empty()) page.title = std::move(extracted.title);
  } catch (const Error& e) {
    spdlog::warn("fetch {} failed: {}", url, e.what());
  }
  return page;
}

// ---------------------------------------------------------------------------

HttpSearchBackend::HttpSearchBackend(HttpEndpoint endpoint, std::shared_ptr<HttpClient> http,
                                     FetchOptions fetch, RetryPolicy retry)
    : endpoint_(std::move(endpoint)),
      http_(http),
      fetcher_(http, std::move(fetch)),
      retry_(std::move(retry)) {}

std::vector<HttpSearchBackend::Hit> HttpSearchBackend::parse_hits(const std::string& body) {
  auto doc = parse_body(body, "search");
  const nlohmann::json* list = nullptr;
  if (doc.contains("webPages") && doc["webPages"].contains("value")) {
    list = &doc["webPages"]["value"];
  } else if (doc.contains("results")) {
    list = &doc["results"];
  } else if (doc.contains("webPages") || doc.contains("_type")) {
    return {};  // Bing answers without web hits
  } else {
    throw Error(ErrorCode::TransportError, "search response has no result list");
  }
  std::vector<Hit> hits;
  for (const auto& item : *list) {
    if (!item.contains("url")) continue;
    hits.push_back({item["url"].get<std::string>(),
                    item.contains("name") ? item.value("name", "") : item.value("title", ""),
                    item.value("snippet", "")});
  }
  return hits;
}

std::vector<SearchPage> HttpSearchBackend::search(std::string_view query, int page_limit) {
  HttpRequest req;
  const char sep = endpoint_.base_url.find('?') == std::string::npos ? '?' : '&';
  req.url = endpoint_.base_url + sep + "q=" + url_encode(query) +
            "&count=" + std::to_string(page_limit);
  req.headers = endpoint_.auth_headers();
  req.timeout = endpoint_.timeout;
  auto hits = parse_hits(send_with_retry(*http_, req, retry_).body);
  if (static_cast<int>(hits.size()) > page_limit) hits.resize(page_limit);

  std::vector<std::future<SearchPage>> pending;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    pending.push_back(std::async(std::launch::async, [this, &hits, i] {
      return fetcher_.fetch(hits[i].url, static_cast<int>(i) + 1, hits[i].title,
                            hits[i].snippet);
    }));
  }
  std::vector<SearchPage> pages;
  for (auto& f : pending) pages.push_back(f.get());
  return pages;
}

std::string HttpSearchBackend::describe() const { return "http-search@" + endpoint_.base_url; }

// ---------------------------------------------------------------------------

HttpRerankBackend::HttpRerankBackend(HttpEndpoint endpoint, std::shared_ptr<HttpClient> http,
                                     RetryPolicy retry)
    : endpoint_(std::move(endpoint)), http_(std::move(http)), retry_(std::move(retry)) {}

std::vector<double> HttpRerankBackend::parse_scores(const std::string& body,
                                                    std::size_t expected) {
  auto doc = parse_body(body, "rerank");
  std::vector<double> scores;
  if (doc.is_object() && doc.contains("scores")) {
    scores = doc["scores"].get<std::vector<double>>();
  } else if (doc.is_array()) {
    scores.assign(doc.size(), 0.0);
    std::set<std::size_t> seen;
    for (const auto& item : doc) {
      auto index = item.at("index").get<std::size_t>();
      if (index >= scores.size() || !seen.insert(index).second) {
        throw Error(ErrorCode::LengthMismatch, "rerank response has bad index " +
                                                   std::to_string(index));
      }
      scores[index] = item.at("score").get<double>();
    }
  } else {
    throw Error(ErrorCode::TransportError, "rerank response has no scores");
  }
  if (scores.size() != expected) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(scores.size()) + " scores for " +
                                               std::to_string(expected) + " passages");
  }
  return scores;
}

std::vector<double> HttpRerankBackend::score(const RerankRequest& request) {
  HttpRequest req;
  req.method = "POST";
  req.url = endpoint_.base_url;
  req.headers = endpoint_.auth_headers();
  req.timeout = endpoint_.timeout;
  nlohmann::json body{{"query", request.query},
                      {"passages", request.passages},
                      {"texts", request.passages}};
  if (!endpoint_.model.empty()) body["model"] = endpoint_.model;
  req.body = body.dump();
  return parse_scores(send_with_retry(*http_, req, retry_).body, request.passages.size());
}

std::string HttpRerankBackend::describe() const {
  return "http-rerank:" + endpoint_.model + "@" + endpoint_.base_url;
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",    "an",   "and",  "are",  "as",   "at",    "be",   "by",   "do",   "does",
      "for",  "from", "has",  "have", "how",  "i",     "in",   "is",   "it",   "its",
      "of",   "on",   "or",   "some", "that", "the",   "their", "they", "this", "to",
      "was",  "were", "what", "when", "where", "which", "who",  "why",  "will", "with",
      "you",  "your", "s"};
  return words;
}

std::vector<std::string> content_terms(std::string_view s) {
  std::vector<std::string> out;
  for (auto& t : text::tokenize(s)) {
    if (!stopwords().contains(t)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<double> LexicalReranker::score(const RerankRequest& request) {
  constexpr double k1 = 1.2;
  constexpr double b = 0.75;
  const auto n = request.passages.size();
  std::vector<std::unordered_map<std::string, int>> tf(n);
  std::vector<double> length(n);
  std::unordered_map<std::string, int> df;
  double total_length = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto terms = content_terms(request.passages[i]);
    length[i] = static_cast<double>(terms.size());
    total_length += length[i];
    for (auto& t : terms) ++tf[i][t];
    for (const auto& [t, _] : tf[i]) ++df[t];
  }
  const double avg_length = n ? std::max(total_length / static_cast<double>(n), 1.0) : 1.0;

  auto query_terms = content_terms(request.query);
  std::set<std::string> unique_terms(query_terms.begin(), query_terms.end());

  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& term : unique_terms) {
      auto it = tf[i].find(term);
      if (it == tf[i].end()) continue;
      const double d = df[term];
      const double idf = std::log(1.0 + (static_cast<double>(n) - d + 0.5) / (d + 0.5));
      const double f = it->second;
      scores[i] += idf * f * (k1 + 1) / (f + k1 * (1 - b + b * length[i] / avg_length));
    }
  }
  return scores;
}

// ---------------------------------------------------------------------------

ScriptedChatBackend::ScriptedChatBackend(std::vector<Rule> rules, std::string label)
    : rules_(std::move(rules)), label_(std::move(label)) {}

std::shared_ptr<ScriptedChatBackend> ScriptedChatBackend::from_json(const nlohmann::json& rules) {
  std::vector<Rule> out;
  for (const auto& r : rules) {
    out.push_back({r.value("contains", ""), r.at("response").get<std::string>()});
  }
  return std::make_shared<ScriptedChatBackend>(std::move(out));
}

std::string ScriptedChatBackend::complete(const ChatBackendRequest& request) {
  for (const auto& rule : rules_) {
    if (rule.contains.empty() || request.prompt.find(rule.contains) != std::string::npos) {
      return rule.response;
    }
  }
  throw Error(ErrorCode::NotFound,
              "no scripted rule matches " + request.backend_id + " prompt ending '" +
                  std::string(text::utf8_prefix(
                      request.prompt.substr(request.prompt.size() > 120
                                                ? request.prompt.size() - 120
                                                : 0),
                      120)) +
                  "'");
}

// ---------------------------------------------------------------------------

ScriptedSearchBackend::ScriptedSearchBackend(
    std::map<std::string, std::vector<SearchPage>> results)
    : results_(results.begin(), results.end()) {}

std::shared_ptr<ScriptedSearchBackend> ScriptedSearchBackend::from_json(
    const nlohmann::json& doc) {
  std::map<std::string, std::vector<SearchPage>> results;
  for (const auto& entry : doc) {
    auto& pages = results[entry.at("query").get<std::string>()];
    for (const auto& p : entry.at("pages")) {
      SearchPage page;
      page.url = p.at("url").get<std::string>();
      page.rank = static_cast<int>(pages.size()) + 1;
      page.title = p.value("title", "");
      page.snippet = p.value("snippet", "");
      if (p.contains("html")) {
        auto extracted = html::extract(p["html"].get<std::string>());
        page.raw_content = std::move(extracted.text);
        if (page.title.empty()) page.title = std::move(extracted.title);
      } else {
        page.raw_content = p.value("content", "");
      }
      pages.push_back(std::move(page));
    }
  }
  return std::make_shared<ScriptedSearchBackend>(std::move(results));
}

std::vector<SearchPage> ScriptedSearchBackend::search(std::string_view query, int page_limit) {
  auto it = results_.find(query);
  if (it == results_.end()) return {};
  auto pages = it->second;
  if (static_cast<int>(pages.size()) > page_limit) pages.resize(page_limit);
  return pages;
}

// ---------------------------------------------------------------------------

CachingSearchBackend::CachingSearchBackend(std::shared_ptr<SearchBackend> inner,
                                           std::shared_ptr<ReplayStore> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::vector<SearchPage> CachingSearchBackend::search(std::string_view query, int page_limit) {
  const auto fp = search_fingerprint(query, page_limit);
  if (auto hit = cache_->find(fp)) return hit->get<std::vector<SearchPage>>();
  auto pages = inner_->search(query, page_limit);
  if (!pages.empty()) cache_->put({fp, "search-cache", std::string(query), pages});
  return pages;
}

std::string CachingSearchBackend::describe() const { return "cached(" + inner_->describe() + ")"; }

}  // namespace dsq

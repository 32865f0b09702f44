#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dsq {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::string content_type = "application/json";
  std::chrono::milliseconds timeout{10'000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

/// Blocking HTTP transport. Implementations throw Error(TransportError) when no
/// response could be obtained at all; non-2xx statuses are returned as-is.
class HttpClient {
 public:
  virtual ~HttpClient() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

/// cpp-httplib backed client (http and https).
std::shared_ptr<HttpClient> make_default_http_client();

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  // Injected so tests do not sleep.
  std::function<void(std::chrono::milliseconds)> sleep;

  static RetryPolicy standard();
  static RetryPolicy no_wait(int attempts = 3);
};

/// Sends with exponential backoff. Connection failures, 429 and 5xx are
/// retried; any other non-2xx status fails immediately. Throws TransportError.
HttpResponse send_with_retry(HttpClient& client, const HttpRequest& request,
                             const RetryPolicy& policy);

std::string url_encode(std::string_view value);

}  // namespace dsq

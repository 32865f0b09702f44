#include "dsq/http.hpp"

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dsq/error.hpp"

namespace dsq {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // /path?query
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::TransportError, "URL without scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibClient final : public HttpClient {
 public:
  HttpResponse send(const HttpRequest& request) override {
    auto [origin, path] = split_url(request.url);
    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    client.set_follow_location(true);

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);

    httplib::Result result;
    if (request.method == "GET") {
      result = client.Get(path, headers);
    } else if (request.method == "POST") {
      result = client.Post(path, headers, request.body, request.content_type);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unsupported method " + request.method);
    }
    if (!result) {
      throw Error(ErrorCode::TransportError,
                  request.url + ": " + httplib::to_string(result.error()));
    }
    return {result->status, result->body, result->get_header_value("Content-Type")};
  }
};

bool transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::shared_ptr<HttpClient> make_default_http_client() {
  return std::make_shared<HttplibClient>();
}

RetryPolicy RetryPolicy::standard() {
  RetryPolicy p;
  p.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  return p;
}

RetryPolicy RetryPolicy::no_wait(int attempts) {
  RetryPolicy p;
  p.attempts = attempts;
  p.sleep = [](std::chrono::milliseconds) {};
  return p;
}

HttpResponse send_with_retry(HttpClient& client, const HttpRequest& request,
                             const RetryPolicy& policy) {
  auto backoff = policy.initial_backoff;
  std::string last_error;
  const int attempts = std::max(1, policy.attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      auto response = client.send(request);
      if (response.status >= 200 && response.status < 300) return response;
      last_error = request.url + " returned HTTP " + std::to_string(response.status);
      if (!transient_status(response.status)) break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError) throw;
      last_error = e.what();
    }
    if (attempt < attempts) {
      spdlog::warn("attempt {}/{} failed ({}); retrying in {} ms", attempt, attempts, last_error,
                   backoff.count());
      if (policy.sleep) policy.sleep(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::TransportError, last_error);
}

std::string url_encode(std::string_view value) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : value) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0F]);
    }
  }
  return out;
}

}  // namespace dsq

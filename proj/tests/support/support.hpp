#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dsq/backends.hpp"
#include "dsq/config.hpp"
#include "dsq/http.hpp"
#include "dsq/templates.hpp"

namespace dsq::testkit {

std::filesystem::path fixture_dir();
std::filesystem::path fixture(const std::string& relative);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Transport that records every request and answers from a handler. The
/// default handler fails as an unreachable network would.
class RecordingHttpClient : public HttpClient {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;
  explicit RecordingHttpClient(Handler handler = {});

  HttpResponse send(const HttpRequest& request) override;
  std::size_t calls() const { return calls_; }
  std::vector<HttpRequest> requests() const;

 private:
  Handler handler_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mutex_;
  std::vector<HttpRequest> requests_;
};

/// Chat backend driven by a function; counts calls.
class FnChat : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatBackendRequest&)>;
  explicit FnChat(Fn fn, std::string label = "fn");
  std::string complete(const ChatBackendRequest& request) override;
  std::string describe() const override { return label_; }
  std::size_t calls() const { return calls_; }

 private:
  Fn fn_;
  std::string label_;
  std::atomic<std::size_t> calls_{0};
};

std::shared_ptr<FnChat> constant_chat(std::string reply);

std::shared_ptr<const PromptTemplates> default_templates();

/// Rebuilds the committed replay stores from the scripted fixtures into
/// out_dir, following tests/fixtures/replay/manifest.json. Returns the paths
/// written, keyed by their manifest store path.
std::vector<std::pair<std::string, std::filesystem::path>> record_fixture_stores(
    const std::filesystem::path& out_dir);

/// Loads a fixture config with the replay store redirected.
PipelineConfig fixture_config(const std::string& relative,
                              const std::filesystem::path& store_override = {});

}  // namespace dsq::testkit

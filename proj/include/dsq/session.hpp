#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/dialog.hpp"
#include "dsq/pipeline.hpp"
#include "dsq/trace.hpp"

namespace dsq {

struct SessionTurn {
  std::size_t turn_index = 0;  // index of the user turn
  std::string user;
  std::string bot;
  TurnTrace trace;
};

struct SessionState {
  std::string id;
  PipelineMode mode = PipelineMode::Guided;
  nlohmann::json config;
  std::vector<SessionTurn> turns;

  DialogContext context(std::size_t window_limit) const;
  nlohmann::json history_json() const;
};

/// Append-only JSONL per session: `<dir>/<id>.session.jsonl`. The first line
/// describes the session, each further line is one committed turn (user
/// text, bot text and trace together). A torn final line from an interrupted
/// write is ignored on load.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  std::filesystem::path path_for(const std::string& id) const;
  void create(const SessionState& state);
  void append(const std::string& id, const SessionTurn& turn);
  std::optional<SessionState> load(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Test seam: runs before each append and may throw to simulate a failed write.
  void set_write_hook(std::function<void(const std::string& id)> hook) {
    write_hook_ = std::move(hook);
  }

 private:
  void write_line(const std::filesystem::path& path, const std::string& line, bool truncate);

  std::filesystem::path dir_;
  std::function<void(const std::string&)> write_hook_;
};

/// Sessions in memory backed by a SessionStore. Different sessions advance
/// concurrently; turns within a session are serialized.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<const Pipeline> pipeline, std::shared_ptr<SessionStore> store);

  SessionState create(std::optional<PipelineMode> mode = std::nullopt);
  /// Runs the pipeline on the new user text and commits the turn. Nothing is
  /// committed if the pipeline or the store write fails.
  SessionTurn step(const std::string& id, const std::string& user_text);
  SessionState get(const std::string& id);

  const std::shared_ptr<const Pipeline>& pipeline() const { return pipeline_; }

 private:
  struct Entry {
    std::mutex mutex;
    SessionState state;
  };
  std::shared_ptr<Entry> entry(const std::string& id);

  std::shared_ptr<const Pipeline> pipeline_;
  std::shared_ptr<SessionStore> store_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

std::string new_session_id();

}  // namespace dsq

#include "dsq/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

namespace {

std::string dump_line(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
  }
  return true;
}

}  // namespace

DialogContext SessionState::context(std::size_t window_limit) const {
  std::vector<std::pair<Speaker, std::string>> pairs;
  for (const auto& t : turns) {
    pairs.emplace_back(Speaker::User, t.user);
    pairs.emplace_back(Speaker::Bot, t.bot);
  }
  return DialogContext::from_pairs(pairs, window_limit);
}

nlohmann::json SessionState::history_json() const {
  auto turns_json = nlohmann::json::array();
  for (const auto& t : turns) {
    turns_json.push_back({{"turn_index", t.turn_index}, {"speaker", "user"}, {"text", t.user}});
    turns_json.push_back({{"turn_index", t.turn_index + 1}, {"speaker", "bot"}, {"text", t.bot}});
  }
  return {{"id", id}, {"mode", to_string(mode)}, {"turns", turns_json}};
}

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::StoreError, "cannot create " + dir_.string() + ": " + ec.message());
}

std::filesystem::path SessionStore::path_for(const std::string& id) const {
  if (!valid_id(id)) throw Error(ErrorCode::InvalidArgument, "invalid session id '" + id + "'");
  return dir_ / (id + ".session.jsonl");
}

void SessionStore::write_line(const std::filesystem::path& path, const std::string& line,
                              bool truncate) {
  const int flags = O_WRONLY | O_CREAT | (truncate ? O_TRUNC : O_APPEND);
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw Error(ErrorCode::StoreError, path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string reason = std::strerror(errno);
      ::close(fd);
      throw Error(ErrorCode::StoreError, path.string() + ": " + reason);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) spdlog::warn("fsync failed for {}", path.string());
  ::close(fd);
}

void SessionStore::create(const SessionState& state) {
  nlohmann::json header = {
      {"type", "session"}, {"id", state.id}, {"mode", to_string(state.mode)}, {"config", state.config}};
  write_line(path_for(state.id), dump_line(header), true);
}

void SessionStore::append(const std::string& id, const SessionTurn& turn) {
  if (write_hook_) write_hook_(id);
  nlohmann::json line = {{"type", "turn"},
                         {"turn_index", turn.turn_index},
                         {"user", turn.user},
                         {"bot", turn.bot},
                         {"trace", turn.trace}};
  write_line(path_for(id), dump_line(line), false);
}

std::optional<SessionState> SessionStore::load(const std::string& id) const {
  const auto path = path_for(id);
  std::ifstream in(path);
  if (!in) return std::nullopt;

  SessionState state;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) {
        spdlog::warn("{}: ignoring torn final line {}", path.string(), line_no);
        break;
      }
      throw Error(ErrorCode::StoreError,
                  path.string() + ":" + std::to_string(line_no) + ": malformed line");
    }
    try {
      const auto type = j.at("type").get<std::string>();
      if (type == "session") {
        state.id = j.at("id").get<std::string>();
        state.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
        state.config = j.value("config", nlohmann::json::object());
        have_header = true;
      } else if (type == "turn") {
        SessionTurn t;
        t.turn_index = j.at("turn_index").get<std::size_t>();
        t.user = j.at("user").get<std::string>();
        t.bot = j.at("bot").get<std::string>();
        t.trace = j.at("trace").get<TurnTrace>();
        state.turns.push_back(std::move(t));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::StoreError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw Error(ErrorCode::StoreError, path.string() + ": missing session header");
  return state;
}

std::vector<std::string> SessionStore::list() const {
  std::vector<std::string> ids;
  const std::string suffix = ".session.jsonl";
  for (const auto& e : std::filesystem::directory_iterator(dir_)) {
    const auto name = e.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id = "s-";
  for (int i = 0; i < 16; ++i) id += kHex[rng() % 16];
  return id;
}

SessionManager::SessionManager(std::shared_ptr<const Pipeline> pipeline,
                               std::shared_ptr<SessionStore> store)
    : pipeline_(std::move(pipeline)), store_(std::move(store)) {}

SessionState SessionManager::create(std::optional<PipelineMode> mode) {
  auto e = std::make_shared<Entry>();
  e->state.id = new_session_id();
  e->state.mode = mode.value_or(pipeline_->config().mode);
  e->state.config = pipeline_->config().to_json();
  e->state.config["mode"] = to_string(e->state.mode);
  store_->create(e->state);
  std::lock_guard lock(mutex_);
  sessions_[e->state.id] = e;
  return e->state;
}

std::shared_ptr<SessionManager::Entry> SessionManager::entry(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  std::optional<SessionState> loaded;
  try {
    loaded = store_->load(id);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) throw Error(ErrorCode::NotFound, "no session " + id);
    throw;
  }
  if (!loaded) throw Error(ErrorCode::NotFound, "no session " + id);
  auto e = std::make_shared<Entry>();
  e->state = std::move(*loaded);
  sessions_[id] = e;
  return e;
}

SessionTurn SessionManager::step(const std::string& id, const std::string& user_text) {
  if (text::is_blank(user_text)) throw Error(ErrorCode::InvalidArgument, "text must be non-empty");
  auto e = entry(id);
  std::lock_guard lock(e->mutex);

  const auto ctx = e->state.context(pipeline_->config().window_limit)
                       .with_turn(Speaker::User, std::string(text::trim(user_text)));
  SessionTurn turn;
  turn.turn_index = ctx.turns().back().index;
  turn.user = ctx.turns().back().text;
  turn.trace = pipeline_->run_turn(ctx, id, e->state.mode);
  turn.bot = turn.trace.response.text;

  store_->append(id, turn);
  e->state.turns.push_back(turn);
  return turn;
}

SessionState SessionManager::get(const std::string& id) {
  auto e = entry(id);
  std::lock_guard lock(e->mutex);
  return e->state;
}

}  // namespace dsq

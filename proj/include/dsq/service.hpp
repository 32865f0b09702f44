#pragma once

#include <memory>
#include <string>
#include <thread>

#include "dsq/session.hpp"

namespace httplib {
class Server;
}

namespace dsq {

/// JSON HTTP API over a SessionManager:
///   POST /sessions                {"mode"?}   -> {"id","config"}
///   POST /sessions/{id}/turns     {"text"}    -> {"response","trace"}
///   GET  /sessions/{id}                       -> {"id","mode","turns"}
///   GET  /sessions/{id}/traces                -> {"id","traces"}
///   GET  /healthz                             -> {"status":"ok"}
/// Errors are {"error":{"code","message"}}.
class ChatService {
 public:
  explicit ChatService(std::shared_ptr<SessionManager> sessions);
  ~ChatService();

  ChatService(const ChatService&) = delete;
  ChatService& operator=(const ChatService&) = delete;

  /// Blocks until stop(). Returns false if the port could not be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  void install_routes();

  std::shared_ptr<SessionManager> sessions_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace dsq

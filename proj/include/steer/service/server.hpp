#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "steer/learn/rl.hpp"
#include "steer/service/session.hpp"

namespace steer::service {

struct ServerOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  std::filesystem::path export_dir = "sessions";
  /// Frames rendered from a running trainer for spectators.
  sim::FrameConfig spectator_frame;
  double spectator_fps = 10.0;
  /// Per-client queue bound; spectator frames beyond it are dropped.
  std::size_t spectator_queue = 32;
  /// Stop on SIGINT / SIGTERM.
  bool handle_signals = false;
};

/// HTTP control plane and WebSocket streams on one port.
///
///   POST   /sessions               {"mode", "track", "config"?}
///   DELETE /sessions/:id
///   GET    /sessions/:id/export
///   GET    /health
///   WS     /sessions/:id/stream
class Server {
 public:
  explicit Server(ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on a background thread.
  void start();
  unsigned short port() const;
  /// Idempotent; safe from any thread.
  void stop();
  /// Blocks until the server stops.
  void wait();
  bool running() const;

  /// Publishes a trainer's epochs, takeovers, events and frames to spectate
  /// sessions. Callable from the training thread; never blocks it.
  learn::RLObserver& trainer_feed();

  struct Impl;  // opaque

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace steer::service

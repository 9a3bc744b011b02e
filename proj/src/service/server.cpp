#include "steer/service/server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "steer/error.hpp"
#include "steer/pipeline/config.hpp"
#include "steer/util/base64.hpp"

namespace steer::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

sim::Action key_from_string(const std::string& k) {
  if (k == "none") return sim::Action::none;
  if (k == "left") return sim::Action::left;
  if (k == "right") return sim::Action::right;
  throw Error(Errc::invalid_argument, "key must be left, right or none");
}

json frame_message(long tick, std::size_t w, std::size_t h, std::span<const std::uint8_t> rgb) {
  return {{"type", "frame"}, {"tick", tick}, {"w", w}, {"h", h}, {"px", util::base64_encode(rgb)}};
}

std::vector<std::uint8_t> interleave(const sim::Frame& f) {
  const std::size_t plane = f.height * f.width;
  std::vector<std::uint8_t> rgb(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = f.pixels[c * plane + i];
  }
  return rgb;
}

json event_message(long tick, const std::string& kind) {
  return {{"type", "event"}, {"tick", tick}, {"kind", kind}};
}

http::status status_for(Errc c) {
  switch (c) {
    case Errc::conflict:
    case Errc::bad_state: return http::status::conflict;
    case Errc::not_found:
    case Errc::missing_input: return http::status::not_found;
    case Errc::invalid_argument:
    case Errc::shape_mismatch: return http::status::bad_request;
    default: return http::status::internal_server_error;
  }
}

}  // namespace

class WsClient;

struct Server::Impl {
  struct Runtime {
    std::unique_ptr<Session> session;
    std::vector<std::weak_ptr<WsClient>> clients;
    std::unique_ptr<net::steady_timer> timer;
    bool streaming = false;
    Clock::time_point next;
  };

  class Feed : public learn::RLObserver {
   public:
    explicit Feed(Impl& s) : s_(s) {}
    void on_epoch(const learn::EpochMetrics& m) override {
      json j = m.to_json();
      j["type"] = "metrics";
      net::post(s_.ioc, [this, j = std::move(j)] { s_.publish_metrics(j); });
    }
    void on_takeover(long tick, bool on) override {
      json j = {{"type", "takeover"}, {"tick", tick}, {"on", on}};
      net::post(s_.ioc, [this, j = std::move(j)] { s_.broadcast_spectators(j.dump(), false); });
    }
    void on_event(long tick, const std::string& kind) override {
      net::post(s_.ioc, [this, m = event_message(tick, kind).dump()] { s_.broadcast_spectators(m, false); });
    }
    void on_tick(long tick, const sim::World& w) override {
      if (s_.spectator_count.load() == 0) return;
      const auto now = Clock::now();
      if (now < next_frame_) return;
      next_frame_ = now + std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double>(1.0 / s_.opts.spectator_fps));
      const sim::Frame f = sim::render(w, s_.opts.spectator_frame);
      std::string msg = frame_message(tick, f.width, f.height, interleave(f)).dump();
      net::post(s_.ioc, [this, msg = std::move(msg)] { s_.broadcast_spectators(msg, true); });
    }
    bool stop_requested() override { return s_.stopping.load(); }

   private:
    Impl& s_;
    Clock::time_point next_frame_{};
  };

  explicit Impl(ServerOptions o) : opts(std::move(o)), acceptor(ioc), signals(ioc), feed(*this) {}

  ServerOptions opts;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::signal_set signals;
  std::thread thread;
  std::atomic<bool> stopping{false};
  std::atomic<bool> started{false};
  std::atomic<bool> waiting{false};
  std::atomic<int> spectator_count{0};
  std::mutex stop_mutex;
  unsigned short bound_port = 0;

  std::map<std::string, Runtime> sessions;
  std::string active_driving;
  std::vector<json> metrics_history;
  std::mt19937_64 id_rng{std::random_device{}()};
  std::uint64_t id_counter = 0;
  Feed feed;

  void accept();
  void attach(const std::shared_ptr<WsClient>& c);
  void detach(const std::shared_ptr<WsClient>& c);
  void on_message(const std::shared_ptr<WsClient>& c, const std::string& text);
  http::response<http::string_body> handle(const http::request<http::string_body>& req);

  json create_session(const json& body);
  void end_session(Runtime& rt);
  void start_stream(Runtime& rt);
  void schedule_tick(const std::string& id);
  void advance(Runtime& rt);
  void send_frame(Runtime& rt);
  void broadcast(Runtime& rt, const std::string& msg);
  void broadcast_spectators(const std::string& msg, bool droppable);
  void publish_metrics(const json& j);
  void shutdown();

  Runtime* find(const std::string& id) {
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : &it->second;
  }
};

class WsClient : public std::enable_shared_from_this<WsClient> {
 public:
  WsClient(tcp::socket socket, Server::Impl& srv, std::string session)
      : ws_(std::move(socket)), srv_(srv), session_(std::move(session)) {}

  const std::string& session() const { return session_; }
  bool spectator = false;

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->srv_.attach(self);
      self->read();
    });
  }

  void send(std::string msg, bool droppable) {
    if (!open_ || closing_) return;
    if (droppable && queue_.size() >= srv_.opts.spectator_queue) {
      ++dropped_;
      return;
    }
    queue_.push_back(std::move(msg));
    if (queue_.size() == 1) write();
  }

  /// Sends whatever is queued, then closes.
  void close_after_flush() {
    if (!open_ || closing_) return;
    closing_ = true;
    if (queue_.empty()) do_close();
  }

  void force_close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->srv_.detach(self);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      self->srv_.on_message(self, text);
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write();
      } else if (self->closing_) {
        self->do_close();
      }
    });
  }

  void do_close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buf_;
  std::deque<std::string> queue_;
  Server::Impl& srv_;
  std::string session_;
  bool open_ = false;
  bool closing_ = false;
  std::size_t dropped_ = 0;
};

class HttpConn : public std::enable_shared_from_this<HttpConn> {
 public:
  HttpConn(tcp::socket socket, Server::Impl& srv) : stream_(std::move(socket)), srv_(srv) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->dispatch();
    });
  }

 private:
  void dispatch() {
    if (websocket::is_upgrade(req_)) {
      const std::string target(req_.target());
      const std::string prefix = "/sessions/", suffix = "/stream";
      if (target.size() > prefix.size() + suffix.size() && target.rfind(prefix, 0) == 0 &&
          target.compare(target.size() - suffix.size(), suffix.size(), suffix) == 0) {
        const std::string id = target.substr(prefix.size(), target.size() - prefix.size() - suffix.size());
        if (auto* rt = srv_.find(id); rt && (rt->session->active() || rt->session->mode() == SessionMode::spectate)) {
          stream_.expires_never();
          auto ws = std::make_shared<WsClient>(stream_.release_socket(), srv_, id);
          ws->start(std::move(req_));
          return;
        }
      }
      http::response<http::string_body> res{http::status::not_found, req_.version()};
      res.set(http::field::content_type, "application/json");
      res.body() = json{{"error", "no active session at " + target}}.dump();
      res.prepare_payload();
      res.keep_alive(false);
      return write(std::move(res));
    }
    write(srv_.handle(req_));
  }

  void write(http::response<http::string_body> res) {
    auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!sp->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  Server::Impl& srv_;
};

void Server::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpConn>(std::move(socket), *this)->read();
    accept();
  });
}

void Server::Impl::attach(const std::shared_ptr<WsClient>& c) {
  Runtime* rt = find(c->session());
  if (!rt) return c->close_after_flush();
  rt->clients.push_back(c);
  if (rt->session->mode() == SessionMode::spectate) {
    c->spectator = true;
    ++spectator_count;
    for (const auto& m : metrics_history) c->send(m.dump(), false);
    return;
  }
  if (!rt->streaming) return start_stream(*rt);
  c->send(frame_message(rt->session->tick(), rt->session->options().frame.width,
                        rt->session->options().frame.height, rt->session->frame_rgb())
              .dump(),
          false);
}

void Server::Impl::detach(const std::shared_ptr<WsClient>& c) {
  if (c->spectator) --spectator_count;
  if (Runtime* rt = find(c->session())) {
    std::erase_if(rt->clients, [&](const auto& w) {
      auto p = w.lock();
      return !p || p == c;
    });
  }
}

void Server::Impl::start_stream(Runtime& rt) {
  rt.streaming = true;
  send_frame(rt);
  if (rt.session->options().pace == Pace::realtime) {
    rt.next = Clock::now();
    schedule_tick(rt.session->id());
  }
}

void Server::Impl::schedule_tick(const std::string& id) {
  Runtime* rt = find(id);
  if (!rt || !rt->session->active()) return;
  rt->next += std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double, std::milli>(rt->session->options().tick_ms));
  rt->timer->expires_at(rt->next);
  rt->timer->async_wait([this, id](beast::error_code ec) {
    if (ec) return;
    Runtime* r = find(id);
    if (!r || !r->session->active()) return;
    advance(*r);
    schedule_tick(id);
  });
}

void Server::Impl::advance(Runtime& rt) {
  const sim::StepEvents ev = rt.session->advance();
  const long t = rt.session->tick();
  if (ev.off_road_entry) broadcast(rt, event_message(t, "off_road_entry").dump());
  if (ev.on_road_entry) broadcast(rt, event_message(t, "on_road_entry").dump());
  if (ev.restart_stuck) broadcast(rt, event_message(t, "restart_stuck").dump());
  if (ev.restart_wrong_direction) broadcast(rt, event_message(t, "restart_wrong_direction").dump());
  send_frame(rt);
}

void Server::Impl::send_frame(Runtime& rt) {
  const auto& o = rt.session->options();
  broadcast(rt, frame_message(rt.session->tick(), o.frame.width, o.frame.height, rt.session->frame_rgb()).dump());
}

void Server::Impl::broadcast(Runtime& rt, const std::string& msg) {
  for (auto& w : rt.clients) {
    if (auto c = w.lock()) c->send(msg, false);
  }
}

void Server::Impl::broadcast_spectators(const std::string& msg, bool droppable) {
  for (auto& [id, rt] : sessions) {
    if (rt.session->mode() != SessionMode::spectate) continue;
    for (auto& w : rt.clients) {
      if (auto c = w.lock()) c->send(msg, droppable);
    }
  }
}

void Server::Impl::publish_metrics(const json& j) {
  metrics_history.push_back(j);
  broadcast_spectators(j.dump(), false);
}

void Server::Impl::on_message(const std::shared_ptr<WsClient>& c, const std::string& text) {
  Runtime* rt = find(c->session());
  if (!rt) return c->close_after_flush();
  Session& s = *rt->session;
  auto reject = [&](const std::string& why) {
    c->send(json{{"type", "event"}, {"tick", s.tick()}, {"kind", "rejected"}, {"reason", why}}.dump(), false);
  };
  json m;
  try {
    m = json::parse(text);
  } catch (const json::parse_error&) {
    return reject("message is not valid JSON");
  }
  const std::string type = m.value("type", "");
  try {
    if (type == "close") {
      if (s.mode() == SessionMode::spectate) return c->close_after_flush();
      end_session(*rt);
      return;
    }
    if (type != "action" && type != "label") return reject("unknown message type '" + type + "'");
    if (!m.contains("tick") || !m["tick"].is_number_integer()) return reject("missing integer tick");
    const long tick = m["tick"].get<long>();
    Ingest r;
    if (type == "action") {
      r = s.ingest_action(tick, key_from_string(m.value("key", "")));
    } else {
      if (!m.contains("value") || !m["value"].is_number_integer()) return reject("label value must be -1 or 1");
      r = s.ingest_label(tick, m["value"].get<int>());
    }
    if (r == Ingest::stale) {
      c->send(json{{"type", "event"},
                   {"tick", s.tick()},
                   {"kind", "stale_dropped"},
                   {"input_tick", tick},
                   {"count", s.stale_drops()}}
                  .dump(),
              false);
    }
    if (s.options().pace == Pace::lockstep && rt->streaming) {
      while (s.ready()) advance(*rt);
    }
  } catch (const Error& e) {
    reject(e.what());
  } catch (const json::exception& e) {
    reject(e.what());
  }
}

void Server::Impl::end_session(Runtime& rt) {
  Session& s = *rt.session;
  if (s.active()) {
    s.close();
    rt.timer->cancel();
    broadcast(rt, json{{"type", "event"}, {"tick", s.tick()}, {"kind", "closed"}, {"recorded", s.recorded()}}.dump());
  }
  if (active_driving == s.id()) active_driving.clear();
  for (auto& w : rt.clients) {
    if (auto c = w.lock()) c->close_after_flush();
  }
}

json Server::Impl::create_session(const json& body) {
  if (!body.is_object()) throw Error(Errc::invalid_argument, "body must be a JSON object");
  const SessionMode mode = session_mode_from_string(body.value("mode", ""));
  const std::string track = body.value("track", "county");
  const SessionOptions so = SessionOptions::from_json(body.value("config", json()));
  teach::SimSetup setup{sim::Track::load(pipeline::resolve_track(track)), {}, so.frame, so.gap};
  if (mode != SessionMode::spectate && !active_driving.empty()) {
    throw Error(Errc::conflict, active_driving);
  }
  char suffix[9];
  std::snprintf(suffix, sizeof suffix, "%08x", static_cast<unsigned>(id_rng() & 0xffffffffu));
  const std::string id = "s" + std::to_string(++id_counter) + "-" + suffix;
  Runtime rt;
  rt.session = std::make_unique<Session>(id, mode, setup, so);
  rt.timer = std::make_unique<net::steady_timer>(ioc);
  sessions.emplace(id, std::move(rt));
  if (mode != SessionMode::spectate) active_driving = id;
  return {{"id", id}, {"mode", std::string(to_string(mode))}, {"track", track}, {"stream", "/sessions/" + id + "/stream"}};
}

http::response<http::string_body> Server::Impl::handle(const http::request<http::string_body>& req) {
  http::response<http::string_body> res{http::status::ok, req.version()};
  res.set(http::field::content_type, "application/json");
  res.keep_alive(req.keep_alive());
  auto reply = [&](http::status st, const json& j) {
    res.result(st);
    res.body() = j.dump();
    res.prepare_payload();
    return res;
  };
  const std::string target(req.target());
  const std::string prefix = "/sessions/";
  try {
    if (target == "/health" && req.method() == http::verb::get) {
      std::size_t spectators = 0;
      for (const auto& [id, rt] : sessions) {
        if (rt.session->mode() == SessionMode::spectate) spectators += rt.clients.size();
      }
      return reply(http::status::ok, {{"status", "ok"},
                                      {"sessions", sessions.size()},
                                      {"active", active_driving.empty() ? json() : json(active_driving)},
                                      {"spectators", spectators},
                                      {"metrics_published", metrics_history.size()}});
    }
    if (target == "/sessions" && req.method() == http::verb::post) {
      json body;
      try {
        body = json::parse(req.body());
      } catch (const json::parse_error&) {
        return reply(http::status::bad_request, {{"error", "body is not valid JSON"}});
      }
      try {
        return reply(http::status::created, create_session(body));
      } catch (const Error& e) {
        if (e.code() == Errc::conflict) {
          return reply(http::status::conflict, {{"error", "a driving session is already active"}, {"active", e.what()}});
        }
        throw;
      }
    }
    if (target.rfind(prefix, 0) == 0) {
      std::string rest = target.substr(prefix.size());
      const std::string export_suffix = "/export";
      const bool is_export = rest.size() > export_suffix.size() &&
                             rest.compare(rest.size() - export_suffix.size(), export_suffix.size(), export_suffix) == 0;
      if (is_export) rest.resize(rest.size() - export_suffix.size());
      Runtime* rt = find(rest);
      if (!rt) return reply(http::status::not_found, {{"error", "no session " + rest}});
      if (is_export && req.method() == http::verb::get) {
        const teach::Dataset d = rt->session->export_dataset();
        const auto dir = opts.export_dir / rest;
        json m = teach::save_dataset(d, dir);
        m["path"] = std::filesystem::absolute(dir).string();
        return reply(http::status::ok, m);
      }
      if (!is_export && req.method() == http::verb::delete_) {
        end_session(*rt);
        for (auto& w : rt->clients) {
          auto c = w.lock();
          if (!c || !c->spectator) continue;
          c->spectator = false;
          --spectator_count;
        }
        sessions.erase(rest);
        return reply(http::status::ok, {{"id", rest}, {"state", "deleted"}});
      }
    }
    return reply(http::status::not_found, {{"error", "no route for " + std::string(req.method_string()) + " " + target}});
  } catch (const Error& e) {
    return reply(status_for(e.code()), {{"error", e.what()}});
  } catch (const std::exception& e) {
    return reply(http::status::internal_server_error, {{"error", e.what()}});
  }
}

void Server::Impl::shutdown() {
  beast::error_code ec;
  acceptor.close(ec);
  signals.cancel(ec);
  for (auto& [id, rt] : sessions) {
    rt.timer->cancel();
    for (auto& w : rt.clients) {
      if (auto c = w.lock()) c->force_close();
    }
  }
}

Server::Server(ServerOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->started.exchange(true)) throw Error(Errc::bad_state, "server already started");
  auto& s = *impl_;
  beast::error_code ec;
  const auto addr = net::ip::make_address(s.opts.host, ec);
  if (ec) throw Error(Errc::invalid_argument, "bad host '" + s.opts.host + "'");
  const tcp::endpoint ep(addr, s.opts.port);
  s.acceptor.open(ep.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(ep, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw Error(Errc::io, "cannot listen on " + s.opts.host + ":" + std::to_string(s.opts.port) + ": " + ec.message());
  s.bound_port = s.acceptor.local_endpoint().port();
  if (s.opts.handle_signals) {
    s.signals.add(SIGINT);
    s.signals.add(SIGTERM);
    s.signals.async_wait([this](beast::error_code e, int) {
      if (!e) {
        impl_->stopping = true;
        impl_->shutdown();
        impl_->ioc.stop();
      }
    });
  }
  s.accept();
  s.thread = std::thread([&s] { s.ioc.run(); });
}

unsigned short Server::port() const { return impl_->bound_port; }

bool Server::running() const { return impl_->started && !impl_->stopping; }

void Server::stop() {
  std::lock_guard lock(impl_->stop_mutex);
  auto& s = *impl_;
  if (!s.started) return;
  if (!s.stopping.exchange(true)) {
    net::post(s.ioc, [&s] {
      s.shutdown();
      s.ioc.stop();
    });
  }
  if (!s.waiting && s.thread.joinable() && s.thread.get_id() != std::this_thread::get_id()) s.thread.join();
}

void Server::wait() {
  auto& s = *impl_;
  if (s.waiting.exchange(true)) throw Error(Errc::bad_state, "server is already being waited on");
  if (s.thread.joinable()) s.thread.join();
  s.stopping = true;
}

learn::RLObserver& Server::trainer_feed() { return impl_->feed; }

}  // namespace steer::service

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <random>

#include "doctest.h"
#include "httplib.h"
#include "steer/service/server.hpp"
#include "steer/teach/dataset.hpp"
#include "steer/util/base64.hpp"
#include "temp_dir.hpp"

using namespace steer;
using nlohmann::json;
namespace beast = boost::beast;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

// Blocking WebSocket client for one session stream.
class WsProbe {
 public:
  WsProbe(unsigned short port, const std::string& path) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1:" + std::to_string(port), path);
  }

  void send(const json& j) { ws_.write(net::buffer(j.dump())); }

  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  json read_until(const std::string& type) {
    for (;;) {
      json j = read();
      if (j["type"] == type) return j;
    }
  }

  json read_event(const std::string& kind) {
    for (;;) {
      json j = read();
      if (j["type"] == "event" && j["kind"] == kind) return j;
    }
  }

 private:
  net::io_context ioc_;
  beast::websocket::stream<tcp::socket> ws_;
};

struct Fixture {
  TempDir tmp;
  service::Server server{[this] {
    service::ServerOptions o;
    o.export_dir = tmp.path() / "sessions";
    return o;
  }()};
  Fixture() { server.start(); }
  httplib::Client http() {
    httplib::Client c("127.0.0.1", server.port());
    c.set_read_timeout(30, 0);
    return c;
  }
};

json post_session(httplib::Client& c, const json& body, int expect = 201) {
  auto res = c.Post("/sessions", body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

const json kSmall = {{"height", 16}, {"width", 16}};

}  // namespace

TEST_SUITE("session-service") {
  TEST_CASE("health, conflict and unknown track over HTTP") {
    Fixture f;
    auto c = f.http();
    auto h = c.Get("/health");
    REQUIRE(h);
    CHECK(h->status == 200);
    CHECK(json::parse(h->body)["status"] == "ok");

    const json s = post_session(c, {{"mode", "demo"}, {"track", "county"}, {"config", kSmall}});
    CHECK(s["stream"] == "/sessions/" + s["id"].get<std::string>() + "/stream");
    const json busy = post_session(c, {{"mode", "label-reward"}, {"track", "county"}}, 409);
    CHECK(busy["active"] == s["id"]);
    // spectators may join while someone drives
    post_session(c, {{"mode", "spectate"}});

    post_session(c, {{"mode", "demo"}, {"track", "atlantis"}}, 404);
    post_session(c, {{"mode", "race"}}, 400);
    auto bad = c.Post("/sessions", "{", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto export_active = c.Get(("/sessions/" + s["id"].get<std::string>() + "/export").c_str());
    REQUIRE(export_active);
    CHECK(export_active->status == 409);

    auto del = c.Delete(("/sessions/" + s["id"].get<std::string>()).c_str());
    REQUIRE(del);
    CHECK(del->status == 200);
    post_session(c, {{"mode", "label-reward"}, {"track", "county"}, {"config", kSmall}});
    auto gone = c.Delete("/sessions/nope");
    REQUIRE(gone);
    CHECK(gone->status == 404);
  }

  TEST_CASE("scripted lockstep client reproduces the headless tape dataset") {
    Fixture f;
    auto c = f.http();
    const json s = post_session(c, {{"mode", "demo"},
                                    {"track", "county"},
                                    {"config", {{"height", 16}, {"width", 16}, {"pace", "lockstep"}}}});
    std::mt19937_64 rng(17);
    std::vector<sim::Action> tape;
    while (tape.size() < 400) {
      const auto a = sim::action_from_index(static_cast<int>(rng() % 3));
      const std::size_t run = 1 + rng() % 12;
      for (std::size_t i = 0; i < run && tape.size() < 400; ++i) tape.push_back(a);
    }

    WsProbe ws(f.server.port(), s["stream"].get<std::string>());
    const char* keys[] = {"none", "left", "right"};
    for (std::size_t t = 0; t < tape.size(); ++t) {
      const json frame = ws.read_until("frame");
      REQUIRE(frame["tick"] == t);
      CHECK(util::base64_decode(frame["px"].get<std::string>()).size() == 3 * 16 * 16);
      ws.send({{"type", "action"}, {"tick", t}, {"key", keys[static_cast<int>(tape[t])]}});
    }
    ws.read_until("frame");
    ws.send({{"type", "close"}});
    const json closed = ws.read_event("closed");
    CHECK(closed["recorded"] == tape.size());

    auto res = c.Get(("/sessions/" + s["id"].get<std::string>() + "/export").c_str());
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const json m = json::parse(res->body);
    teach::SimSetup su{sim::Track::load(std::string(STEER_DATA_DIR) + "/tracks/county.json"), {}, {}, 5};
    su.frame.height = su.frame.width = 16;
    const teach::Dataset headless = teach::record_tape(su, tape);
    CHECK(m["dataset_hash"] == teach::dataset_hash(headless));
    const teach::Dataset saved = teach::load_dataset(m["path"].get<std::string>());
    CHECK(saved.size() == tape.size());
    CHECK(saved.meta["provenance"] == "human");
  }

  TEST_CASE("bad client messages are rejected, stale ones reported") {
    Fixture f;
    auto c = f.http();
    const json s = post_session(c, {{"mode", "demo"}, {"config", {{"height", 16}, {"width", 16}, {"pace", "lockstep"}}}});
    WsProbe ws(f.server.port(), s["stream"].get<std::string>());
    ws.read_until("frame");
    ws.send({{"type", "label"}, {"tick", 0}, {"value", 1}});
    CHECK(ws.read_event("rejected")["reason"].get<std::string>().find("demo") != std::string::npos);
    ws.send({{"type", "teleport"}});
    ws.read_event("rejected");
    ws.send({{"type", "action"}, {"key", "left"}});
    ws.read_event("rejected");
    ws.send({{"type", "action"}, {"tick", 29}, {"key", "left"}});
    while (ws.read_until("frame")["tick"] != 30) {
    }
    ws.send({{"type", "action"}, {"tick", 3}, {"key", "right"}});
    const json stale = ws.read_event("stale_dropped");
    CHECK(stale["input_tick"] == 3);
    CHECK(stale["count"] == 1);
  }

  TEST_CASE("realtime sessions hold the tick rate without dropping frames") {
    Fixture f;
    auto c = f.http();
    const json s = post_session(c, {{"mode", "demo"}, {"config", {{"height", 48}, {"width", 64}, {"tick_ms", 20}}}});
    WsProbe ws(f.server.port(), s["stream"].get<std::string>());
    const auto t0 = std::chrono::steady_clock::now();
    long first = -1, last = -1;
    std::size_t gaps = 0, frames = 0;
    while (frames < 150) {
      const json j = ws.read_until("frame");
      const long t = j["tick"].get<long>();
      if (first < 0) first = t;
      if (last >= 0 && t != last + 1) ++gaps;
      last = t;
      ++frames;
      if (frames % 10 == 0) ws.send({{"type", "action"}, {"tick", t}, {"key", frames % 20 ? "left" : "right"}});
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(gaps == 0);
    CHECK(secs == doctest::Approx(149 * 0.020).epsilon(0.15));
  }

  TEST_CASE("spectators get metric history and live trainer updates") {
    Fixture f;
    auto c = f.http();
    learn::EpochMetrics m;
    m.epoch = 0;
    m.avg_reward = 0.25;
    f.server.trainer_feed().on_epoch(m);
    const json s = post_session(c, {{"mode", "spectate"}});
    WsProbe ws(f.server.port(), s["stream"].get<std::string>());
    const json first = ws.read_until("metrics");
    CHECK(first["epoch"] == 0);
    CHECK(first["avg_reward"] == 0.25);
    m.epoch = 1;
    f.server.trainer_feed().on_epoch(m);
    CHECK(ws.read_until("metrics")["epoch"] == 1);
    f.server.trainer_feed().on_takeover(42, true);
    const json tk = ws.read_until("takeover");
    CHECK(tk["tick"] == 42);
    CHECK(tk["on"] == true);
    auto h = c.Get("/health");
    REQUIRE(h);
    const json hj = json::parse(h->body);
    CHECK(hj["spectators"] == 1);
    CHECK(hj["metrics_published"] == 2);
  }
}

// Exercises the shared library through its C header only, plus the CLI's
// exit codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "steer/steer.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Tmp {
  fs::path path = fs::temp_directory_path() / ("steer-capi-" + std::to_string(std::random_device{}()));
  Tmp() { fs::create_directories(path); }
  ~Tmp() { fs::remove_all(path); }
};

std::string overrides(const fs::path& out) {
  return json::array({"frame.height=16", "frame.width=16", "demo.ticks=120", "imitation.max_iterations=20",
                      "imitation.eval_every=10", "output_dir=\"" + out.string() + "\""})
      .dump();
}

json take(char* s) {
  json j = json::parse(s);
  steer_string_free(s);
  return j;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(STEER_CLI) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST_CASE("status names and last error") {
  CHECK(std::string(steer_status_name(STEER_E_MISSING_INPUT)) == "missing_input");
  steer_pipeline* p = nullptr;
  CHECK(steer_pipeline_open("/no/such/config.json", nullptr, &p) == STEER_E_MISSING_INPUT);
  CHECK(p == nullptr);
  CHECK(std::string(steer_last_error()).find("config") != std::string::npos);
  CHECK(steer_pipeline_open(nullptr, "[\"rl.gama=1\"]", &p) == STEER_E_INVALID_ARGUMENT);
  CHECK(steer_pipeline_open(nullptr, nullptr, nullptr) == STEER_E_INVALID_ARGUMENT);
}

TEST_CASE("pipeline stages through the C interface") {
  Tmp tmp;
  steer_pipeline* p = nullptr;
  REQUIRE(steer_pipeline_open(nullptr, overrides(tmp.path).c_str(), &p) == STEER_OK);
  char* out = nullptr;
  REQUIRE(steer_pipeline_config(p, &out) == STEER_OK);
  const json cfg = take(out);
  CHECK(cfg["config"]["frame"]["height"] == 16);
  CHECK(cfg["config_hash"].get<std::string>().size() == 64);

  REQUIRE(steer_pipeline_run(p, "demo-record", "{\"seed\": 2}", &out) == STEER_OK);
  const json demo = take(out);
  CHECK(demo["count"] == 120);
  CHECK(fs::exists(tmp.path / "datasets" / "demo" / "manifest.json"));

  std::vector<std::string> lines;
  steer_pipeline_set_progress(
      p, [](void* u, const char* l) { static_cast<std::vector<std::string>*>(u)->push_back(l); }, &lines);
  REQUIRE(steer_pipeline_run(p, "train-policy", nullptr, &out) == STEER_OK);
  const json pol = take(out);
  CHECK(pol["stage"] == "train-policy");
  CHECK_FALSE(lines.empty());

  CHECK(steer_pipeline_run(p, "train-reward", nullptr, nullptr) == STEER_E_MISSING_INPUT);
  CHECK(steer_pipeline_run(p, "fly", nullptr, nullptr) == STEER_E_INVALID_ARGUMENT);
  CHECK(steer_pipeline_run(p, "demo-record", "[1]", nullptr) == STEER_E_INVALID_ARGUMENT);

  steer_net* net = nullptr;
  REQUIRE(steer_net_load((tmp.path / "models" / "policy").c_str(), &net) == STEER_OK);
  size_t c = 0, h = 0, w = 0;
  REQUIRE(steer_net_input_shape(net, &c, &h, &w) == STEER_OK);
  CHECK(c == 6);
  CHECK(h == 16);
  CHECK(w == 16);
  REQUIRE(steer_net_output_size(net) == 3);
  std::vector<uint8_t> obs(c * h * w, 128);
  float q[3];
  REQUIRE(steer_net_forward(net, obs.data(), obs.size(), q, 3) == STEER_OK);
  CHECK(q[0] + q[1] + q[2] == doctest::Approx(1.0f));
  CHECK(steer_net_forward(net, obs.data(), obs.size() - 1, q, 3) == STEER_E_SHAPE_MISMATCH);
  steer_net_destroy(net);
  steer_pipeline_close(p);
}

TEST_CASE("world handle steps and renders") {
  steer_world* w = nullptr;
  CHECK(steer_world_create("atlantis", &w) == STEER_E_NOT_FOUND);
  REQUIRE(steer_world_create("county", &w) == STEER_OK);
  steer_car_state s0{}, s1{};
  REQUIRE(steer_world_state(w, &s0) == STEER_OK);
  CHECK(s0.on_road == 1);
  CHECK(s0.lane == 2);
  steer_step_events ev{};
  for (int i = 0; i < 10; ++i) REQUIRE(steer_world_step(w, STEER_ACTION_LEFT, &ev) == STEER_OK);
  REQUIRE(steer_world_state(w, &s1) == STEER_OK);
  CHECK(s1.s > s0.s);
  CHECK(s1.psi > s0.psi);
  std::vector<uint8_t> rgb(3 * 24 * 32);
  REQUIRE(steer_world_render(w, 24, 32, rgb.data(), rgb.size()) == STEER_OK);
  size_t lit = 0;
  for (auto v : rgb) lit += v > 0;
  CHECK(lit > 0);
  CHECK(steer_world_render(w, 24, 32, rgb.data(), rgb.size() - 3) == STEER_E_SHAPE_MISMATCH);
  CHECK(steer_world_step(w, 7, nullptr) == STEER_E_INVALID_ARGUMENT);
  steer_world_destroy(w);
}

TEST_CASE("server starts and stops through the C interface") {
  Tmp tmp;
  steer_server* s = nullptr;
  const json opts = {{"port", 0}, {"export_dir", (tmp.path / "sessions").string()}};
  REQUIRE(steer_server_start(nullptr, opts.dump().c_str(), &s) == STEER_OK);
  CHECK(steer_server_port(s) > 0);
  steer_server_stop(s);
  CHECK(steer_server_wait(s) == STEER_OK);
  steer_server_destroy(s);
  CHECK(steer_server_start(nullptr, "{\"train\": {}}", &s) == STEER_E_INVALID_ARGUMENT);
}

TEST_CASE("CLI exit codes") {
  Tmp tmp;
  const std::string set = "--set frame.height=16 --set frame.width=16 --set output_dir='\"" + tmp.path.string() + "\"'";
  CHECK(cli("--help") == 0);
  CHECK(cli("") == 2);
  CHECK(cli("demo-record --bogus") == 2);
  CHECK(cli("-q " + set + " train-policy --dataset " + (tmp.path / "none").string()) == 2);
  CHECK_FALSE(fs::exists(tmp.path / "models"));
  CHECK(cli("-q " + set + " --set demo.ticks=50 demo-record --seed 1") == 0);
  CHECK(cli("-q " + set + " --set rl.init_mode='\"il\"' rl-train --policy " + (tmp.path / "none").string() +
            " --reward " + (tmp.path / "none").string()) == 2);
  CHECK(cli("-q " + set + " evaluate " + (tmp.path / "none").string()) == 2);
  CHECK(cli("-q " + set + " train-reward --dataset " + (tmp.path / "datasets" / "demo").string()) == 2);
  // unwritable destination is a runtime failure
  std::ofstream(tmp.path / "file") << "x";
  CHECK(cli("-q " + set + " demo-record --out " + (tmp.path / "file" / "sub").string()) == 1);
  std::ofstream(tmp.path / "bad.json") << "{\"demo\": {\"tiks\": 3}}";
  CHECK(cli("-q --config " + (tmp.path / "bad.json").string() + " demo-record") == 2);
}

#include "steer/steer.h"

#include <cstring>
#include <memory>
#include <string>
#include <thread>

#include "steer/error.hpp"
#include "steer/learn/observation.hpp"
#include "steer/nn/checkpoint.hpp"
#include "steer/pipeline/report.hpp"
#include "steer/pipeline/stages.hpp"
#include "steer/service/server.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace steer;

struct steer_pipeline {
  pipeline::PipelineConfig cfg;
  steer_progress_fn progress = nullptr;
  void* user = nullptr;
};

struct steer_server {
  std::unique_ptr<service::Server> server;
  std::thread trainer;
  std::string trainer_error;
};

struct steer_world {
  sim::World world;
};

struct steer_net {
  nn::Network net;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
steer_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return STEER_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<steer_status>(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return STEER_E_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return STEER_E_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw Error(Errc::invalid_argument, std::string(what) + " must not be NULL");
}

json parse_args(const char* args_json) {
  if (!args_json || !*args_json) return json::object();
  json j = json::parse(args_json);
  if (!j.is_object()) throw Error(Errc::invalid_argument, "stage arguments must be a JSON object");
  return j;
}

std::uint64_t seed_arg(const json& a, const pipeline::PipelineConfig& cfg) {
  if (a.contains("seed")) return a["seed"].get<std::uint64_t>();
  return cfg.seeds.front();
}

fs::path path_arg(const json& a, const char* key, const fs::path& fallback) {
  return a.contains(key) ? fs::path(a[key].get<std::string>()) : fallback;
}

std::optional<fs::path> optional_model(const json& a, const char* key, const fs::path& fallback) {
  if (a.contains(key)) {
    if (a[key].is_null()) return std::nullopt;
    return fs::path(a[key].get<std::string>());
  }
  if (fs::exists(fallback / pipeline::kCheckpointFile)) return fallback;
  return std::nullopt;
}

json run_stage(steer_pipeline& p, const std::string& stage, const json& a, learn::RLObserver* observer) {
  const pipeline::PipelineConfig& cfg = p.cfg;
  const pipeline::Layout layout{cfg.output_dir};
  pipeline::Progress progress;
  if (p.progress) {
    progress = [&p](const json& j) { p.progress(p.user, j.dump().c_str()); };
  }
  if (stage == "demo-record") {
    return pipeline::run_demo_record(cfg, seed_arg(a, cfg), path_arg(a, "out", layout.dataset(teach::DatasetKind::demo)));
  }
  if (stage == "label-record") {
    const auto kind = teach::dataset_kind_from_string(a.value("channel", "reward"));
    return pipeline::run_label_record(cfg, kind, seed_arg(a, cfg), path_arg(a, "out", layout.dataset(kind)));
  }
  if (stage == "train-policy") {
    return pipeline::run_train_policy(cfg, path_arg(a, "dataset", layout.dataset(teach::DatasetKind::demo)),
                                      seed_arg(a, cfg), path_arg(a, "out", layout.policy()), progress);
  }
  if (stage == "train-reward") {
    const double fraction = a.value("fraction", cfg.reward_fraction);
    return pipeline::run_train_reward(cfg, path_arg(a, "dataset", layout.dataset(teach::DatasetKind::reward)),
                                      fraction, seed_arg(a, cfg), path_arg(a, "out", layout.reward(fraction)),
                                      progress);
  }
  if (stage == "train-safety") {
    return pipeline::run_train_safety(cfg, path_arg(a, "dataset", layout.dataset(teach::DatasetKind::safety)),
                                      seed_arg(a, cfg), path_arg(a, "out", layout.safety()), progress);
  }
  if (stage == "rl-train") {
    pipeline::RLStageInputs in;
    in.reward = path_arg(a, "reward", layout.reward());
    in.eval_reward = optional_model(a, "eval_reward", fs::path());
    in.policy = optional_model(a, "policy", layout.policy());
    if (cfg.rl.safety_enabled) in.safety = optional_model(a, "safety", layout.safety());
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (a.contains("seeds")) seeds = a["seeds"].get<std::vector<std::uint64_t>>();
    if (a.contains("seed")) seeds = {a["seed"].get<std::uint64_t>()};
    json runs = json::array();
    for (const auto seed : seeds) {
      const fs::path out = a.contains("out") ? fs::path(a["out"].get<std::string>()) / ("seed-" + std::to_string(seed))
                                             : layout.rl(cfg.rl, seed);
      json m = pipeline::run_rl_train(cfg, in, seed, out, observer, progress);
      m["dir"] = out.string();
      runs.push_back(std::move(m));
    }
    return {{"runs", runs}};
  }
  if (stage == "evaluate") {
    if (!a.contains("net")) throw Error(Errc::invalid_argument, "evaluate needs a network checkpoint (net)");
    const std::size_t ticks = a.value("ticks", cfg.eval_ticks);
    std::optional<fs::path> manifest;
    if (a.contains("out")) manifest = fs::path(a["out"].get<std::string>());
    return pipeline::run_evaluate(cfg, a["net"].get<std::string>(), path_arg(a, "reward", layout.reward()), ticks,
                                  manifest);
  }
  if (stage == "report") {
    std::vector<fs::path> dirs;
    for (const auto& d : a.value("runs", json::array())) dirs.emplace_back(d.get<std::string>());
    if (dirs.empty()) throw Error(Errc::invalid_argument, "report needs at least one run directory");
    return pipeline::run_report(dirs, path_arg(a, "out", cfg.output_dir / "report"));
  }
  throw Error(Errc::invalid_argument, "unknown stage '" + stage + "'");
}

}  // namespace

extern "C" {

const char* steer_version(void) { return "0.1.0"; }

const char* steer_status_name(steer_status s) {
  switch (s) {
    case STEER_OK: return "ok";
    case STEER_E_INVALID_ARGUMENT: return "invalid_argument";
    case STEER_E_SHAPE_MISMATCH: return "shape_mismatch";
    case STEER_E_IO: return "io";
    case STEER_E_MISSING_INPUT: return "missing_input";
    case STEER_E_UNTRAINABLE: return "untrainable";
    case STEER_E_DIVERGENCE: return "divergence";
    case STEER_E_CONFLICT: return "conflict";
    case STEER_E_NOT_FOUND: return "not_found";
    case STEER_E_BAD_STATE: return "bad_state";
    case STEER_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* steer_last_error(void) { return g_last_error.c_str(); }

void steer_string_free(char* s) { std::free(s); }

steer_status steer_pipeline_open(const char* config_path, const char* overrides_json, steer_pipeline** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    json j;
    if (config_path) {
      j = pipeline::load_config(config_path).to_json();
    } else {
      j = pipeline::PipelineConfig{}.to_json();
    }
    if (overrides_json && *overrides_json) {
      const json ov = json::parse(overrides_json);
      if (!ov.is_array()) throw Error(Errc::invalid_argument, "overrides must be a JSON array of strings");
      for (const auto& o : ov) pipeline::apply_override(j, o.get<std::string>());
    }
    auto p = std::make_unique<steer_pipeline>();
    p->cfg = pipeline::PipelineConfig::from_json(j);
    *out = p.release();
  });
}

void steer_pipeline_close(steer_pipeline* p) { delete p; }

steer_status steer_pipeline_config(const steer_pipeline* p, char** out_json) {
  return guarded([&] {
    require(p, "pipeline");
    require(out_json, "out_json");
    json j = {{"config", p->cfg.to_json()}, {"config_hash", p->cfg.hash()}};
    *out_json = dup_string(j.dump(2));
  });
}

steer_status steer_pipeline_set_progress(steer_pipeline* p, steer_progress_fn fn, void* user) {
  return guarded([&] {
    require(p, "pipeline");
    p->progress = fn;
    p->user = user;
  });
}

steer_status steer_pipeline_run(steer_pipeline* p, const char* stage, const char* args_json, char** out_json) {
  return guarded([&] {
    require(p, "pipeline");
    require(stage, "stage");
    if (out_json) *out_json = nullptr;
    const json result = run_stage(*p, stage, parse_args(args_json), nullptr);
    if (out_json) *out_json = dup_string(result.dump(2));
  });
}

steer_status steer_server_start(steer_pipeline* p, const char* options_json, steer_server** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const json o = parse_args(options_json);
    service::ServerOptions so;
    so.host = o.value("host", so.host);
    so.port = o.value("port", so.port);
    so.export_dir = o.value("export_dir", so.export_dir.string());
    so.handle_signals = o.value("handle_signals", so.handle_signals);
    if (p) so.spectator_frame = p->cfg.frame;
    if (o.contains("train") && !p) throw Error(Errc::invalid_argument, "streaming a training run needs a pipeline");
    auto s = std::make_unique<steer_server>();
    s->server = std::make_unique<service::Server>(so);
    s->server->start();
    if (o.contains("train")) {
      json args = o["train"];
      if (!args.is_object()) args = json::object();
      steer_server* raw = s.get();
      s->trainer = std::thread([raw, p, args] {
        try {
          run_stage(*p, "rl-train", args, &raw->server->trainer_feed());
        } catch (const std::exception& e) {
          raw->trainer_error = e.what();
        }
      });
    }
    *out = s.release();
  });
}

uint16_t steer_server_port(const steer_server* s) { return s ? s->server->port() : 0; }

steer_status steer_server_wait(steer_server* s) {
  return guarded([&] {
    require(s, "server");
    s->server->wait();
    if (s->trainer.joinable()) s->trainer.join();
    if (!s->trainer_error.empty()) throw Error(Errc::bad_state, "training stopped: " + s->trainer_error);
  });
}

void steer_server_stop(steer_server* s) {
  if (s) s->server->stop();
}

void steer_server_destroy(steer_server* s) {
  if (!s) return;
  s->server->stop();
  if (s->trainer.joinable()) s->trainer.join();
  delete s;
}

steer_status steer_world_create(const char* track, steer_world** out) {
  return guarded([&] {
    require(track, "track");
    require(out, "out");
    *out = new steer_world{sim::World(sim::Track::load(pipeline::resolve_track(track)))};
  });
}

void steer_world_destroy(steer_world* w) { delete w; }

steer_status steer_world_step(steer_world* w, int action, steer_step_events* events) {
  return guarded([&] {
    require(w, "world");
    const sim::StepResult r = w->world.step(sim::action_from_index(action));
    if (events) {
      events->off_road_entry = r.events.off_road_entry;
      events->on_road_entry = r.events.on_road_entry;
      events->restart_stuck = r.events.restart_stuck;
      events->restart_wrong_direction = r.events.restart_wrong_direction;
    }
  });
}

steer_status steer_world_state(const steer_world* w, steer_car_state* out) {
  return guarded([&] {
    require(w, "world");
    require(out, "out");
    const sim::CarState& c = w->world.state();
    const sim::Probe p = sim::probe(w->world);
    *out = {c.s, c.d, c.psi, c.speed, p.lane_index.value_or(0), p.on_road, p.aligned};
  });
}

steer_status steer_world_render(const steer_world* w, size_t height, size_t width, uint8_t* rgb, size_t len) {
  return guarded([&] {
    require(w, "world");
    require(rgb, "rgb");
    if (len != 3 * height * width) throw Error(Errc::shape_mismatch, "rgb buffer must hold 3 * height * width bytes");
    sim::FrameConfig fc;
    fc.height = height;
    fc.width = width;
    const sim::Frame f = sim::render(w->world, fc);
    const std::size_t plane = height * width;
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = f.pixels[c * plane + i];
    }
  });
}

steer_status steer_net_load(const char* path, steer_net** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new steer_net{nn::load_checkpoint(pipeline::checkpoint_path(path))};
    (*out)->net.set_mode(nn::Mode::eval);
  });
}

void steer_net_destroy(steer_net* n) { delete n; }

steer_status steer_net_input_shape(const steer_net* n, size_t* channels, size_t* height, size_t* width) {
  return guarded([&] {
    require(n, "net");
    const nn::Shape& s = n->net.input_shape();
    if (s.size() != 3) throw Error(Errc::shape_mismatch, "network input is not an image");
    if (channels) *channels = s[0];
    if (height) *height = s[1];
    if (width) *width = s[2];
  });
}

size_t steer_net_output_size(const steer_net* n) { return n ? nn::shape_size(n->net.output_shape()) : 0; }

steer_status steer_net_forward(steer_net* n, const uint8_t* obs, size_t len, float* out, size_t out_len) {
  return guarded([&] {
    require(n, "net");
    require(obs, "obs");
    require(out, "out");
    const nn::Shape& s = n->net.input_shape();
    if (s.size() != 3 || s[0] != sim::Observation::kChannels || len != nn::shape_size(s)) {
      throw Error(Errc::shape_mismatch, "observation does not match the network input " + nn::shape_string(s));
    }
    const std::size_t k = nn::shape_size(n->net.output_shape());
    if (out_len < k) throw Error(Errc::shape_mismatch, "output buffer too small");
    sim::Observation o{s[1], s[2], std::vector<std::uint8_t>(obs, obs + len)};
    const nn::Tensor y = n->net.forward(learn::make_batch(o));
    std::copy(y.values().begin(), y.values().end(), out);
  });
}

}  // extern "C"

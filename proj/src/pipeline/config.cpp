#include "steer/pipeline/config.hpp"

#include <fstream>
#include <set>

#include "steer/error.hpp"
#include "steer/util/hash.hpp"

namespace steer::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::invalid_argument, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error(Errc::invalid_argument, "unknown config key " + where + "." + k);
  }
}

json label_to_json(const LabelStage& s) {
  return {{"ticks", s.ticks}, {"edge_bias", s.edge_bias}, {"driver", s.driver}};
}

LabelStage label_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"ticks", "edge_bias", "driver"}, where);
  LabelStage s;
  s.ticks = j.value("ticks", s.ticks);
  s.edge_bias = j.value("edge_bias", s.edge_bias);
  s.driver = j.value("driver", s.driver);
  return s;
}

const std::set<std::string> kTrainKeys{"batch_size", "max_iterations", "eval_every", "patience", "lr", "seed"};

}  // namespace

json train_config_to_json(const learn::TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"max_iterations", c.max_iterations}, {"eval_every", c.eval_every},
          {"patience", c.patience},     {"lr", c.adam.lr},                    {"seed", c.seed}};
}

learn::TrainConfig train_config_from_json(const json& j, learn::TrainConfig c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.patience = j.value("patience", c.patience);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.seed = j.value("seed", c.seed);
  return c;
}

json PipelineConfig::to_json() const {
  json safety_j = train_config_to_json(safety);
  safety_j["threshold"] = safety_params.threshold;
  safety_j["hysteresis"] = safety_params.hysteresis;
  safety_j["max_ticks"] = safety_params.max_ticks;
  json reward_j = train_config_to_json(reward);
  reward_j["fraction"] = reward_fraction;
  return {{"track", track},
          {"frame", {{"height", frame.height}, {"width", frame.width}, {"forward_m", frame.forward_m},
                     {"lateral_m", frame.lateral_m}, {"hud", frame.hud}}},
          {"world", {{"speed", world.speed}, {"dt", world.dt}, {"steer_step", world.steer_step},
                     {"spawn_s", world.spawn_s}, {"spawn_lane", world.spawn_lane}}},
          {"gap", gap},
          {"oracle", {{"deadband", oracle.deadband}, {"lookahead", oracle.lookahead}}},
          {"demo", {{"ticks", demo.ticks}, {"noise_rate", demo.noise_rate}}},
          {"reward_labels", label_to_json(reward_labels)},
          {"safety_labels", label_to_json(safety_labels)},
          {"imitation", train_config_to_json(imitation)},
          {"reward", reward_j},
          {"safety", safety_j},
          {"rl", rl.to_json()},
          {"eval_ticks", eval_ticks},
          {"seeds", seeds},
          {"output_dir", output_dir.string()}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"track", "frame", "world", "gap", "oracle", "demo", "reward_labels", "safety_labels",
                  "imitation", "reward", "safety", "rl", "eval_ticks", "seeds", "output_dir"},
                 "config");
  PipelineConfig c;
  try {
    c.track = j.value("track", c.track);
    if (j.contains("frame")) {
      const json& f = j["frame"];
      reject_unknown(f, {"height", "width", "forward_m", "lateral_m", "hud"}, "frame");
      c.frame.height = f.value("height", c.frame.height);
      c.frame.width = f.value("width", c.frame.width);
      c.frame.forward_m = f.value("forward_m", c.frame.forward_m);
      c.frame.lateral_m = f.value("lateral_m", c.frame.lateral_m);
      c.frame.hud = f.value("hud", c.frame.hud);
    }
    if (j.contains("world")) {
      const json& w = j["world"];
      reject_unknown(w, {"speed", "dt", "steer_step", "spawn_s", "spawn_lane"}, "world");
      c.world.speed = w.value("speed", c.world.speed);
      c.world.dt = w.value("dt", c.world.dt);
      c.world.steer_step = w.value("steer_step", c.world.steer_step);
      c.world.spawn_s = w.value("spawn_s", c.world.spawn_s);
      c.world.spawn_lane = w.value("spawn_lane", c.world.spawn_lane);
    }
    c.gap = j.value("gap", c.gap);
    if (j.contains("oracle")) {
      reject_unknown(j["oracle"], {"deadband", "lookahead"}, "oracle");
      c.oracle.deadband = j["oracle"].value("deadband", c.oracle.deadband);
      c.oracle.lookahead = j["oracle"].value("lookahead", c.oracle.lookahead);
    }
    if (j.contains("demo")) {
      reject_unknown(j["demo"], {"ticks", "noise_rate"}, "demo");
      c.demo.ticks = j["demo"].value("ticks", c.demo.ticks);
      c.demo.noise_rate = j["demo"].value("noise_rate", c.demo.noise_rate);
    }
    if (j.contains("reward_labels")) c.reward_labels = label_from_json(j["reward_labels"], "reward_labels");
    if (j.contains("safety_labels")) c.safety_labels = label_from_json(j["safety_labels"], "safety_labels");
    if (j.contains("imitation")) {
      reject_unknown(j["imitation"], kTrainKeys, "imitation");
      c.imitation = train_config_from_json(j["imitation"]);
    }
    if (j.contains("reward")) {
      auto keys = kTrainKeys;
      keys.insert("fraction");
      reject_unknown(j["reward"], keys, "reward");
      c.reward = train_config_from_json(j["reward"]);
      c.reward_fraction = j["reward"].value("fraction", c.reward_fraction);
    }
    if (j.contains("safety")) {
      auto keys = kTrainKeys;
      keys.insert({"threshold", "hysteresis", "max_ticks"});
      reject_unknown(j["safety"], keys, "safety");
      c.safety = train_config_from_json(j["safety"]);
      c.safety_params.threshold = j["safety"].value("threshold", c.safety_params.threshold);
      c.safety_params.hysteresis = j["safety"].value("hysteresis", c.safety_params.hysteresis);
      c.safety_params.max_ticks = j["safety"].value("max_ticks", c.safety_params.max_ticks);
    }
    if (j.contains("rl")) {
      json rl = j["rl"];
      rl.erase("final_layer_init_range");
      reject_unknown(rl,
                     {"gamma", "epsilon", "batch_size", "target_sync_period", "epoch_frames", "total_frames",
                      "latency_ticks", "replay_capacity", "policy_eval_frames", "safety_enabled",
                      "push_takeover_transitions", "init_mode", "lr", "seed"},
                     "rl");
      c.rl = learn::RLConfig::from_json(rl);
    }
    c.eval_ticks = j.value("eval_ticks", c.eval_ticks);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("config: ") + e.what());
  }
  if (c.seeds.empty()) throw Error(Errc::invalid_argument, "config: seeds must not be empty");
  if (c.gap == 0) throw Error(Errc::invalid_argument, "config: gap must be positive");
  c.rl.validate();
  return c;
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  j.erase("seeds");
  j.erase("output_dir");
  j["rl"].erase("seed");
  for (const char* k : {"imitation", "reward", "safety"}) j[k].erase("seed");
  return util::sha256_hex(j.dump());
}

teach::SimSetup PipelineConfig::sim_setup() const {
  return {sim::Track::load(resolve_track(track)), world, frame, gap};
}

fs::path resolve_track(const std::string& ref) {
  if (ref.empty()) throw Error(Errc::invalid_argument, "empty track reference");
  const bool looks_like_path = ref.find('/') != std::string::npos || fs::path(ref).extension() == ".json";
  const fs::path p = looks_like_path ? fs::path(ref) : fs::path(STEER_DATA_DIR) / "tracks" / (ref + ".json");
  if (!fs::exists(p)) throw Error(Errc::not_found, "unknown track '" + ref + "'");
  return p;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_input, "cannot read config " + path.string());
  try {
    return PipelineConfig::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(Errc::invalid_argument, "config " + path.string() + ": " + e.what());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(Errc::invalid_argument, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  std::string pointer = "/" + key;
  for (auto& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  j[json::json_pointer(pointer)] = value;
}

}  // namespace steer::pipeline

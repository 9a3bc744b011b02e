// Command-line front end over the C interface.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "steer/steer.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int exit_code(steer_status s) {
  switch (s) {
    case STEER_OK: return kExitOk;
    case STEER_E_INVALID_ARGUMENT:
    case STEER_E_MISSING_INPUT:
    case STEER_E_NOT_FOUND: return kExitUsage;
    default: return kExitFailure;
  }
}

int fail(steer_status s) {
  std::fprintf(stderr, "steer: %s: %s\n", steer_status_name(s), steer_last_error());
  return exit_code(s);
}

struct Common {
  std::string config;
  std::vector<std::string> set;
  bool quiet = false;
};

void print_progress(void*, const char* line) { std::fprintf(stderr, "%s\n", line); }

struct PipelineHandle {
  steer_pipeline* p = nullptr;
  ~PipelineHandle() { steer_pipeline_close(p); }
};

steer_status open_pipeline(const Common& c, PipelineHandle& h) {
  const std::string overrides = json(c.set).dump();
  const steer_status s = steer_pipeline_open(c.config.empty() ? nullptr : c.config.c_str(), overrides.c_str(), &h.p);
  if (s == STEER_OK && !c.quiet) steer_pipeline_set_progress(h.p, print_progress, nullptr);
  return s;
}

int run(const Common& c, const std::string& stage, const json& args) {
  PipelineHandle h;
  if (auto s = open_pipeline(c, h); s != STEER_OK) return fail(s);
  char* out = nullptr;
  const steer_status s = steer_pipeline_run(h.p, stage.c_str(), args.dump().c_str(), &out);
  if (s != STEER_OK) return fail(s);
  if (stage == "evaluate") {
    const json r = json::parse(out);
    std::printf("%.6f\n", r.at("average_reward").get<double>());
  } else {
    std::printf("%s\n", out);
  }
  steer_string_free(out);
  return kExitOk;
}

template <typename T>
void put(json& args, const char* key, const std::optional<T>& v) {
  if (v) args[key] = *v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steer: imitation, reward induction, safety and DDQN training on a simulated track"};
  app.require_subcommand(1);
  app.set_version_flag("--version", steer_version());

  Common common;
  app.add_option("-c,--config", common.config, "Pipeline config file (JSON)")->check(CLI::ExistingFile);
  app.add_option("--set", common.set, "Override a config value, e.g. rl.epsilon=0.1 (repeatable)");
  app.add_flag("-q,--quiet", common.quiet, "Suppress progress lines on stderr");

  json args = json::object();
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, dataset;
  std::string stage;

  auto stage_cmd = [&](const char* name, const char* help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    cmd->callback([&stage, name] { stage = name; });
    return cmd;
  };

  auto* demo = stage_cmd("demo-record", "Record oracle demonstrations");
  demo->add_option("--seed", seed, "Recording seed");
  demo->add_option("--out", out, "Dataset directory");

  std::string channel = "reward";
  auto* label = stage_cmd("label-record", "Record oracle reward or safety labels");
  label->add_option("--channel", channel, "reward or safety")->check(CLI::IsMember({"reward", "safety"}));
  label->add_option("--seed", seed, "Recording seed");
  label->add_option("--out", out, "Dataset directory");

  std::optional<double> fraction;
  for (const char* name : {"train-policy", "train-reward", "train-safety"}) {
    auto* cmd = stage_cmd(name, "Train a network on a recorded dataset");
    cmd->add_option("--dataset", dataset, "Dataset directory");
    cmd->add_option("--seed", seed, "Training seed");
    cmd->add_option("--out", out, "Model directory");
    if (std::string(name) == "train-reward") {
      cmd->add_option("--fraction", fraction, "Train on a random subsample of the labels")
          ->check(CLI::Range(0.0, 1.0));
    }
  }

  std::vector<std::uint64_t> seeds;
  std::optional<std::string> reward, eval_reward, policy, safety, init_mode;
  bool with_safety = false;
  auto* rl = stage_cmd("rl-train", "Train the Q network with DDQN");
  rl->add_option("--seed", seeds, "Run seed (repeatable)");
  rl->add_option("--reward", reward, "Reward model");
  rl->add_option("--eval-reward", eval_reward, "Independent reward model for scoring");
  rl->add_option("--policy", policy, "Imitation policy");
  rl->add_option("--safety", safety, "Safety model");
  rl->add_option("--init-mode", init_mode, "random, il or il+policy_eval")
      ->check(CLI::IsMember({"random", "il", "il+policy_eval"}));
  rl->add_flag("--with-safety", with_safety, "Enable safety takeovers");
  rl->add_option("--out", out, "Run directory (one seed-N subdirectory per seed)");

  std::string net;
  std::optional<std::size_t> ticks;
  auto* eval = stage_cmd("evaluate", "Average reward of a policy or Q network");
  eval->add_option("net", net, "Policy or Q model")->required();
  eval->add_option("--reward", reward, "Reward model");
  eval->add_option("--ticks", ticks, "Simulation ticks");
  eval->add_option("--out", out, "Write a manifest here");

  std::vector<std::string> runs;
  auto* report = stage_cmd("report", "Figure tables from rl-train runs");
  report->add_option("runs", runs, "Run directories")->required();
  report->add_option("--out", out, "Report directory");

  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;
  std::string export_dir = "sessions";
  bool train = false;
  auto* serve = app.add_subcommand("serve", "Run the teaching session service");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--export-dir", export_dir, "Where session exports are written");
  serve->add_flag("--train", train, "Run rl-train in the background and stream it to spectators");
  serve->add_option("--seed", seeds, "Seed for --train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (init_mode) common.set.push_back("rl.init_mode=\"" + *init_mode + "\"");
  if (with_safety) common.set.push_back("rl.safety_enabled=true");

  put(args, "seed", seed);
  put(args, "out", out);
  put(args, "dataset", dataset);
  put(args, "fraction", fraction);
  put(args, "reward", reward);
  put(args, "eval_reward", eval_reward);
  put(args, "policy", policy);
  put(args, "safety", safety);
  put(args, "ticks", ticks);

  if (serve->parsed()) {
    PipelineHandle h;
    if (auto s = open_pipeline(common, h); s != STEER_OK) return fail(s);
    json opts = {{"host", host}, {"port", port}, {"export_dir", export_dir}, {"handle_signals", true}};
    if (train) {
      json t = json::object();
      if (!seeds.empty()) t["seeds"] = seeds;
      opts["train"] = t;
    }
    steer_server* server = nullptr;
    if (auto s = steer_server_start(h.p, opts.dump().c_str(), &server); s != STEER_OK) return fail(s);
    std::printf("listening on %s:%u\n", host.c_str(), static_cast<unsigned>(steer_server_port(server)));
    std::fflush(stdout);
    const steer_status s = steer_server_wait(server);
    steer_server_destroy(server);
    return s == STEER_OK ? kExitOk : fail(s);
  }

  if (stage == "label-record") args["channel"] = channel;
  if (stage == "rl-train" && !seeds.empty()) args["seeds"] = seeds;
  if (stage == "evaluate") args["net"] = net;
  if (stage == "report") args["runs"] = runs;
  return run(common, stage, args);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "steer/learn/rl.hpp"
#include "steer/learn/safety.hpp"
#include "steer/learn/supervised.hpp"
#include "steer/teach/record.hpp"

namespace steer::pipeline {

struct DemoStage {
  std::size_t ticks = 10000;
  double noise_rate = 0.05;
};

struct LabelStage {
  std::size_t ticks = 10000;
  double edge_bias = 0.5;
  std::string driver = "sweep";  // sweep | center | lane<k>
};

/// Every stage's settings plus the shared simulator setup.
struct PipelineConfig {
  std::string track = "county";  // bundled track name or path to a track file
  sim::FrameConfig frame;
  sim::WorldConfig world;
  std::size_t gap = 5;
  teach::OracleConfig oracle;

  DemoStage demo;
  LabelStage reward_labels;
  LabelStage safety_labels;
  learn::TrainConfig imitation;
  learn::TrainConfig reward;
  learn::TrainConfig safety;
  double reward_fraction = 1.0;
  learn::SafetyParams safety_params;
  learn::RLConfig rl;
  std::size_t eval_ticks = 2000;

  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "runs/default";

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j);

  /// SHA-256 of the canonical config with seeds and the output directory
  /// removed, so seed replicas of one setup share a hash.
  std::string hash() const;

  teach::SimSetup sim_setup() const;
};

/// Resolves a bundled track name ("county") or a path to a track file.
std::filesystem::path resolve_track(const std::string& ref);

PipelineConfig load_config(const std::filesystem::path& path);
/// Applies "a.b.c=value" overrides; value is parsed as JSON, falling back to
/// a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

nlohmann::json train_config_to_json(const learn::TrainConfig& c);
learn::TrainConfig train_config_from_json(const nlohmann::json& j, learn::TrainConfig base = {});

}  // namespace steer::pipeline

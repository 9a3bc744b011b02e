#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "json.hpp"
#include "steer/pipeline/config.hpp"

namespace steer::pipeline {

namespace fs = std::filesystem;

/// Default artifact locations under the output directory.
struct Layout {
  fs::path root;

  fs::path dataset(teach::DatasetKind k) const { return root / "datasets" / std::string(teach::to_string(k)); }
  fs::path policy() const { return root / "models" / "policy"; }
  fs::path reward(double fraction = 1.0) const;
  fs::path safety() const { return root / "models" / "safety"; }
  fs::path rl(const learn::RLConfig& rl, std::uint64_t seed) const;
  fs::path evaluation() const { return root / "eval"; }
};

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kRunManifest = "run.json";
inline constexpr const char* kMetricsFile = "metrics.jsonl";

/// Receives one JSON object per progress update (epochs, stage summaries).
using Progress = std::function<void(const nlohmann::json&)>;

nlohmann::json run_demo_record(const PipelineConfig& cfg, std::uint64_t seed, const fs::path& out);
nlohmann::json run_label_record(const PipelineConfig& cfg, teach::DatasetKind channel, std::uint64_t seed,
                                const fs::path& out);

nlohmann::json run_train_policy(const PipelineConfig& cfg, const fs::path& dataset, std::uint64_t seed,
                                const fs::path& out, const Progress& progress = {});
nlohmann::json run_train_reward(const PipelineConfig& cfg, const fs::path& dataset, double fraction,
                                std::uint64_t seed, const fs::path& out, const Progress& progress = {});
nlohmann::json run_train_safety(const PipelineConfig& cfg, const fs::path& dataset, std::uint64_t seed,
                                const fs::path& out, const Progress& progress = {});

struct RLStageInputs {
  fs::path reward;                    // model directory or checkpoint file
  std::optional<fs::path> eval_reward;
  std::optional<fs::path> policy;
  std::optional<fs::path> safety;
};

/// Runs rl_train, appending each epoch to metrics.jsonl as it completes.
/// A divergence leaves the last healthy network as model.ckpt and marks
/// the manifest.
nlohmann::json run_rl_train(const PipelineConfig& cfg, const RLStageInputs& in, std::uint64_t seed,
                            const fs::path& out, learn::RLObserver* observer = nullptr,
                            const Progress& progress = {});

/// Greedy closed-loop score of a policy or Q checkpoint under a reward net.
nlohmann::json run_evaluate(const PipelineConfig& cfg, const fs::path& net, const fs::path& reward,
                            std::size_t ticks, const std::optional<fs::path>& manifest_out = std::nullopt);

/// Accepts a model directory (containing model.ckpt) or a checkpoint file.
fs::path checkpoint_path(const fs::path& p);

nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& j);

}  // namespace steer::pipeline

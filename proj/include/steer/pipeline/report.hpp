#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "steer/learn/rl.hpp"

namespace steer::pipeline {

struct RunMetrics {
  std::filesystem::path dir;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<learn::EpochMetrics> epochs;
};

/// Reads run.json and metrics.jsonl from an rl-train output directory.
/// Lines flagging an abort are skipped.
RunMetrics load_run(const std::filesystem::path& dir);

/// Median; the mean of the middle pair for even counts.
double median(std::vector<double> v);

/// Accident buckets [0, 3), [3, 12), [12, 39), [39, 60) rescaled to a run
/// of `epochs` epochs.
std::vector<std::pair<std::size_t, std::size_t>> accident_buckets(std::size_t epochs);

/// Per-epoch series (per seed and median) for reward, action value,
/// takeover fraction, accidents and, when present, the evaluation reward,
/// plus bucketed mean accidents per epoch. Runs must share a config hash.
nlohmann::json build_report(const std::vector<RunMetrics>& runs);

/// Writes report.json and one CSV per series into out_dir.
nlohmann::json run_report(const std::vector<std::filesystem::path>& run_dirs,
                          const std::filesystem::path& out_dir);

}  // namespace steer::pipeline

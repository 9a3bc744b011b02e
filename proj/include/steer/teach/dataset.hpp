#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "steer/sim/render.hpp"

namespace steer::teach {

enum class DatasetKind { demo, reward, safety };

std::string_view to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(std::string_view s);

/// Observations paired with either action indices (demo) or +-1 labels
/// (reward, safety). `meta` carries provenance fields copied into the
/// manifest (track, seed, noise_rate, edge_bias, ...).
struct Dataset {
  DatasetKind kind = DatasetKind::demo;
  std::vector<sim::Observation> observations;
  std::vector<int> targets;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const noexcept { return observations.size(); }
  /// Throws Errc::invalid_argument on mismatched counts, sizes, or targets
  /// outside the kind's range.
  void validate() const;
  /// Records with the given indices, in the given order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// Directory layout: manifest.json, frames.bin ("STEERDS1", u32 count,
/// channels, height, width, then u8 pixels), and actions.txt or labels.txt
/// with one integer per line. Returns the manifest written.
nlohmann::json save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Content hash over frames and targets.
std::string dataset_hash(const Dataset& d);

}  // namespace steer::teach

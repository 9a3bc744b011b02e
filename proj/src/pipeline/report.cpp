#include "steer/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "steer/error.hpp"
#include "steer/pipeline/stages.hpp"

namespace steer::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

RunMetrics load_run(const fs::path& dir) {
  const json m = read_json(dir / kRunManifest);
  RunMetrics r;
  r.dir = dir;
  r.config_hash = m.at("config_hash").get<std::string>();
  r.seed = m.value("seed", std::uint64_t{0});
  std::ifstream in(dir / kMetricsFile);
  if (!in) throw Error(Errc::missing_input, "no metrics file in " + dir.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(Errc::io, (dir / kMetricsFile).string() + ":" + std::to_string(n) + ": malformed record");
    }
    if (j.contains("aborted")) continue;
    r.epochs.push_back(learn::EpochMetrics::from_json(j));
  }
  return r;
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::invalid_argument, "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::pair<std::size_t, std::size_t>> accident_buckets(std::size_t epochs) {
  static constexpr std::size_t kEdges[] = {0, 3, 12, 39, 60};
  std::vector<std::pair<std::size_t, std::size_t>> out;
  auto scale = [&](std::size_t e) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(e) * static_cast<double>(epochs) / 60.0));
  };
  for (std::size_t i = 0; i + 1 < std::size(kEdges); ++i) out.emplace_back(scale(kEdges[i]), scale(kEdges[i + 1]));
  return out;
}

json build_report(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw Error(Errc::invalid_argument, "report needs at least one run");
  for (const auto& r : runs) {
    if (r.config_hash != runs[0].config_hash) {
      throw Error(Errc::conflict, "runs " + runs[0].dir.string() + " and " + r.dir.string() +
                                      " have different config hashes; compare like with like");
    }
  }
  std::size_t epochs = runs[0].epochs.size();
  for (const auto& r : runs) epochs = std::min(epochs, r.epochs.size());

  using Getter = std::function<std::optional<double>(const learn::EpochMetrics&)>;
  const std::vector<std::pair<std::string, Getter>> series{
      {"avg_reward", [](const auto& m) { return std::optional<double>(m.avg_reward); }},
      {"avg_action_value", [](const auto& m) { return std::optional<double>(m.avg_action_value); }},
      {"takeover_fraction", [](const auto& m) { return std::optional<double>(m.takeover_fraction); }},
      {"accidents", [](const auto& m) { return std::optional<double>(static_cast<double>(m.accidents)); }},
      {"avg_eval_reward", [](const auto& m) { return m.avg_eval_reward; }},
  };

  json report = {{"config_hash", runs[0].config_hash}, {"epochs", epochs}, {"seeds", json::array()},
                 {"series", json::object()}};
  for (const auto& r : runs) report["seeds"].push_back(r.seed);
  for (const auto& [name, get] : series) {
    json rows = json::array();
    bool present = true;
    for (std::size_t e = 0; e < epochs && present; ++e) {
      std::vector<double> vals;
      for (const auto& r : runs) {
        const auto v = get(r.epochs[e]);
        if (!v) {
          present = false;
          break;
        }
        vals.push_back(*v);
      }
      if (present) rows.push_back({{"epoch", e}, {"per_seed", vals}, {"median", median(vals)}});
    }
    if (present) report["series"][name] = rows;
  }

  json buckets = json::array();
  for (const auto& [lo, hi] : accident_buckets(epochs)) {
    std::vector<double> per_seed;
    for (const auto& r : runs) {
      double total = 0.0;
      for (std::size_t e = lo; e < hi; ++e) total += static_cast<double>(r.epochs[e].accidents);
      per_seed.push_back(hi > lo ? total / static_cast<double>(hi - lo) : 0.0);
    }
    buckets.push_back({{"first_epoch", lo}, {"end_epoch", hi}, {"per_seed", per_seed}, {"median", median(per_seed)}});
  }
  report["accidents_per_epoch_by_bucket"] = buckets;
  return report;
}

json run_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  std::vector<RunMetrics> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  const json report = build_report(runs);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + out_dir.string() + ": " + ec.message());
  write_json(out_dir / "report.json", report);

  for (const auto& [name, rows] : report["series"].items()) {
    std::ofstream csv(out_dir / (name + ".csv"), std::ios::trunc);
    csv << "epoch";
    for (const auto& s : report["seeds"]) csv << ",seed_" << s.get<std::uint64_t>();
    csv << ",median\n";
    for (const auto& row : rows) {
      csv << row["epoch"].get<std::size_t>();
      for (const auto& v : row["per_seed"]) csv << ',' << v.get<double>();
      csv << ',' << row["median"].get<double>() << '\n';
    }
    if (!csv) throw Error(Errc::io, "cannot write " + (out_dir / (name + ".csv")).string());
  }
  std::ofstream csv(out_dir / "accidents_by_bucket.csv", std::ios::trunc);
  csv << "first_epoch,end_epoch";
  for (const auto& s : report["seeds"]) csv << ",seed_" << s.get<std::uint64_t>();
  csv << ",median\n";
  for (const auto& b : report["accidents_per_epoch_by_bucket"]) {
    csv << b["first_epoch"].get<std::size_t>() << ',' << b["end_epoch"].get<std::size_t>();
    for (const auto& v : b["per_seed"]) csv << ',' << v.get<double>();
    csv << ',' << b["median"].get<double>() << '\n';
  }
  return report;
}

}  // namespace steer::pipeline

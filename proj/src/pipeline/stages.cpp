#include "steer/pipeline/stages.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "steer/error.hpp"
#include "steer/learn/imitation.hpp"
#include "steer/learn/observation.hpp"
#include "steer/learn/reward.hpp"
#include "steer/nn/checkpoint.hpp"
#include "steer/util/hash.hpp"

namespace steer::pipeline {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Output directory that only appears under its final name once the stage
/// has succeeded. Creating it up front surfaces unwritable destinations
/// before any simulation runs.
class Staging {
 public:
  explicit Staging(const fs::path& out) : out_(out) {
    if (out.empty()) throw Error(Errc::invalid_argument, "empty output path");
    const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) throw Error(Errc::io, "cannot create " + parent.string() + ": " + ec.message());
    tmp_ = parent / (".partial-" + out.filename().string() + "-" + std::to_string(::getpid()));
    fs::remove_all(tmp_, ec);
    fs::create_directories(tmp_, ec);
    if (ec) throw Error(Errc::io, "cannot write under " + parent.string() + ": " + ec.message());
    std::ofstream probe(tmp_ / ".probe");
    if (!probe) throw Error(Errc::io, "output directory " + parent.string() + " is not writable");
    probe.close();
    fs::remove(tmp_ / ".probe");
  }
  ~Staging() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  const fs::path& dir() const { return tmp_; }

  void commit() {
    std::error_code ec;
    fs::remove_all(out_, ec);
    fs::rename(tmp_, out_, ec);
    if (ec) throw Error(Errc::io, "cannot move results to " + out_.string() + ": " + ec.message());
    committed_ = true;
  }

 private:
  fs::path out_;
  fs::path tmp_;
  bool committed_ = false;
};

json base_manifest(const std::string& stage, const PipelineConfig& cfg, std::uint64_t seed) {
  return {{"stage", stage},
          {"config_hash", cfg.hash()},
          {"seed", seed},
          {"inputs", json::object()},
          {"outputs", json::object()}};
}

std::string dataset_input_hash(const fs::path& dir) {
  return read_json(dir / "manifest.json").at("dataset_hash").get<std::string>();
}

teach::Driver make_driver(const std::string& name, std::uint64_t seed, const teach::OracleConfig& oc) {
  if (name == "sweep") return teach::sweep_driver(seed, teach::kExcursionBlock, oc);
  if (name == "center") return teach::center_driver(oc);
  if (name.rfind("lane", 0) == 0 && name.size() > 4) {
    return teach::lane_driver(std::stoi(name.substr(4)), oc);
  }
  throw Error(Errc::invalid_argument, "unknown label driver '" + name + "' (sweep | center | lane<k>)");
}

json record_dataset_stage(const std::string& stage, const PipelineConfig& cfg, std::uint64_t seed,
                          const fs::path& out, const std::function<teach::Dataset()>& record) {
  Staging staging(out);
  const auto t0 = Clock::now();
  teach::Dataset d = record();
  d.meta["config_hash"] = cfg.hash();
  const json dm = teach::save_dataset(d, staging.dir());
  json m = base_manifest(stage, cfg, seed);
  m["outputs"]["dataset"] = dm.at("dataset_hash");
  m["outputs"]["frames.bin"] = util::sha256_file(staging.dir() / "frames.bin");
  m["count"] = d.size();
  m["meta"] = d.meta;
  m["timing_ms"] = ms_since(t0);
  write_json(staging.dir() / kRunManifest, m);
  staging.commit();
  return m;
}

void check_shape(const nn::Network& net, const PipelineConfig& cfg, const std::string& what) {
  const nn::Shape want = learn::observation_shape(cfg.frame.height, cfg.frame.width);
  if (net.input_shape() != want) {
    throw Error(Errc::shape_mismatch, what + " expects input " + nn::shape_string(net.input_shape()) +
                                          " but the config renders " + nn::shape_string(want));
  }
}

void check_dataset_shape(const teach::Dataset& d, const PipelineConfig& cfg) {
  if (d.size() == 0) throw Error(Errc::invalid_argument, "dataset is empty");
  const auto& o = d.observations[0];
  if (o.height != cfg.frame.height || o.width != cfg.frame.width) {
    throw Error(Errc::shape_mismatch, "dataset frames are " + std::to_string(o.height) + "x" +
                                          std::to_string(o.width) + " but the config renders " +
                                          std::to_string(cfg.frame.height) + "x" +
                                          std::to_string(cfg.frame.width));
  }
}

using Trainer = std::function<learn::TrainedNet(const teach::Dataset&, const teach::Dataset&,
                                                const learn::TrainConfig&)>;

json train_stage(const std::string& stage, const PipelineConfig& cfg, learn::TrainConfig tc,
                 const fs::path& dataset_dir, std::uint64_t seed, const fs::path& out,
                 teach::DatasetKind kind, double fraction, const Trainer& train, const Progress& progress) {
  teach::Dataset d = teach::load_dataset(dataset_dir);
  check_dataset_shape(d, cfg);
  const std::string input_hash = dataset_input_hash(dataset_dir);
  Staging staging(out);
  const auto t0 = Clock::now();
  if (d.kind != kind) {
    throw Error(Errc::invalid_argument, stage + " needs a " + std::string(teach::to_string(kind)) + " dataset, got " +
                                            std::string(teach::to_string(d.kind)));
  }
  tc.seed = seed;
  learn::Split split = learn::split_dataset(d, seed);
  // The validation split is fixed by the seed; only the training part is
  // thinned, so runs at different fractions are scored on the same records.
  if (fraction < 1.0) split.train = learn::subsample(split.train, fraction, seed);
  learn::TrainedNet t = train(split.train, split.validation, tc);
  const fs::path ckpt = staging.dir() / kCheckpointFile;
  nn::save_checkpoint(t.net, ckpt);
  const json curve = t.curve.to_json();
  write_json(staging.dir() / "curve.json", curve);

  json m = base_manifest(stage, cfg, seed);
  m["inputs"]["dataset"] = input_hash;
  m["outputs"][kCheckpointFile] = util::sha256_file(ckpt);
  m["outputs"]["curve.json"] = util::sha256_file(staging.dir() / "curve.json");
  m["train"] = train_config_to_json(tc);
  m["train_records"] = split.train.size();
  m["validation_records"] = split.validation.size();
  m["best_accuracy"] = t.curve.best_accuracy;
  m["best_iteration"] = t.curve.best_iteration;
  m["iterations"] = t.curve.train_loss.size();
  if (fraction < 1.0) {
    m["subsample_fraction"] = fraction;
    m["subsample_seed"] = seed;
  }
  m["timing_ms"] = ms_since(t0);
  write_json(staging.dir() / kRunManifest, m);
  staging.commit();
  if (progress) progress({{"stage", stage}, {"best_accuracy", t.curve.best_accuracy}});
  return m;
}

nn::Network load_net(const fs::path& p, const PipelineConfig& cfg, const std::string& what) {
  nn::Network net = nn::load_checkpoint(checkpoint_path(p));
  check_shape(net, cfg, what);
  net.set_mode(nn::Mode::eval);
  return net;
}

bool is_scalar(const nn::Network& net) { return net.output_shape() == nn::Shape{1}; }

/// Appends epochs to the metrics file and keeps the last healthy network.
class StageObserver : public learn::RLObserver {
 public:
  StageObserver(const fs::path& metrics, const fs::path& last_good, learn::RLObserver* next,
                const Progress& progress)
      : out_(metrics, std::ios::app), last_good_(last_good), next_(next), progress_(progress) {
    if (!out_) throw Error(Errc::io, "cannot open " + metrics.string());
  }

  void on_epoch(const learn::EpochMetrics& m) override {
    out_ << m.to_json().dump() << '\n';
    out_.flush();
    ++epochs_;
    if (progress_) progress_(m.to_json());
    if (next_) next_->on_epoch(m);
  }
  void on_tick(long t, const sim::World& w) override {
    if (next_) next_->on_tick(t, w);
  }
  void on_takeover(long t, bool on) override {
    if (next_) next_->on_takeover(t, on);
  }
  void on_event(long t, const std::string& k) override {
    if (next_) next_->on_event(t, k);
  }
  bool stop_requested() override { return next_ && next_->stop_requested(); }
  void on_divergence(const nn::Network& last_good) override {
    nn::save_checkpoint(last_good, last_good_);
    out_ << json{{"aborted", "divergence"}, {"completed_epochs", epochs_}}.dump() << '\n';
    out_.flush();
    if (next_) next_->on_divergence(last_good);
  }

  std::size_t epochs() const { return epochs_; }

 private:
  std::ofstream out_;
  fs::path last_good_;
  learn::RLObserver* next_;
  Progress progress_;
  std::size_t epochs_ = 0;
};

}  // namespace

fs::path Layout::reward(double fraction) const {
  if (fraction >= 1.0) return root / "models" / "reward";
  std::ostringstream name;
  name << "reward-f" << fraction;
  return root / "models" / name.str();
}

fs::path Layout::rl(const learn::RLConfig& rl, std::uint64_t seed) const {
  std::string arm = learn::to_string(rl.init_mode);
  if (rl.safety_enabled) arm += "+safety";
  return root / "rl" / arm / ("seed-" + std::to_string(seed));
}

fs::path checkpoint_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    const fs::path c = p / kCheckpointFile;
    if (!fs::exists(c)) throw Error(Errc::missing_input, "no " + std::string(kCheckpointFile) + " in " + p.string());
    return c;
  }
  if (!fs::exists(p)) throw Error(Errc::missing_input, "missing checkpoint " + p.string());
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_input, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::io, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
}

json run_demo_record(const PipelineConfig& cfg, std::uint64_t seed, const fs::path& out) {
  const teach::SimSetup setup = cfg.sim_setup();
  return record_dataset_stage("demo-record", cfg, seed, out, [&] {
    return teach::record_demonstrations(setup, cfg.demo.ticks, cfg.demo.noise_rate, seed, cfg.oracle);
  });
}

json run_label_record(const PipelineConfig& cfg, teach::DatasetKind channel, std::uint64_t seed,
                      const fs::path& out) {
  if (channel == teach::DatasetKind::demo) {
    throw Error(Errc::invalid_argument, "label-record needs the reward or safety channel");
  }
  const LabelStage& ls = channel == teach::DatasetKind::reward ? cfg.reward_labels : cfg.safety_labels;
  const teach::SimSetup setup = cfg.sim_setup();
  const teach::Driver driver = make_driver(ls.driver, seed ^ 0x9e3779b97f4a7c15ULL, cfg.oracle);
  return record_dataset_stage("label-record", cfg, seed, out, [&] {
    teach::Dataset d = teach::record_labels(setup, driver, ls.ticks, channel, ls.edge_bias, seed, cfg.oracle);
    d.meta["driver"] = ls.driver;
    return d;
  });
}

json run_train_policy(const PipelineConfig& cfg, const fs::path& dataset, std::uint64_t seed,
                      const fs::path& out, const Progress& progress) {
  return train_stage(
      "train-policy", cfg, cfg.imitation, dataset, seed, out, teach::DatasetKind::demo, 1.0,
      [](const auto& tr, const auto& va, const auto& tc) { return learn::train_policy(tr, va, tc); }, progress);
}

json run_train_reward(const PipelineConfig& cfg, const fs::path& dataset, double fraction, std::uint64_t seed,
                      const fs::path& out, const Progress& progress) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(Errc::invalid_argument, "fraction must lie in (0, 1]");
  return train_stage(
      "train-reward", cfg, cfg.reward, dataset, seed, out, teach::DatasetKind::reward, fraction,
      [](const auto& tr, const auto& va, const auto& tc) { return learn::train_reward(tr, va, tc); }, progress);
}

json run_train_safety(const PipelineConfig& cfg, const fs::path& dataset, std::uint64_t seed,
                      const fs::path& out, const Progress& progress) {
  return train_stage(
      "train-safety", cfg, cfg.safety, dataset, seed, out, teach::DatasetKind::safety, 1.0,
      [](const auto& tr, const auto& va, const auto& tc) { return learn::train_safety(tr, va, tc); }, progress);
}

json run_rl_train(const PipelineConfig& cfg, const RLStageInputs& in, std::uint64_t seed, const fs::path& out,
                  learn::RLObserver* observer, const Progress& progress) {
  learn::RLConfig rc = cfg.rl;
  rc.seed = seed;
  rc.validate();

  nn::Network reward = load_net(in.reward, cfg, "reward net");
  if (!is_scalar(reward)) throw Error(Errc::shape_mismatch, "reward checkpoint is not a scalar network");
  std::optional<nn::Network> eval_reward;
  if (in.eval_reward) {
    eval_reward = load_net(*in.eval_reward, cfg, "evaluation reward net");
    if (!is_scalar(*eval_reward)) throw Error(Errc::shape_mismatch, "evaluation reward checkpoint is not scalar");
  }
  std::optional<nn::Network> policy;
  const bool needs_policy = rc.init_mode != learn::InitMode::random || rc.safety_enabled;
  if (needs_policy && !in.policy) {
    throw Error(Errc::missing_input, "init mode " + learn::to_string(rc.init_mode) +
                                         (rc.safety_enabled ? " with safety" : "") + " needs a policy checkpoint");
  }
  if (in.policy) policy = load_net(*in.policy, cfg, "policy");
  std::optional<learn::SafetyModule> safety;
  if (rc.safety_enabled) {
    if (!in.safety) throw Error(Errc::missing_input, "safety_enabled needs a safety checkpoint");
    nn::Network s = load_net(*in.safety, cfg, "safety net");
    if (!is_scalar(s)) throw Error(Errc::shape_mismatch, "safety checkpoint is not a scalar network");
    safety = learn::SafetyModule{std::move(s), *policy, cfg.safety_params};
  }

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(Errc::io, "cannot create " + out.string() + ": " + ec.message());
  fs::remove(out / kMetricsFile, ec);
  fs::remove(out / kCheckpointFile, ec);

  json m = base_manifest("rl-train", cfg, seed);
  m["rl"] = rc.to_json();
  m["inputs"]["reward"] = util::sha256_file(checkpoint_path(in.reward));
  if (in.eval_reward) m["inputs"]["eval_reward"] = util::sha256_file(checkpoint_path(*in.eval_reward));
  if (in.policy) m["inputs"]["policy"] = util::sha256_file(checkpoint_path(*in.policy));
  if (in.safety) m["inputs"]["safety"] = util::sha256_file(checkpoint_path(*in.safety));
  m["safety"] = {{"threshold", cfg.safety_params.threshold},
                 {"hysteresis", cfg.safety_params.hysteresis},
                 {"max_ticks", cfg.safety_params.max_ticks}};
  m["status"] = "running";
  write_json(out / kRunManifest, m);

  StageObserver obs(out / kMetricsFile, out / kCheckpointFile, observer, progress);
  learn::RLInputs ri;
  ri.reward = learn::reward_function(reward);
  if (eval_reward) ri.eval_reward = learn::reward_function(*eval_reward);
  ri.policy = policy ? &*policy : nullptr;
  ri.safety = safety ? &*safety : nullptr;

  const auto t0 = Clock::now();
  try {
    learn::RLResult r = learn::rl_train(rc, cfg.sim_setup(), ri, &obs);
    nn::save_checkpoint(r.q.online, out / kCheckpointFile);
    m["status"] = r.epochs.size() * rc.epoch_frames < rc.total_frames ? "stopped" : "complete";
  } catch (const Error& e) {
    if (e.code() != Errc::divergence) throw;
    m["status"] = "diverged";
    m["error"] = e.what();
    m["epochs"] = obs.epochs();
    m["outputs"][kCheckpointFile] = util::sha256_file(out / kCheckpointFile);
    m["outputs"][kMetricsFile] = util::sha256_file(out / kMetricsFile);
    m["timing_ms"] = ms_since(t0);
    write_json(out / kRunManifest, m);
    throw;
  }
  m["epochs"] = obs.epochs();
  m["outputs"][kCheckpointFile] = util::sha256_file(out / kCheckpointFile);
  m["outputs"][kMetricsFile] = util::sha256_file(out / kMetricsFile);
  m["timing_ms"] = ms_since(t0);
  write_json(out / kRunManifest, m);
  return m;
}

json run_evaluate(const PipelineConfig& cfg, const fs::path& net_path, const fs::path& reward_path,
                  std::size_t ticks, const std::optional<fs::path>& manifest_out) {
  if (ticks == 0) throw Error(Errc::invalid_argument, "evaluate needs ticks > 0");
  nn::Network net = load_net(net_path, cfg, "evaluated network");
  if (net.output_shape() != nn::Shape{learn::kActionCount}) {
    throw Error(Errc::shape_mismatch, "evaluated network must output one value per action");
  }
  nn::Network reward = load_net(reward_path, cfg, "reward net");
  if (!is_scalar(reward)) throw Error(Errc::shape_mismatch, "reward checkpoint is not a scalar network");
  const auto specs = net.specs();
  const bool is_policy = specs.back().kind == nn::LayerKind::softmax;

  const auto t0 = Clock::now();
  const learn::DriveStats st =
      learn::drive(learn::greedy_policy(net), cfg.sim_setup(), learn::reward_function(reward), ticks);
  json m = {{"stage", "evaluate"},
            {"config_hash", cfg.hash()},
            {"inputs",
             {{"network", util::sha256_file(checkpoint_path(net_path))},
              {"reward", util::sha256_file(checkpoint_path(reward_path))}}},
            {"network_kind", is_policy ? "policy" : "q"},
            {"ticks", ticks},
            {"average_reward", st.average_reward},
            {"restarts", st.restarts},
            {"off_road_entries", st.off_road_entries},
            {"timing_ms", ms_since(t0)}};
  if (manifest_out) {
    std::error_code ec;
    if (manifest_out->has_parent_path()) fs::create_directories(manifest_out->parent_path(), ec);
    write_json(*manifest_out, m);
  }
  return m;
}

}  // namespace steer::pipeline

#include <fstream>
#include <random>

#include "doctest.h"
#include "steer/error.hpp"
#include "steer/learn/architecture.hpp"
#include "steer/learn/observation.hpp"
#include "steer/nn/checkpoint.hpp"
#include "steer/pipeline/report.hpp"
#include "steer/pipeline/stages.hpp"
#include "temp_dir.hpp"

using namespace steer;
using namespace steer::pipeline;
using nlohmann::json;

namespace {

PipelineConfig tiny_config(const fs::path& root) {
  PipelineConfig c;
  c.frame.height = 16;
  c.frame.width = 16;
  c.demo.ticks = 200;
  c.reward_labels.ticks = 200;
  c.safety_labels.ticks = 200;
  for (auto* t : {&c.imitation, &c.reward, &c.safety}) {
    t->max_iterations = 40;
    t->eval_every = 20;
  }
  c.rl.epoch_frames = 50;
  c.rl.total_frames = 150;
  c.rl.policy_eval_frames = 50;
  c.rl.init_mode = learn::InitMode::random;
  c.eval_ticks = 100;
  c.output_dir = root;
  return c;
}

fs::path save_constant_reward(const fs::path& dir, float bias, std::size_t side = 16) {
  nn::Network net = learn::make_scalar_net(learn::observation_shape(side, side), 1);
  for (auto* p : net.parameters()) std::fill(p->values().begin(), p->values().end(), 0.0f);
  net.layer(learn::last_dense_layer(net)).params()[1]->values()[0] = bias;
  fs::create_directories(dir);
  nn::save_checkpoint(net, dir / kCheckpointFile);
  return dir;
}

void write_metrics(const fs::path& dir, const std::string& hash, std::uint64_t seed,
                   const std::vector<std::size_t>& accidents, double reward_offset = 0.0) {
  fs::create_directories(dir);
  write_json(dir / kRunManifest, {{"stage", "rl-train"}, {"config_hash", hash}, {"seed", seed}});
  std::ofstream out(dir / kMetricsFile);
  for (std::size_t e = 0; e < accidents.size(); ++e) {
    learn::EpochMetrics m;
    m.epoch = e;
    m.accidents = accidents[e];
    m.avg_reward = reward_offset + static_cast<double>(e);
    out << m.to_json().dump() << '\n';
  }
}

}  // namespace

TEST_SUITE("pipeline-cli") {
  TEST_CASE("config survives a JSON round trip and rejects unknown keys") {
    PipelineConfig c = tiny_config("out");
    c.rl.gamma = 0.8;
    c.seeds = {4, 5};
    const json j = c.to_json();
    CHECK(PipelineConfig::from_json(j).to_json() == j);

    json bad = j;
    bad["rl"]["gama"] = 0.9;
    CHECK_THROWS_AS(PipelineConfig::from_json(bad), Error);
    bad = j;
    bad["colour"] = "red";
    CHECK_THROWS_AS(PipelineConfig::from_json(bad), Error);
  }

  TEST_CASE("config hash ignores seeds and output directory") {
    PipelineConfig a = tiny_config("a");
    PipelineConfig b = tiny_config("b");
    b.seeds = {7, 8, 9};
    b.rl.seed = 99;
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 64);
    b.rl.gamma = 0.5;
    CHECK(a.hash() != b.hash());
  }

  TEST_CASE("overrides set nested values") {
    json j = PipelineConfig{}.to_json();
    apply_override(j, "rl.epsilon=0.25");
    apply_override(j, "track=oval");
    apply_override(j, "rl.safety_enabled=true");
    CHECK(j["rl"]["epsilon"] == 0.25);
    CHECK(j["track"] == "oval");
    CHECK(j["rl"]["safety_enabled"] == true);
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), Error);
  }

  TEST_CASE("unknown track is not found") {
    try {
      resolve_track("atlantis");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::not_found);
    }
  }

  TEST_CASE("demo-record writes ticks frames and is deterministic") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    const json m1 = run_demo_record(c, 3, tmp.path() / "d1");
    const json m2 = run_demo_record(c, 3, tmp.path() / "d2");
    const json m3 = run_demo_record(c, 4, tmp.path() / "d3");
    CHECK(m1["count"] == 200);
    CHECK(m1["meta"]["noise_rate"] == 0.05);
    CHECK(m1["config_hash"] == c.hash());
    CHECK(m1["outputs"] == m2["outputs"]);
    CHECK(m1["outputs"]["dataset"] != m3["outputs"]["dataset"]);
    CHECK(teach::load_dataset(tmp.path() / "d1").size() == 200);
    CHECK(read_json(tmp.path() / "d1" / kRunManifest) == m1);
  }

  TEST_CASE("unwritable output fails before recording") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    c.demo.ticks = 1000000;  // would take minutes if it started
    std::ofstream(tmp.path() / "file") << "x";
    try {
      run_demo_record(c, 1, tmp.path() / "file" / "sub");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::io);
    }
  }

  TEST_CASE("missing dataset is a missing input and leaves no output") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    try {
      run_train_policy(c, tmp.path() / "nothing", 1, tmp.path() / "policy");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::missing_input);
    }
    CHECK(fs::is_empty(tmp.path()));
  }

  TEST_CASE("training stage manifest agrees with its curve and tags subsamples") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    run_label_record(c, teach::DatasetKind::reward, 2, tmp.path() / "labels");
    const json full = run_train_reward(c, tmp.path() / "labels", 1.0, 5, tmp.path() / "r1");
    const json part = run_train_reward(c, tmp.path() / "labels", 0.2, 5, tmp.path() / "r02");
    const json curve = read_json(tmp.path() / "r02" / "curve.json");
    CHECK(curve["best_accuracy"] == part["best_accuracy"]);
    CHECK(part["subsample_fraction"] == 0.2);
    CHECK(part["validation_records"] == full["validation_records"]);
    CHECK(part["train_records"].get<std::size_t>() < full["train_records"].get<std::size_t>());
    CHECK_FALSE(full.contains("subsample_fraction"));
    CHECK(fs::exists(tmp.path() / "r1" / kCheckpointFile));
    // no staging leftovers
    for (const auto& e : fs::directory_iterator(tmp.path())) {
      CHECK(e.path().filename().string().rfind(".partial", 0) != 0);
    }

    // wrong dataset kind
    run_demo_record(c, 1, tmp.path() / "demo");
    CHECK_THROWS_AS(run_train_reward(c, tmp.path() / "demo", 1.0, 5, tmp.path() / "r3"), Error);
    CHECK_FALSE(fs::exists(tmp.path() / "r3"));
  }

  TEST_CASE("rl-train: random init needs no policy, il init does") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    const fs::path reward = save_constant_reward(tmp.path() / "reward", 0.5f);
    RLStageInputs in;
    in.reward = reward;
    const json m = run_rl_train(c, in, 3, tmp.path() / "run");
    CHECK(m["status"] == "complete");
    CHECK(m["epochs"] == 3);
    const RunMetrics r = load_run(tmp.path() / "run");
    CHECK(r.epochs.size() == 3);
    CHECK(r.seed == 3);
    CHECK(r.config_hash == c.hash());
    CHECK(r.epochs[0].avg_reward == doctest::Approx(std::tanh(0.5)).epsilon(1e-6));

    c.rl.init_mode = learn::InitMode::il;
    try {
      run_rl_train(c, in, 3, tmp.path() / "run-il");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::missing_input);
    }
  }

  TEST_CASE("rl-train divergence keeps the last good checkpoint") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    c.rl.total_frames = 2000;
    c.rl.adam.lr = 1e30;
    RLStageInputs in;
    in.reward = save_constant_reward(tmp.path() / "reward", 0.5f);
    try {
      run_rl_train(c, in, 1, tmp.path() / "run");
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::divergence);
    }
    const json m = read_json(tmp.path() / "run" / kRunManifest);
    CHECK(m["status"] == "diverged");
    CHECK(fs::exists(tmp.path() / "run" / kCheckpointFile));
    std::ifstream metrics(tmp.path() / "run" / kMetricsFile);
    std::string line, last;
    std::size_t lines = 0;
    while (std::getline(metrics, line)) {
      last = line;
      ++lines;
    }
    CHECK(json::parse(last)["aborted"] == "divergence");
    CHECK(load_run(tmp.path() / "run").epochs.size() == lines - 1);
  }

  TEST_CASE("report: one row per epoch and medians over seeds") {
    TempDir tmp;
    write_metrics(tmp.path() / "s1", "h", 1, {1, 2, 3, 4}, 0.0);
    write_metrics(tmp.path() / "s2", "h", 2, {1, 2, 3, 4}, 10.0);
    write_metrics(tmp.path() / "s3", "h", 3, {1, 2, 3, 4}, 5.0);
    const json single = run_report({tmp.path() / "s1"}, tmp.path() / "rep1");
    CHECK(single["series"]["avg_reward"].size() == 4);
    CHECK_FALSE(single["series"].contains("avg_eval_reward"));
    const json rep = run_report({tmp.path() / "s1", tmp.path() / "s2", tmp.path() / "s3"}, tmp.path() / "rep");
    for (std::size_t e = 0; e < 4; ++e) {
      CHECK(rep["series"]["avg_reward"][e]["median"].get<double>() == doctest::Approx(5.0 + e));
    }
    CHECK(fs::exists(tmp.path() / "rep" / "avg_reward.csv"));
    CHECK(fs::exists(tmp.path() / "rep" / "accidents_by_bucket.csv"));
  }

  TEST_CASE("report: accident buckets on a synthetic 60-epoch run") {
    TempDir tmp;
    std::vector<std::size_t> acc(60);
    for (std::size_t e = 0; e < 60; ++e) acc[e] = e < 3 ? 30 : e < 12 ? 9 : e < 39 ? 3 : 1;
    write_metrics(tmp.path() / "s", "h", 1, acc);
    const json rep = run_report({tmp.path() / "s"}, tmp.path() / "rep");
    const auto& b = rep["accidents_per_epoch_by_bucket"];
    REQUIRE(b.size() == 4);
    CHECK(b[0]["median"] == 30.0);
    CHECK(b[1]["median"] == 9.0);
    CHECK(b[2]["median"] == 3.0);
    CHECK(b[3]["median"] == 1.0);
    CHECK(b[2]["first_epoch"] == 12);
    CHECK(b[2]["end_epoch"] == 39);
  }

  TEST_CASE("report: buckets rescale to shorter runs") {
    const auto b = accident_buckets(20);
    REQUIRE(b.size() == 4);
    CHECK(b[0] == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(b[1] == std::pair<std::size_t, std::size_t>{1, 4});
    CHECK(b[2] == std::pair<std::size_t, std::size_t>{4, 13});
    CHECK(b[3] == std::pair<std::size_t, std::size_t>{13, 20});
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  }

  TEST_CASE("report rejects runs from different configs") {
    TempDir tmp;
    write_metrics(tmp.path() / "a", "h1", 1, {1, 2});
    write_metrics(tmp.path() / "b", "h2", 2, {1, 2});
    try {
      run_report({tmp.path() / "a", tmp.path() / "b"}, tmp.path() / "rep");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::conflict);
    }
  }

  TEST_CASE("evaluate: constant reward net scores its constant") {
    TempDir tmp;
    PipelineConfig c = tiny_config(tmp.path());
    const fs::path reward = save_constant_reward(tmp.path() / "reward", 0.3f);
    nn::Network policy = learn::make_policy_net(learn::observation_shape(16, 16), 2);
    fs::create_directories(tmp.path() / "policy");
    nn::save_checkpoint(policy, tmp.path() / "policy" / kCheckpointFile);
    const json m = run_evaluate(c, tmp.path() / "policy", reward, 50, tmp.path() / "eval" / "run.json");
    CHECK(m["average_reward"].get<double>() == doctest::Approx(std::tanh(0.3)).epsilon(1e-6));
    CHECK(m["network_kind"] == "policy");
    CHECK(fs::exists(tmp.path() / "eval" / "run.json"));
    CHECK_THROWS_AS(run_evaluate(c, tmp.path() / "policy", reward, 0), Error);

    // shape mismatch: reward net for a different frame size
    const fs::path big = save_constant_reward(tmp.path() / "big", 0.3f, 32);
    try {
      run_evaluate(c, tmp.path() / "policy", big, 10);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::shape_mismatch);
    }
  }
}

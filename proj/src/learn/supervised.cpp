#include "steer/learn/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "steer/error.hpp"
#include "steer/learn/observation.hpp"
#include "steer/nn/losses.hpp"

namespace steer::learn {

using teach::Dataset;
using teach::DatasetKind;

namespace {

struct BatchLoss {
  double value = 0.0;
  nn::Tensor grad;
  std::size_t correct = 0;
};

int argmax_row(const float* row, std::size_t k) {
  int best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = static_cast<int>(j);
  }
  return best;
}

BatchLoss batch_loss(DatasetKind kind, const nn::Tensor& out, const std::vector<int>& targets,
                     std::span<const std::size_t> idx) {
  BatchLoss r;
  if (kind == DatasetKind::demo) {
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(targets[i]);
    auto l = nn::nll_loss(out, std::span<const int>(labels));
    const std::size_t k = out.dim(1);
    for (std::size_t b = 0; b < labels.size(); ++b) {
      r.correct += argmax_row(out.data() + b * k, k) == labels[b];
    }
    r.value = l.value;
    r.grad = std::move(l.grad);
  } else {
    std::vector<float> labels;
    for (std::size_t i : idx) labels.push_back(static_cast<float>(targets[i]));
    auto l = nn::mse_loss(out, std::span<const float>(labels));
    for (std::size_t b = 0; b < labels.size(); ++b) {
      r.correct += (out[b] > 0.0f ? 1.0f : -1.0f) == labels[b];
    }
    r.value = l.value;
    r.grad = std::move(l.grad);
  }
  return r;
}

void check_inputs(const nn::Network& net, const Dataset& d, const char* which) {
  if (d.size() == 0) throw Error(Errc::invalid_argument, std::string(which) + " split is empty");
  const auto shape = observation_shape(d.observations[0]);
  if (shape != net.input_shape()) {
    throw Error(Errc::shape_mismatch, std::string(which) + " observations are " + nn::shape_string(shape) +
                                          " but the network expects " +
                                          nn::shape_string(net.input_shape()));
  }
}

}  // namespace

nlohmann::json TrainingCurve::to_json() const {
  nlohmann::json evs = nlohmann::json::array();
  for (const auto& e : evals) {
    evs.push_back({{"iteration", e.iteration}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  }
  return {{"train_loss", train_loss},
          {"evals", evs},
          {"best_iteration", best_iteration},
          {"best_accuracy", best_accuracy}};
}

Split split_dataset(const Dataset& d, std::uint64_t seed) {
  if (d.size() < 10) {
    throw Error(Errc::invalid_argument,
                "dataset too small to split (" + std::to_string(d.size()) + " records, need 10)");
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(d.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return {d.subset(train), d.subset(val)};
}

Evaluation evaluate(nn::Network& net, const Dataset& d, std::size_t chunk) {
  check_inputs(net, d, "evaluation");
  const nn::Mode saved = net.mode();
  net.set_mode(nn::Mode::eval);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < d.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(d.size(), start + chunk); ++i) idx.push_back(i);
    const nn::Tensor out = net.forward(make_batch(d.observations, idx));
    const BatchLoss l = batch_loss(d.kind, out, d.targets, idx);
    loss_sum += l.value * static_cast<double>(idx.size());
    correct += l.correct;
  }
  net.set_mode(saved);
  const double n = static_cast<double>(d.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainingCurve train_supervised(nn::Network& net, const Dataset& train, const Dataset& validation,
                               const TrainConfig& cfg) {
  check_inputs(net, train, "training");
  check_inputs(net, validation, "validation");
  if (train.kind != validation.kind) throw Error(Errc::invalid_argument, "train/validation kinds differ");
  if (train.kind != DatasetKind::demo) {
    const auto pos = std::count(train.targets.begin(), train.targets.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(train.size())) {
      throw Error(Errc::untrainable, "training labels contain a single class (" +
                                         std::string(pos ? "+1" : "-1") + " only)");
    }
  }
  if (cfg.batch_size == 0 || cfg.eval_every == 0) {
    throw Error(Errc::invalid_argument, "batch_size and eval_every must be positive");
  }

  nn::Adam adam(net, cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t batch = std::min(cfg.batch_size, train.size());

  TrainingCurve curve;
  auto snapshot = [&net] {
    std::vector<nn::Tensor> p;
    for (const auto* t : std::as_const(net).parameters()) p.push_back(*t);
    return p;
  };
  const Evaluation init = evaluate(net, validation);
  curve.evals.push_back({0, init.loss, init.accuracy});
  curve.best_accuracy = init.accuracy;
  auto best = snapshot();
  std::size_t stale = 0;

  std::vector<std::size_t> idx(batch);
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    for (auto& i : idx) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      i = order[cursor++];
    }
    net.set_mode(nn::Mode::train);
    const nn::Tensor out = net.forward(make_batch(train.observations, idx));
    BatchLoss l = batch_loss(train.kind, out, train.targets, idx);
    if (!std::isfinite(l.value)) {
      throw Error(Errc::divergence, "training loss became non-finite at iteration " + std::to_string(it));
    }
    net.backward(l.grad);
    adam.step(net);
    curve.train_loss.push_back(l.value);

    if (it % cfg.eval_every == 0) {
      const Evaluation e = evaluate(net, validation);
      curve.evals.push_back({it, e.loss, e.accuracy});
      if (e.accuracy > curve.best_accuracy) {
        curve.best_accuracy = e.accuracy;
        curve.best_iteration = it;
        best = snapshot();
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = best[i];
  net.set_mode(nn::Mode::eval);
  return curve;
}

}  // namespace steer::learn

#pragma once

// Minibatch SGD with momentum, validation-loss early stopping and
// best-checkpoint selection, generic over the classifier type.

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lmsig/encoder.hpp"
#include "lmsig/error.hpp"
#include "lmsig/metrics.hpp"
#include "lmsig/params.hpp"
#include "lmsig/rng.hpp"

namespace lmsig::train {

using encoder::TokenSequence;

template <class M>
concept Classifier = requires(const M& m, const TokenSequence& s, typename M::Params& g) {
  { m.logit(s) } -> std::convertible_to<double>;
  { m.accumulate_gradient(s, 0, g) } -> std::convertible_to<double>;
  { m.params() } -> std::convertible_to<const typename M::Params&>;
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int max_epochs = 50;
  int early_stop_window = 100;
  double early_stop_delta = 0.2;
  std::uint64_t seed = 0;
  int folds = 5;
  /// Share of each training fold held out for validation.
  double validation_fraction = 0.2;

  void validate() const;
  eval::EarlyStopRule stop_rule() const { return {early_stop_window, early_stop_delta}; }
};

struct LabeledSet {
  std::span<const TokenSequence> sequences;
  std::span<const int> labels;

  std::size_t size() const { return sequences.size(); }
};

template <class Model>
struct TrainResult {
  Model best;
  std::vector<double> train_loss;  // mean batch loss per step
  std::vector<double> val_loss;    // mean validation loss per step
  std::size_t best_step = 0;
  std::optional<std::size_t> stopped_at;
};

template <Classifier Model>
double mean_loss(const Model& model, LabeledSet data) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    sum += encoder::bce_with_logit(model.logit(data.sequences[i]), data.labels[i]);
  }
  return sum / static_cast<double>(data.size());
}

/// One momentum step: v = momentum * v + g / batch; params -= lr * v.
template <class Params>
void sgd_momentum_step(Params& params, Params& velocity, const Params& grad_sum, double batch,
                       double learning_rate, double momentum) {
  scale(momentum, velocity);
  axpy(1.0 / batch, grad_sum, velocity);
  axpy(-learning_rate, velocity, params);
}

/// Trains until the early-stopping rule fires on the per-step validation
/// loss or max_epochs is reached, and returns the parameters with the lowest
/// validation loss seen.
template <Classifier Model>
TrainResult<Model> fit(Model model, LabeledSet train, LabeledSet validation, const TrainConfig& config) {
  config.validate();
  if (train.size() == 0) throw DataError("empty training split");
  if (validation.size() == 0) throw DataError("empty validation split");
  if (train.labels.size() != train.size() || validation.labels.size() != validation.size()) {
    throw DataError("labels misaligned with sequences");
  }

  Rng rng(derive_seed(config.seed, 0x7EA1));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto velocity = zeros_like(model.params());
  auto grads = velocity;
  eval::EarlyStopper stopper(config.stop_rule());
  TrainResult<Model> result{model, {}, {}, 0, std::nullopt};
  double best_val = mean_loss(model, validation);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.max_epochs && !result.stopped_at; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (auto& t : grads.tensors()) t.value->setZero();
      double loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        loss += model.accumulate_gradient(train.sequences[order[k]], train.labels[order[k]], grads);
      }
      const double n = static_cast<double>(end - start);
      sgd_momentum_step(model.params(), velocity, grads, n, config.learning_rate, config.momentum);
      result.train_loss.push_back(loss / n);

      const double val = mean_loss(model, validation);
      result.val_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        result.best = model;
        result.best_step = result.val_loss.size();
      }
      if (stopper.observe(val)) {
        result.stopped_at = result.val_loss.size() - 1;
        break;
      }
    }
  }
  return result;
}

/// Fold index in [0, k) for each of n subjects: a seeded shuffle dealt
/// round-robin, so fold sizes differ by at most one.
std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed);

/// Splits `indices` into (train, validation) with round(fraction * size)
/// validation members, chosen by a seeded shuffle. Both parts keep their
/// original relative order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(
    std::span<const std::size_t> indices, double fraction, std::uint64_t seed);

}  // namespace lmsig::train

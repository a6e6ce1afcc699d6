#include "lmsig/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lmsig::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (early_stop_window < 1) throw ConfigError("early_stop_window must be at least 1");
  if (!(early_stop_delta > 0.0)) throw ConfigError("early_stop_delta must be positive");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
}

std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xF01D));
  rng.shuffle(order.begin(), order.end());
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(
    std::span<const std::size_t> indices, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> pos(indices.size());
  std::iota(pos.begin(), pos.end(), 0);
  Rng rng(derive_seed(seed, 0x5A11D));
  rng.shuffle(pos.begin(), pos.end());
  const auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(indices.size())));
  std::vector<bool> is_val(indices.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[pos[i]] = true;
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < indices.size(); ++i) (is_val[i] ? out.second : out.first).push_back(indices[i]);
  return out;
}

}  // namespace lmsig::train

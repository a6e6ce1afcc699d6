#pragma once

// Central finite-difference check of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lmsig/encoder.hpp"
#include "lmsig/params.hpp"
#include "lmsig/rng.hpp"

namespace lmsig {

struct GradcheckEntry {
  std::string tensor;
  Eigen::Index row = 0, col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  GradcheckEntry worst;
  double max_rel_error = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). Below the floor the comparison becomes an
/// absolute one: central differences with h = 1e-5 carry roughly 1e-11 of
/// rounding noise at default model size, which would otherwise dominate
/// entries whose gradient is near zero.
inline double gradient_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

/// Checks `per_tensor` seeded random entries of each tensor, or all of them
/// when the tensor is smaller or its name is listed in `exhaustive`.
template <class Model>
GradcheckReport check_gradients(Model& model, const encoder::TokenSequence& seq, int label, int per_tensor,
                                double step, std::uint64_t seed, const std::vector<std::string>& exhaustive = {}) {
  auto grads = zeros_like(model.params());
  model.accumulate_gradient(seq, label, grads);
  const auto grad_tensors = grads.tensors();
  auto tensors = model.params().tensors();
  Rng rng(seed);
  GradcheckReport report;
  auto loss = [&] { return encoder::bce_with_logit(model.logit(seq), label); };
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& m = *tensors[t].value;
    const auto size = m.size();
    const bool all = size <= per_tensor ||
                     std::any_of(exhaustive.begin(), exhaustive.end(),
                                 [&](const std::string& suffix) { return tensors[t].name.ends_with(suffix); });
    const auto count = all ? size : per_tensor;
    for (Eigen::Index k = 0; k < count; ++k) {
      const Eigen::Index flat = all ? k : rng.uniform_int(0, size);
      const Eigen::Index r = flat / m.cols(), c = flat % m.cols();
      const double saved = m(r, c);
      m(r, c) = saved + step;
      const double up = loss();
      m(r, c) = saved - step;
      const double down = loss();
      m(r, c) = saved;
      GradcheckEntry e{tensors[t].name, r, c, (*grad_tensors[t].value)(r, c), (up - down) / (2.0 * step), 0.0};
      e.rel_error = gradient_rel_error(e.analytic, e.numeric);
      if (report.entries.empty() || e.rel_error > report.max_rel_error) {
        report.max_rel_error = e.rel_error;
        report.worst = e;
      }
      report.entries.push_back(std::move(e));
    }
  }
  return report;
}

/// A fully observed 2T+1 token sequence with random payloads and distinct
/// scan days, for gradient checks.
encoder::TokenSequence random_sequence(const encoder::EncoderConfig& config, std::uint64_t seed,
                                       int padded_scans = 0);

}  // namespace lmsig

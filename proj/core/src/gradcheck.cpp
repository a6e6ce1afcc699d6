#include "lmsig/gradcheck.hpp"

namespace lmsig {

encoder::TokenSequence random_sequence(const encoder::EncoderConfig& config, std::uint64_t seed, int padded_scans) {
  Rng rng(seed);
  std::vector<encoder::ScanObservation> scans;
  encoder::Day day = rng.uniform_int(0, 100);
  for (int t = 0; t < config.max_scans - padded_scans; ++t) {
    encoder::ScanObservation s;
    s.day = day;
    day += rng.uniform_int(200, 800);
    s.nonimaging = std::vector<double>(static_cast<std::size_t>(config.nonimaging_dim));
    s.image = std::vector<double>(static_cast<std::size_t>(config.image_dim));
    for (auto& v : *s.nonimaging) v = rng.normal();
    for (auto& v : *s.image) v = rng.normal();
    scans.push_back(std::move(s));
  }
  return encoder::assemble_sequence("gradcheck", config.max_scans, std::move(scans));
}

}  // namespace lmsig

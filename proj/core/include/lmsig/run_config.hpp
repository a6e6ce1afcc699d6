#pragma once

// key = value run configuration shared by every CLI stage.
//
// Lines are `key = value`; `#` starts a comment. Unknown keys are rejected.
// Stage seeds default to `auto` and are resolved from `seed`, so the
// resolved file written next to each stage's outputs lists every seed.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lmsig/ablation.hpp"
#include "lmsig/ica.hpp"
#include "lmsig/synth.hpp"
#include "lmsig/train.hpp"

namespace lmsig {

struct GradcheckOptions {
  /// Entries checked per tensor; TEM parameters are always checked in full.
  int samples_per_tensor = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
};

class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  static RunConfig parse(std::istream& in, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  /// Throws ConfigError for unknown keys or values of the wrong type.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has_key(const std::string& key) const;

  /// Replaces every `auto` seed by one derived from `seed`.
  RunConfig resolved() const;

  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  /// FNV-1a 64 of the written form.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_seed(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  synth::GeneratorConfig generator() const;
  std::int64_t min_events() const { return get_int("curves.min_events"); }
  std::int64_t stride_days() const { return get_int("curves.stride_days"); }
  ica::FitOptions ica_options() const;
  ablation::Architecture architecture() const;
  std::vector<ablation::ModelSpec> models() const;
  train::TrainConfig train_config() const;
  GradcheckOptions gradcheck() const;
  ablation::SuiteConfig suite() const;

  static const std::vector<std::string>& keys();

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a64(std::string_view data);

}  // namespace lmsig

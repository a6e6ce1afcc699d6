#include "lmsig/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lmsig/error.hpp"
#include "lmsig/rng.hpp"

namespace lmsig {

namespace {

enum class Type { integer, real, boolean, text, seed, list };

struct KeySpec {
  const char* key;
  Type type;
  const char* fallback;
};

// Model dimensions default to the reference architecture; the desk-scale
// configs in configs/ shrink them.
const std::vector<KeySpec>& table() {
  static const std::vector<KeySpec> t{
      {"seed", Type::seed, "0"},

      {"synth.seed", Type::seed, "auto"},
      {"synth.n_subjects", Type::integer, "600"},
      {"synth.p_variables", Type::integer, "200"},
      {"synth.c_true", Type::integer, "20"},
      {"synth.record_span_days", Type::integer, "1825"},
      {"synth.scan_count_weights", Type::list, "0.2,0.3,0.5"},
      {"synth.recency_signal", Type::boolean, "false"},
      {"synth.label_noise", Type::real, "0"},
      {"synth.lab_fraction", Type::real, "0.5"},
      {"synth.lab_interval_days", Type::real, "30"},
      {"synth.lab_noise", Type::real, "0.2"},
      {"synth.code_base_rate", Type::real, "0.1"},
      {"synth.code_gain", Type::real, "0.3"},
      {"synth.image_dim", Type::integer, "16"},
      {"synth.image_noise", Type::real, "0.5"},
      {"synth.image_label_weight", Type::real, "1"},
      {"synth.min_scan_gap_days", Type::integer, "400"},
      {"synth.max_scan_gap_days", Type::integer, "700"},

      {"curves.min_events", Type::integer, "0"},
      {"curves.stride_days", Type::integer, "365"},
      {"curves.sample_seed", Type::seed, "auto"},

      {"ica.components", Type::integer, "20"},
      {"ica.tol", Type::real, "1e-4"},
      {"ica.max_iter", Type::integer, "200"},
      {"ica.zscore", Type::boolean, "false"},
      {"ica.seed", Type::seed, "auto"},

      {"model.names", Type::list, "TDSig"},
      {"model.max_scans", Type::integer, "3"},
      {"model.dim", Type::integer, "320"},
      {"model.heads", Type::integer, "4"},
      {"model.head_dim", Type::integer, "64"},
      {"model.mlp_dim", Type::integer, "124"},
      {"model.blocks", Type::integer, "4"},
      {"model.mlp_hidden", Type::integer, "64"},
      {"model.tem_b_init", Type::real, "0.0027397260273972603"},
      {"model.tem_c_init", Type::real, "1"},
      {"model.distance", Type::text, "to_most_recent"},
      {"model.pooling", Type::text, "cls"},

      {"train.seed", Type::seed, "auto"},
      {"train.batch_size", Type::integer, "32"},
      {"train.learning_rate", Type::real, "1e-3"},
      {"train.momentum", Type::real, "0.9"},
      {"train.max_epochs", Type::integer, "50"},
      {"train.early_stop_window", Type::integer, "100"},
      {"train.early_stop_delta", Type::real, "0.2"},
      {"train.folds", Type::integer, "5"},
      {"train.validation_fraction", Type::real, "0.2"},

      {"eval.seed", Type::seed, "auto"},
      {"eval.bootstrap", Type::integer, "1000"},
      {"eval.reclassify_model", Type::text, ""},

      {"ablate.seeds", Type::list, "1,2,3,4,5"},
      {"ablate.shuffle_labels", Type::boolean, "false"},

      {"gradcheck.samples_per_tensor", Type::integer, "20"},
      {"gradcheck.step", Type::real, "1e-5"},
      {"gradcheck.tolerance", Type::real, "1e-4"},
  };
  return t;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : table()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& text, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(text, &used);
    return used == text.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool valid_value(const KeySpec& k, const std::string& v) {
  std::int64_t i = 0;
  std::uint64_t u = 0;
  double d = 0.0;
  switch (k.type) {
    case Type::integer: return parse_number(v, i);
    case Type::real: return parse_real(v, d);
    case Type::boolean: return v == "true" || v == "false";
    case Type::seed: return v == "auto" || parse_number(v, u);
    case Type::text: return true;
    case Type::list: return !v.empty();
  }
  return false;
}

const char* type_name(Type t) {
  switch (t) {
    case Type::integer: return "an integer";
    case Type::real: return "a number";
    case Type::boolean: return "true or false";
    case Type::seed: return "a nonnegative integer or auto";
    case Type::text: return "text";
    case Type::list: return "a comma-separated list";
  }
  return "?";
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig::RunConfig() {
  for (const auto& k : table()) values_[k.key] = k.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> v;
    for (const auto& k : table()) v.emplace_back(k.key);
    return v;
  }();
  return ks;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* spec = find_key(key);
  if (!spec) throw ConfigError("unknown config key '" + key + "'");
  if (!valid_value(*spec, value)) {
    throw ConfigError("value '" + value + "' for '" + key + "' must be " + type_name(spec->type));
  }
  values_[key] = value;
}

bool RunConfig::has_key(const std::string& key) const { return find_key(key) != nullptr; }

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

RunConfig RunConfig::resolved() const {
  RunConfig out = *this;
  const auto base = get_seed("seed");
  std::uint64_t stream = 1;
  for (const auto& k : table()) {
    if (k.type != Type::seed || std::string(k.key) == "seed") continue;
    if (out.values_[k.key] == "auto") out.values_[k.key] = std::to_string(derive_seed(base, stream));
    ++stream;
  }
  return out;
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& k : table()) out << k.key << " = " << values_.at(k.key) << '\n';
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write(out);
}

std::uint64_t RunConfig::hash() const {
  std::ostringstream ss;
  write(ss);
  return fnv1a64(ss.str());
}

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_number(get(key), v)) throw ConfigError("'" + key + "' is not an integer");
  return v;
}

std::uint64_t RunConfig::get_seed(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_number(get(key), v)) throw ConfigError("seed '" + key + "' is unresolved; call resolved() first");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_real(get(key), v)) throw ConfigError("'" + key + "' is not a number");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

synth::GeneratorConfig RunConfig::generator() const {
  synth::GeneratorConfig g;
  g.seed = get_seed("synth.seed");
  g.n_subjects = static_cast<int>(get_int("synth.n_subjects"));
  g.p_variables = static_cast<int>(get_int("synth.p_variables"));
  g.c_true = static_cast<int>(get_int("synth.c_true"));
  g.record_span_days = static_cast<int>(get_int("synth.record_span_days"));
  g.scan_count_weights.clear();
  for (const auto& w : get_list("synth.scan_count_weights")) {
    double v = 0.0;
    if (!parse_real(w, v)) throw ConfigError("synth.scan_count_weights: '" + w + "' is not a number");
    g.scan_count_weights.push_back(v);
  }
  g.recency_signal = get_bool("synth.recency_signal");
  g.label_noise = get_double("synth.label_noise");
  g.lab_fraction = get_double("synth.lab_fraction");
  g.lab_interval_days = get_double("synth.lab_interval_days");
  g.lab_noise = get_double("synth.lab_noise");
  g.code_base_rate = get_double("synth.code_base_rate");
  g.code_gain = get_double("synth.code_gain");
  g.image_dim = static_cast<int>(get_int("synth.image_dim"));
  g.image_noise = get_double("synth.image_noise");
  g.image_label_weight = get_double("synth.image_label_weight");
  g.min_scan_gap_days = static_cast<int>(get_int("synth.min_scan_gap_days"));
  g.max_scan_gap_days = static_cast<int>(get_int("synth.max_scan_gap_days"));
  g.validate();
  return g;
}

ica::FitOptions RunConfig::ica_options() const {
  ica::FitOptions o;
  o.components = static_cast<int>(get_int("ica.components"));
  o.tol = get_double("ica.tol");
  o.max_iter = static_cast<int>(get_int("ica.max_iter"));
  o.zscore = get_bool("ica.zscore");
  o.seed = get_seed("ica.seed");
  if (o.components < 1) throw ConfigError("ica.components must be positive");
  if (!(o.tol > 0.0) || o.max_iter < 1) throw ConfigError("ica.tol and ica.max_iter must be positive");
  return o;
}

ablation::Architecture RunConfig::architecture() const {
  ablation::Architecture a;
  a.max_scans = static_cast<int>(get_int("model.max_scans"));
  a.model_dim = static_cast<int>(get_int("model.dim"));
  a.heads = static_cast<int>(get_int("model.heads"));
  a.head_dim = static_cast<int>(get_int("model.head_dim"));
  a.mlp_dim = static_cast<int>(get_int("model.mlp_dim"));
  a.blocks = static_cast<int>(get_int("model.blocks"));
  a.mlp_hidden = static_cast<int>(get_int("model.mlp_hidden"));
  a.tem_b_init = get_double("model.tem_b_init");
  a.tem_c_init = get_double("model.tem_c_init");
  const auto& dist = get("model.distance");
  if (dist == "to_most_recent") a.distance = encoder::TimeDistance::to_most_recent;
  else if (dist == "pairwise") a.distance = encoder::TimeDistance::pairwise;
  else throw ConfigError("model.distance must be to_most_recent or pairwise");
  const auto& pool = get("model.pooling");
  if (pool == "cls") a.pooling = encoder::Pooling::cls;
  else if (pool == "mean") a.pooling = encoder::Pooling::mean;
  else throw ConfigError("model.pooling must be cls or mean");
  if (a.max_scans < 1 || a.model_dim < 1 || a.heads < 1 || a.head_dim < 1 || a.mlp_dim < 1 || a.blocks < 1 ||
      a.mlp_hidden < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(a.tem_b_init > 0.0) || !(a.tem_c_init > 0.0)) throw ConfigError("TEM initial values must be positive");
  return a;
}

std::vector<ablation::ModelSpec> RunConfig::models() const {
  std::vector<ablation::ModelSpec> out;
  for (const auto& n : get_list("model.names")) out.push_back(ablation::parse_model(n));
  return out;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.seed = get_seed("train.seed");
  t.batch_size = static_cast<int>(get_int("train.batch_size"));
  t.learning_rate = get_double("train.learning_rate");
  t.momentum = get_double("train.momentum");
  t.max_epochs = static_cast<int>(get_int("train.max_epochs"));
  t.early_stop_window = static_cast<int>(get_int("train.early_stop_window"));
  t.early_stop_delta = get_double("train.early_stop_delta");
  t.folds = static_cast<int>(get_int("train.folds"));
  t.validation_fraction = get_double("train.validation_fraction");
  t.validate();
  return t;
}

GradcheckOptions RunConfig::gradcheck() const {
  GradcheckOptions g;
  g.samples_per_tensor = static_cast<int>(get_int("gradcheck.samples_per_tensor"));
  g.step = get_double("gradcheck.step");
  g.tolerance = get_double("gradcheck.tolerance");
  if (g.samples_per_tensor < 1 || !(g.step > 0.0) || !(g.tolerance > 0.0)) {
    throw ConfigError("gradcheck settings must be positive");
  }
  return g;
}

ablation::SuiteConfig RunConfig::suite() const {
  ablation::SuiteConfig s;
  s.cohort = generator();
  s.stride_days = stride_days();
  s.ica = ica_options();
  s.arch = architecture();
  s.train = train_config();
  s.models = models();
  s.seeds.clear();
  for (const auto& v : get_list("ablate.seeds")) {
    std::uint64_t seed = 0;
    if (!parse_number(v, seed)) throw ConfigError("ablate.seeds: '" + v + "' is not a seed");
    s.seeds.push_back(seed);
  }
  s.bootstrap_resamples = static_cast<int>(get_int("eval.bootstrap"));
  s.shuffle_labels = get_bool("ablate.shuffle_labels");
  if (const auto& r = get("eval.reclassify_model"); !r.empty()) s.reclassify_model = r;
  return s;
}

}  // namespace lmsig

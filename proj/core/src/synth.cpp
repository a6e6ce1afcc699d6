#include "lmsig/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "lmsig/error.hpp"
#include "lmsig/rng.hpp"

namespace lmsig::synth {

using json = nlohmann::json;

void GeneratorConfig::validate() const {
  if (n_subjects < 1 || p_variables < 2 || c_true < 1 || image_dim < 1) {
    throw ConfigError("generator counts must be positive (p_variables >= 2)");
  }
  if (c_true > p_variables) throw ConfigError("c_true cannot exceed p_variables");
  if (scan_count_weights.empty()) throw ConfigError("scan_count_weights must be non-empty");
  double total = 0.0;
  for (double w : scan_count_weights) {
    if (!(w >= 0.0)) throw ConfigError("scan_count_weights must be nonnegative");
    total += w;
  }
  if (total <= 0.0) throw ConfigError("scan_count_weights must not all be zero");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ConfigError("label_noise must lie in [0, 0.5)");
  if (min_scan_gap_days < 1 || max_scan_gap_days < min_scan_gap_days) {
    throw ConfigError("scan gaps must satisfy 1 <= min <= max");
  }
  if (record_span_days < 1 ||
      static_cast<long>(record_span_days - 1) <
          static_cast<long>(max_scans() - 1) * max_scan_gap_days) {
    throw ConfigError("record_span_days too short for the scan schedule");
  }
  if (!(lab_fraction >= 0.0 && lab_fraction <= 1.0)) throw ConfigError("lab_fraction must lie in [0, 1]");
  if (!(lab_interval_days >= 1.0)) throw ConfigError("lab_interval_days must be at least 1");
  if (!(code_base_rate >= 0.0) || !(image_noise >= 0.0) || !(lab_noise >= 0.0)) {
    throw ConfigError("rates and noise scales must be nonnegative");
  }
}

Vector SubjectTruth::latent_at(Day d) const {
  const Segment* seg = &segments.front();
  for (const auto& s : segments) {
    if (s.start <= d) seg = &s;
  }
  return seg->values;
}

Vector SubjectTruth::smoothed_latent_at(Day d, int window) const {
  const Day lo = std::max<Day>(0, d - window + 1);
  Vector acc = Vector::Zero(segments.front().values.size());
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const Day start = std::max(segments[k].start, lo);
    const Day end = k + 1 < segments.size() ? std::min(segments[k + 1].start - 1, d) : d;
    if (end >= start) acc += static_cast<double>(end - start + 1) * segments[k].values;
  }
  return acc / static_cast<double>(d - lo + 1);
}

double label_score(const GroundTruth& truth, const SubjectTruth& subject) {
  const int k = truth.malignant_source;
  if (truth.rule == LabelRule::final_scan) return subject.latent_at(subject.scan_days.back())(k);
  double sum = 0.0;
  for (const auto d : subject.scan_days) sum += subject.latent_at(d)(k);
  return sum / static_cast<double>(subject.scan_days.size());
}

int noiseless_label(const GroundTruth& truth, const SubjectTruth& subject) {
  return label_score(truth, subject) > truth.threshold ? 1 : 0;
}

std::vector<double> make_image_features(const Vector& latent, const Matrix& readout, double noise_scale,
                                        std::uint64_t seed) {
  if (latent.size() != readout.cols()) throw DataError("latent length does not match image readout");
  Rng rng(seed);
  const Vector clean = readout * latent;
  std::vector<double> out(static_cast<std::size_t>(clean.size()));
  for (Eigen::Index i = 0; i < clean.size(); ++i) out[static_cast<std::size_t>(i)] = clean(i) + noise_scale * rng.normal();
  return out;
}

namespace {

constexpr std::uint64_t kGlobalStream = 0xC0FFEEULL;

std::string numbered(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

double draw_source_value(Rng& rng, int source) {
  // Alternating sub- and super-Gaussian unit-variance laws keep the sources
  // identifiable by ICA.
  if (source % 2 == 0) return rng.uniform(-std::sqrt(3.0), std::sqrt(3.0));
  return rng.laplace(1.0 / std::sqrt(2.0));
}

}  // namespace

CohortGenerator::CohortGenerator(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const int p = config_.p_variables;
  const int c = config_.c_true;
  Rng rng(derive_seed(config_.seed, kGlobalStream));

  const int labs = static_cast<int>(std::lround(config_.lab_fraction * p));
  std::vector<curves::VariableSpec> vars;
  for (int i = 0; i < p; ++i) {
    const bool lab = i < labs;
    is_lab_.push_back(lab);
    vars.push_back({lab ? numbered("lab", i, 4) : numbered("code", i - labs, 4),
                    lab ? curves::VariableKind::continuous_lab : curves::VariableKind::categorical_event,
                    0.0});
  }

  globals_.mixing.resize(p, c);
  for (int i = 0; i < p; ++i) {
    for (int k = 0; k < c; ++k) globals_.mixing(i, k) = rng.normal(0.0, 1.0 / std::sqrt(c));
  }
  globals_.lab_offsets = Vector::Zero(p);
  for (int i = 0; i < labs; ++i) {
    globals_.lab_offsets(i) = rng.normal();
    vars[static_cast<std::size_t>(i)].default_value = globals_.lab_offsets(i);
  }
  globals_.image_readout.resize(config_.image_dim, c);
  for (int r = 0; r < config_.image_dim; ++r) {
    for (int k = 0; k < c; ++k) globals_.image_readout(r, k) = rng.normal(0.0, 1.0 / std::sqrt(c));
  }
  globals_.malignant_source = 0;
  for (int r = 0; r < config_.image_dim; ++r) {
    globals_.image_readout(r, 0) = config_.image_label_weight * rng.normal();
  }
  globals_.rule = config_.label_rule();
  globals_.threshold = 0.0;
  vocabulary_ = curves::Vocabulary(std::move(vars));
}

SubjectRecord CohortGenerator::subject(int index) const {
  if (index < 0 || index >= config_.n_subjects) throw DataError("subject index out of range");
  const auto& cfg = config_;
  const std::uint64_t subject_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
  Rng rng(subject_seed);
  const int c = cfg.c_true;
  const Day last_day = cfg.record_span_days - 1;

  SubjectRecord rec;
  auto& truth = rec.truth;
  truth.subject_id = numbered("S", index, 5);

  const int scans = 1 + static_cast<int>(rng.categorical(cfg.scan_count_weights));
  truth.scan_days.assign(static_cast<std::size_t>(scans), last_day);
  for (int j = scans - 2; j >= 0; --j) {
    truth.scan_days[static_cast<std::size_t>(j)] =
        truth.scan_days[static_cast<std::size_t>(j + 1)] -
        rng.uniform_int(cfg.min_scan_gap_days, cfg.max_scan_gap_days + 1);
  }

  std::vector<Day> starts{0};
  const Day first_scan = truth.scan_days.front();
  if (first_scan - curves::kMemoryWindowDays > 30) {
    starts.push_back(rng.uniform_int(1, first_scan - curves::kMemoryWindowDays));
  }
  for (int j = 0; j + 1 < scans; ++j) starts.push_back(truth.scan_days[static_cast<std::size_t>(j)] + 1);
  for (const Day s : starts) {
    Segment seg{s, Vector(c)};
    for (int k = 0; k < c; ++k) seg.values(k) = draw_source_value(rng, k);
    truth.segments.push_back(std::move(seg));
  }

  truth.label = noiseless_label(globals_, truth);
  truth.label_flipped = rng.uniform() < cfg.label_noise;
  if (truth.label_flipped) truth.label = 1 - truth.label;

  // Variable streams.
  const std::size_t nseg = truth.segments.size();
  std::vector<Vector> mixed(nseg);
  std::vector<Day> seg_end(nseg);
  for (std::size_t s = 0; s < nseg; ++s) {
    mixed[s] = globals_.mixing * truth.segments[s].values;
    seg_end[s] = s + 1 < nseg ? truth.segments[s + 1].start - 1 : last_day;
  }
  for (int i = 0; i < cfg.p_variables; ++i) {
    const auto& spec = vocabulary_[static_cast<std::size_t>(i)];
    std::vector<curves::Event> events;
    if (is_lab_[static_cast<std::size_t>(i)]) {
      Day d = rng.uniform_int(0, static_cast<std::int64_t>(cfg.lab_interval_days));
      std::size_t s = 0;
      while (d <= last_day) {
        while (d > seg_end[s]) ++s;
        const double v = globals_.lab_offsets(i) + mixed[s](i) + cfg.lab_noise * rng.normal();
        events.push_back({d, v});
        d += std::max<Day>(1, static_cast<Day>(std::llround(-std::log1p(-rng.uniform()) * cfg.lab_interval_days)));
      }
    } else {
      // Daily Poisson counts with a rate that is constant within a segment
      // are equivalent to one Poisson total per segment placed uniformly.
      for (std::size_t s = 0; s < nseg; ++s) {
        const Day len = seg_end[s] - truth.segments[s].start + 1;
        const double rate = cfg.code_base_rate * std::exp(cfg.code_gain * mixed[s](i));
        const auto count = rng.poisson(rate * static_cast<double>(len));
        for (std::int64_t e = 0; e < count; ++e) {
          events.push_back({truth.segments[s].start + rng.uniform_int(0, len), std::nullopt});
        }
      }
    }
    rec.streams.push_back(curves::make_stream(truth.subject_id, spec.id, spec.kind, std::move(events)));
  }

  std::vector<encoder::ScanObservation> obs;
  for (int j = 0; j < scans; ++j) {
    const Day d = truth.scan_days[static_cast<std::size_t>(j)];
    obs.push_back({d, std::vector<double>{},
                   make_image_features(truth.latent_at(d), globals_.image_readout, cfg.image_noise,
                                       derive_seed(subject_seed, 1000 + static_cast<std::uint64_t>(j)))});
  }
  rec.skeleton = encoder::assemble_sequence(truth.subject_id, cfg.max_scans(), std::move(obs), truth.label);
  return rec;
}

Cohort generate_cohort(const GeneratorConfig& config) {
  CohortGenerator gen(config);
  Cohort cohort;
  cohort.vocabulary = gen.vocabulary();
  cohort.truth = gen.globals();
  for (int i = 0; i < config.n_subjects; ++i) {
    auto rec = gen.subject(i);
    cohort.streams.push_back(std::move(rec.streams));
    cohort.skeletons.push_back(std::move(rec.skeleton));
    cohort.truth.subjects.push_back(std::move(rec.truth));
  }
  return cohort;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  json j;
  j["mixing"] = matrix_to_json(truth.mixing);
  j["image_readout"] = matrix_to_json(truth.image_readout);
  j["lab_offsets"] = vector_to_json(truth.lab_offsets);
  j["malignant_source"] = truth.malignant_source;
  j["rule"] = truth.rule == LabelRule::final_scan ? "final_scan" : "scan_mean";
  j["threshold"] = truth.threshold;
  json subjects = json::array();
  for (const auto& s : truth.subjects) {
    json segs = json::array();
    for (const auto& seg : s.segments) segs.push_back({{"start", seg.start}, {"values", vector_to_json(seg.values)}});
    subjects.push_back({{"subject_id", s.subject_id},
                        {"scan_days", s.scan_days},
                        {"label", s.label},
                        {"label_flipped", s.label_flipped},
                        {"segments", std::move(segs)}});
  }
  j["subjects"] = std::move(subjects);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth " + path.string());
  GroundTruth t;
  try {
    const json j = json::parse(in);
    t.mixing = matrix_from_json(j.at("mixing"));
    t.image_readout = matrix_from_json(j.at("image_readout"));
    t.lab_offsets = vector_from_json(j.at("lab_offsets"));
    t.malignant_source = j.at("malignant_source").get<int>();
    t.rule = j.at("rule").get<std::string>() == "final_scan" ? LabelRule::final_scan : LabelRule::scan_mean;
    t.threshold = j.at("threshold").get<double>();
    for (const auto& s : j.at("subjects")) {
      SubjectTruth st;
      st.subject_id = s.at("subject_id").get<std::string>();
      st.scan_days = s.at("scan_days").get<std::vector<Day>>();
      st.label = s.at("label").get<int>();
      st.label_flipped = s.at("label_flipped").get<bool>();
      for (const auto& seg : s.at("segments")) {
        st.segments.push_back({seg.at("start").get<Day>(), vector_from_json(seg.at("values"))});
      }
      t.subjects.push_back(std::move(st));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed ground truth " + path.string() + ": " + e.what());
  }
  return t;
}

}  // namespace lmsig::synth

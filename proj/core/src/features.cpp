#include "lmsig/features.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "lmsig/error.hpp"
#include "lmsig/parallel.hpp"
#include "lmsig/tfidf.hpp"

namespace lmsig::features {

curves::Vocabulary code_vocabulary(const curves::Vocabulary& vocabulary) {
  std::vector<curves::VariableSpec> codes;
  for (const auto& v : vocabulary.variables()) {
    if (v.kind == curves::VariableKind::categorical_event) codes.push_back(v);
  }
  return curves::Vocabulary(std::move(codes));
}

std::vector<Day> scan_days(const encoder::TokenSequence& skeleton) {
  std::set<Day> days;
  for (const auto& tok : skeleton.items) {
    if (!tok.padding && tok.modality != encoder::Modality::cls) days.insert(tok.day);
  }
  return {days.begin(), days.end()};
}

FeatureBuilder::FeatureBuilder(curves::Vocabulary vocabulary, std::int64_t stride_days, std::uint64_t sample_seed)
    : vocabulary_(std::move(vocabulary)), codes_(code_vocabulary(vocabulary_)), sampler_(stride_days, sample_seed) {}

void FeatureBuilder::add(const curves::CurveSet& curves, std::span<const curves::EventStream> streams,
                         const encoder::TokenSequence& skeleton) {
  if (curves.variable_count() != vocabulary_.size()) throw DataError("curve set does not match the vocabulary");
  sampler_.add(curves);
  RawSubject subject{curves.subject_id, skeleton.label, {}};
  for (const Day d : scan_days(skeleton)) {
    RawScan scan;
    scan.day = d;
    const auto x = curves.cross_section(d);
    scan.section = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    scan.code_counts = tfidf::term_counts(streams, codes_, d);
    for (const auto& tok : skeleton.items) {
      if (!tok.padding && tok.modality == encoder::Modality::image && tok.day == d) scan.image = tok.payload;
    }
    subject.scans.push_back(std::move(scan));
  }
  subjects_.push_back(std::move(subject));
}

RawFeatures FeatureBuilder::finish() && { return {std::move(sampler_).finish(), std::move(subjects_)}; }

FeatureSet project_features(const RawFeatures& raw, const ica::SignatureModel& model) {
  FeatureSet out;
  out.signature_dim = static_cast<int>(model.components());
  out.code_dim = -1;
  out.image_dim = -1;
  for (const auto& s : raw.subjects) {
    if (!s.label) throw DataError("subject '" + s.subject_id + "' has no label");
    SubjectFeatures f{s.subject_id, *s.label, {}};
    for (const auto& scan : s.scans) {
      if (scan.section.size() != model.variables()) {
        throw DataError("vocabulary mismatch: subject '" + s.subject_id + "' has " +
                        std::to_string(scan.section.size()) + " variables, model expects " +
                        std::to_string(model.variables()));
      }
      const auto codes = static_cast<int>(scan.code_counts.size());
      const auto img = static_cast<int>(scan.image.size());
      if (out.code_dim < 0) out.code_dim = codes;
      if (codes != out.code_dim) throw DataError("code count length differs for subject '" + s.subject_id + "'");
      if (img > 0) {
        if (out.image_dim < 0) out.image_dim = img;
        if (img != out.image_dim) throw DataError("image length differs for subject '" + s.subject_id + "'");
      }
      f.scans.push_back({scan.day, model.project(scan.section), scan.code_counts, scan.image});
    }
    if (f.scans.empty()) throw DataError("subject '" + s.subject_id + "' has no scans");
    out.subjects.push_back(std::move(f));
  }
  out.code_dim = std::max(out.code_dim, 0);
  out.image_dim = std::max(out.image_dim, 0);
  return out;
}

SyntheticFeatures synthesize_features(const synth::GeneratorConfig& config, std::int64_t stride_days,
                                      std::uint64_t sample_seed, unsigned threads) {
  synth::CohortGenerator gen(config);
  SyntheticFeatures out;
  out.vocabulary = gen.vocabulary();
  out.truth = gen.globals();
  FeatureBuilder builder(gen.vocabulary(), stride_days, sample_seed);

  const std::size_t n = static_cast<std::size_t>(config.n_subjects);
  const std::size_t chunk = 4 * static_cast<std::size_t>(resolve_threads(threads));
  struct Slot {
    synth::SubjectRecord record;
    curves::CurveSet curves;
  };
  for (std::size_t base = 0; base < n; base += chunk) {
    const std::size_t count = std::min(chunk, n - base);
    std::vector<Slot> slots(count);
    parallel_for(count, threads, [&](std::size_t k) {
      auto rec = gen.subject(static_cast<int>(base + k));
      slots[k].curves = curves::build_curveset(rec.streams, gen.vocabulary(), gen.grid());
      slots[k].record = std::move(rec);
    });
    for (auto& s : slots) {
      builder.add(s.curves, s.record.streams, s.record.skeleton);
      out.truth.subjects.push_back(std::move(s.record.truth));
    }
  }
  out.raw = std::move(builder).finish();
  return out;
}

namespace {

void write_csv(std::ostream& out, const double* v, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out << ',';
    out << v[i];
  }
}

std::vector<double> parse_csv(const std::string& text, std::size_t lineno) {
  std::vector<double> v;
  if (text.empty()) return v;
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DataError("invalid number '" + tok + "' in scan record at line " + std::to_string(lineno));
    }
  }
  return v;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_scans(std::ostream& out, const RawFeatures& raw) {
  out << std::setprecision(17);
  for (const auto& s : raw.subjects) {
    for (const auto& scan : s.scans) {
      out << s.subject_id << '\t' << scan.day << '\t';
      write_csv(out, scan.section.data(), scan.section.size());
      out << '\t';
      write_csv(out, scan.code_counts.data(), scan.code_counts.size());
      out << '\t';
      write_csv(out, scan.image.data(), static_cast<Eigen::Index>(scan.image.size()));
      out << '\n';
    }
  }
}

std::vector<RawSubject> read_scans(std::istream& in) {
  std::vector<RawSubject> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() == 4 && line.back() == '\t') f.emplace_back();
    if (f.size() != 5) throw DataError("scan record at line " + std::to_string(lineno) + " needs 5 fields");
    RawScan scan;
    try {
      scan.day = std::stoll(f[1]);
    } catch (const std::exception&) {
      throw DataError("invalid day at line " + std::to_string(lineno));
    }
    scan.section = to_vector(parse_csv(f[2], lineno));
    scan.code_counts = to_vector(parse_csv(f[3], lineno));
    scan.image = parse_csv(f[4], lineno);
    if (out.empty() || out.back().subject_id != f[0]) out.push_back({f[0], std::nullopt, {}});
    if (!out.back().scans.empty() && out.back().scans.back().day >= scan.day) {
      throw DataError("scan days must ascend within a subject (line " + std::to_string(lineno) + ")");
    }
    out.back().scans.push_back(std::move(scan));
  }
  return out;
}

void save_samples(const std::filesystem::path& path, const ica::SampleMatrix& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  detail::write_pod<std::int64_t>(out, samples.X.rows());
  detail::write_pod<std::int64_t>(out, samples.X.cols());
  detail::write_row_major(out, samples.X);
}

ica::SampleMatrix load_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sample matrix " + path.string());
  const auto rows = detail::read_pod<std::int64_t>(in, "sample matrix header");
  const auto cols = detail::read_pod<std::int64_t>(in, "sample matrix header");
  if (rows < 0 || cols < 0 || rows > (1 << 20) || cols > (1LL << 32)) throw DataError("corrupt sample matrix header");
  ica::SampleMatrix s;
  s.X.resize(rows, cols);
  detail::read_row_major(in, s.X, "sample matrix");
  return s;
}

}  // namespace lmsig::features

#pragma once

// Per-scan model inputs: curve cross-sections (projected to signature
// expressions once an ICA model exists), binned code counts for the TF-IDF
// baseline, and image features, together with the ICA sample matrix drawn
// from the same curves.

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmsig/curves.hpp"
#include "lmsig/encoder.hpp"
#include "lmsig/ica.hpp"
#include "lmsig/synth.hpp"

namespace lmsig::features {

using Vector = Eigen::VectorXd;
using curves::Day;

struct RawScan {
  Day day = 0;
  Vector section;      // all curves at `day`, vocabulary order
  Vector code_counts;  // code vocabulary order
  std::vector<double> image;  // empty when no image was acquired
};

struct RawSubject {
  std::string subject_id;
  std::optional<int> label;
  std::vector<RawScan> scans;  // ascending by day
};

struct RawFeatures {
  ica::SampleMatrix samples;
  std::vector<RawSubject> subjects;
};

/// The categorical variables of `vocabulary`, in order.
curves::Vocabulary code_vocabulary(const curves::Vocabulary& vocabulary);

/// Scan days of a skeleton: the distinct days of its non-padded tokens.
std::vector<Day> scan_days(const encoder::TokenSequence& skeleton);

/// Accumulates subjects one at a time so their curves can be dropped after
/// use.
class FeatureBuilder {
 public:
  FeatureBuilder(curves::Vocabulary vocabulary, std::int64_t stride_days, std::uint64_t sample_seed);

  const curves::Vocabulary& vocabulary() const { return vocabulary_; }

  /// `curves` must have been built from `streams` with this vocabulary.
  void add(const curves::CurveSet& curves, std::span<const curves::EventStream> streams,
           const encoder::TokenSequence& skeleton);
  RawFeatures finish() &&;

 private:
  curves::Vocabulary vocabulary_;
  curves::Vocabulary codes_;
  ica::CurveSampler sampler_;
  std::vector<RawSubject> subjects_;
};

struct ScanFeatures {
  Day day = 0;
  Vector expression;
  Vector code_counts;
  std::vector<double> image;
};

struct SubjectFeatures {
  std::string subject_id;
  int label = 0;
  std::vector<ScanFeatures> scans;  // ascending by day
};

struct FeatureSet {
  std::vector<SubjectFeatures> subjects;
  int signature_dim = 0;
  int code_dim = 0;
  int image_dim = 0;
};

/// Projects every cross-section onto the signatures. Subjects without a
/// label are rejected.
FeatureSet project_features(const RawFeatures& raw, const ica::SignatureModel& model);

struct SyntheticFeatures {
  RawFeatures raw;
  curves::Vocabulary vocabulary;
  synth::GroundTruth truth;
};

/// Generates a cohort and reduces it to RawFeatures without holding every
/// subject's curves at once. Curve building runs on `threads` workers; the
/// result does not depend on the thread count.
SyntheticFeatures synthesize_features(const synth::GeneratorConfig& config, std::int64_t stride_days,
                                      std::uint64_t sample_seed, unsigned threads = 1);

/// Line records: subject<TAB>day<TAB>section<TAB>code_counts<TAB>image, each
/// vector comma-separated (possibly empty).
void write_scans(std::ostream& out, const RawFeatures& raw);
/// Labels are not part of the scan file; attach them separately.
std::vector<RawSubject> read_scans(std::istream& in);

/// Binary sample matrix: int64 rows, int64 cols, then row-major float64.
void save_samples(const std::filesystem::path& path, const ica::SampleMatrix& samples);
ica::SampleMatrix load_samples(const std::filesystem::path& path);

}  // namespace lmsig::features

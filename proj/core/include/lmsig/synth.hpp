#pragma once

// Synthetic cohorts with planted ground truth.
//
// Each subject carries c_true latent sources that are piecewise constant in
// time, with one segment per inter-scan interval (so every scan sees a fresh
// draw) plus an optional extra change point early in the record. Variables
// are a fixed linear mixture of the sources:
//   labs:   value = offset + (S e)_i + noise, observed at random days
//   codes:  daily counts ~ Poisson(base * exp(gain * (S e)_i))
// Image features are a linear readout of the latent state at the scan plus
// seeded noise. The label is read off a designated "malignant" source.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmsig/curves.hpp"
#include "lmsig/encoder.hpp"

namespace lmsig::synth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using curves::Day;

enum class LabelRule {
  /// Malignant source at the most recent scan; older scans are decoys.
  final_scan,
  /// Mean of the malignant source over all scans.
  scan_mean,
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  int n_subjects = 200;
  int p_variables = 200;
  int c_true = 20;
  int record_span_days = 1825;
  /// Relative frequency of 1, 2, ..., T scans; its length fixes T.
  std::vector<double> scan_count_weights{0.2, 0.3, 0.5};
  /// When set the label follows LabelRule::final_scan, otherwise scan_mean.
  bool recency_signal = false;
  double label_noise = 0.0;

  double lab_fraction = 0.5;
  double lab_interval_days = 30.0;
  double lab_noise = 0.2;
  double code_base_rate = 0.1;
  double code_gain = 0.3;
  int image_dim = 16;
  double image_noise = 0.5;
  /// Weight of the malignant source in the image readout; 0 makes images
  /// carry no label information.
  double image_label_weight = 1.0;
  int min_scan_gap_days = 400;
  int max_scan_gap_days = 700;

  int max_scans() const { return static_cast<int>(scan_count_weights.size()); }
  LabelRule label_rule() const { return recency_signal ? LabelRule::final_scan : LabelRule::scan_mean; }
  void validate() const;
};

struct Segment {
  Day start = 0;  // first day the values apply
  Vector values;  // length c_true
};

struct SubjectTruth {
  std::string subject_id;
  std::vector<Segment> segments;  // ascending by start, first starts at day 0
  std::vector<Day> scan_days;     // ascending, last = record_span_days - 1
  int label = 0;
  bool label_flipped = false;

  Vector latent_at(Day d) const;
  /// Trailing mean of the latent state over [max(0, d - window + 1), d].
  Vector smoothed_latent_at(Day d, int window = curves::kMemoryWindowDays) const;
};

struct GroundTruth {
  Matrix mixing;         // p x c_true
  Matrix image_readout;  // image_dim x c_true
  Vector lab_offsets;    // p (zero for code variables)
  int malignant_source = 0;
  LabelRule rule = LabelRule::scan_mean;
  double threshold = 0.0;
  std::vector<SubjectTruth> subjects;
};

/// Label implied by the generative rule, before label noise.
int noiseless_label(const GroundTruth& truth, const SubjectTruth& subject);
/// Score the label rule thresholds.
double label_score(const GroundTruth& truth, const SubjectTruth& subject);

struct SubjectRecord {
  std::vector<curves::EventStream> streams;
  /// Image payloads filled; signature tokens present with empty payloads.
  encoder::TokenSequence skeleton;
  SubjectTruth truth;
};

/// Deterministic per-subject generator: subject(i) depends only on the
/// config and i, so subjects may be produced in any order or in parallel.
class CohortGenerator {
 public:
  explicit CohortGenerator(GeneratorConfig config);

  const GeneratorConfig& config() const { return config_; }
  const curves::Vocabulary& vocabulary() const { return vocabulary_; }
  /// Global ground truth without per-subject entries.
  const GroundTruth& globals() const { return globals_; }
  curves::DayRange grid() const { return {0, config_.record_span_days - 1}; }

  SubjectRecord subject(int index) const;

 private:
  GeneratorConfig config_;
  curves::Vocabulary vocabulary_;
  GroundTruth globals_;
  std::vector<bool> is_lab_;
};

struct Cohort {
  curves::Vocabulary vocabulary;
  std::vector<std::vector<curves::EventStream>> streams;  // per subject
  std::vector<encoder::TokenSequence> skeletons;
  GroundTruth truth;
};

Cohort generate_cohort(const GeneratorConfig& config);

/// readout * latent + noise_scale * N(0, I) drawn from `seed`.
std::vector<double> make_image_features(const Vector& latent, const Matrix& readout,
                                        double noise_scale, std::uint64_t seed);

/// JSON; consumed by tests only.
void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace lmsig::synth

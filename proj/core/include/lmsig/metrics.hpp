#pragma once

// Evaluation: rank AUC with bootstrap confidence intervals, the two-sided
// Wilcoxon signed-rank test, risk-tier reclassification and the
// running-mean early-stopping rule used during training.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lmsig::eval {

/// Mann-Whitney U / (n_pos * n_neg), ties counted one half. Throws
/// DataError("AUC undefined") unless both classes are present.
double auc(std::span<const double> predictions, std::span<const int> labels);

struct BootstrapResult {
  double point = 0.0;  // AUC on the full sample
  double mean = 0.0;   // mean of the bootstrap AUCs
  double lo = 0.0;     // 2.5th percentile
  double hi = 0.0;     // 97.5th percentile
  std::vector<double> samples;
};

/// Resamples (prediction, label) pairs with replacement; a resample lacking
/// either class is redrawn. Percentiles interpolate linearly between order
/// statistics.
BootstrapResult bootstrap_auc(std::span<const double> predictions, std::span<const int> labels,
                              int resamples = 1000, std::uint64_t seed = 0);

/// The same resample indices applied to two models' predictions, so the
/// per-resample AUCs are paired.
std::pair<BootstrapResult, BootstrapResult> paired_bootstrap_auc(std::span<const double> a,
                                                                 std::span<const double> b,
                                                                 std::span<const int> labels,
                                                                 int resamples = 1000,
                                                                 std::uint64_t seed = 0);

/// Linear-interpolation percentile of unsorted data, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Two-sided Wilcoxon signed-rank p-value for paired samples. Zero
/// differences are dropped; ties share average ranks. Exact null
/// distribution for n <= 20, normal approximation with tie correction
/// above. Returns 1 when every difference is zero and throws DataError when
/// fewer than 5 non-zero differences remain.
double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

inline constexpr int kWilcoxonExactLimit = 20;

enum class RiskTier : int { low = 0, medium = 1, high = 2 };

inline constexpr double kLowRiskBound = 0.05;
inline constexpr double kHighRiskBound = 0.65;

RiskTier risk_tier(double probability);
std::string_view to_string(RiskTier tier);

using TierMatrix = std::array<std::array<int, 3>, 3>;  // [baseline tier][model tier]

struct Reclassification {
  TierMatrix cases{};
  TierMatrix controls{};
  int cases_correct = 0;      // moved to a higher tier
  int cases_incorrect = 0;    // moved to a lower tier
  int controls_correct = 0;   // moved to a lower tier
  int controls_incorrect = 0; // moved to a higher tier
};

Reclassification reclassify(std::span<const double> model, std::span<const double> baseline,
                            std::span<const int> labels);

struct EarlyStopRule {
  int window = 100;
  double delta = 0.2;
};

/// Index of the first step s whose trailing window mean exceeds the minimum
/// of all earlier window means by more than delta; nullopt if it never does.
std::optional<std::size_t> early_stop_step(std::span<const double> losses, EarlyStopRule rule = {});

/// Incremental form of early_stop_step(), fed one loss per global step.
class EarlyStopper {
 public:
  explicit EarlyStopper(EarlyStopRule rule = {});
  /// Returns true when training should stop at this step.
  bool observe(double loss);
  std::size_t steps() const { return history_.size(); }

 private:
  EarlyStopRule rule_;
  std::vector<double> history_;
  std::optional<double> best_mean_;
};

struct Prediction {
  std::string subject_id;
  double probability = 0.0;
  int label = 0;
  int fold = 0;
};

struct ModelSummary {
  std::string name;
  std::vector<Prediction> predictions;
  BootstrapResult auc;
};

struct Comparison {
  std::string a, b;
  double p_value = 1.0;
};

struct ReclassificationEntry {
  std::string model, baseline;
  Reclassification table;
};

struct EvalReport {
  std::vector<ModelSummary> models;
  std::vector<Comparison> comparisons;
  std::vector<ReclassificationEntry> reclassification;
};

struct ReportOptions {
  int resamples = 1000;
  std::uint64_t seed = 0;
  /// Reclassification is reported for this model against every other one.
  std::optional<std::string> reclassify_model;
};

/// Scores each model and compares every pair with a Wilcoxon test over
/// paired bootstrap AUCs. All models must cover the same subjects.
EvalReport build_report(std::vector<std::pair<std::string, std::vector<Prediction>>> models,
                        const ReportOptions& options);

void write_report_text(std::ostream& out, const EvalReport& report);
/// model, mean_auc, ci_lo, ci_hi, auc, then one p-value column per model.
void write_report_table(std::ostream& out, const EvalReport& report);

/// subject_id<TAB>fold<TAB>probability<TAB>label
void write_predictions(std::ostream& out, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(std::istream& in);

}  // namespace lmsig::eval

#include "lmsig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lmsig/error.hpp"
#include "lmsig/rng.hpp"

namespace lmsig::eval {

namespace {

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DataError(std::string("misaligned inputs: ") + what);
}

// Average 1-based ranks of `values`, ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double auc_of_indices(std::span<const double> preds, std::span<const int> labels, std::span<const std::size_t> idx,
                      std::vector<double>& scratch_p, std::vector<int>& scratch_l) {
  scratch_p.resize(idx.size());
  scratch_l.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    scratch_p[i] = preds[idx[i]];
    scratch_l[i] = labels[idx[i]];
  }
  return auc(scratch_p, scratch_l);
}

bool both_classes(std::span<const int> labels, std::span<const std::size_t> idx) {
  bool pos = false, neg = false;
  for (auto i : idx) (labels[i] == 1 ? pos : neg) = true;
  return pos && neg;
}

void finish(BootstrapResult& r) {
  r.mean = std::accumulate(r.samples.begin(), r.samples.end(), 0.0) / static_cast<double>(r.samples.size());
  r.lo = percentile(r.samples, 0.025);
  r.hi = percentile(r.samples, 0.975);
}

}  // namespace

double auc(std::span<const double> predictions, std::span<const int> labels) {
  check_aligned(predictions.size(), labels.size(), "predictions and labels");
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC undefined: both classes must be present");
  for (double p : predictions) {
    if (std::isnan(p)) throw DataError("NaN prediction");
  }
  const auto ranks = average_ranks(predictions);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of empty data");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_auc(std::span<const double> predictions, std::span<const int> labels, int resamples,
                              std::uint64_t seed) {
  return paired_bootstrap_auc(predictions, predictions, labels, resamples, seed).first;
}

std::pair<BootstrapResult, BootstrapResult> paired_bootstrap_auc(std::span<const double> a,
                                                                 std::span<const double> b,
                                                                 std::span<const int> labels, int resamples,
                                                                 std::uint64_t seed) {
  check_aligned(a.size(), labels.size(), "predictions and labels");
  check_aligned(b.size(), labels.size(), "predictions and labels");
  if (resamples < 1) throw ConfigError("bootstrap resamples must be positive");
  BootstrapResult ra, rb;
  ra.point = auc(a, labels);
  rb.point = auc(b, labels);
  Rng rng(seed);
  const auto n = static_cast<std::int64_t>(labels.size());
  std::vector<std::size_t> idx(labels.size());
  std::vector<double> sp;
  std::vector<int> sl;
  for (int r = 0; r < resamples; ++r) {
    do {
      for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, n));
    } while (!both_classes(labels, idx));
    ra.samples.push_back(auc_of_indices(a, labels, idx, sp, sl));
    rb.samples.push_back(auc_of_indices(b, labels, idx, sp, sl));
  }
  finish(ra);
  finish(rb);
  return {std::move(ra), std::move(rb)};
}

double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  check_aligned(a.size(), b.size(), "paired samples");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (std::isnan(d)) throw DataError("NaN in paired samples");
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) return 1.0;
  const std::size_t n = diffs.size();
  if (n < 5) throw DataError("Wilcoxon test needs at least 5 non-zero differences");

  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::fabs(diffs[i]);
  const auto ranks = average_ranks(mags);

  if (n <= static_cast<std::size_t>(kWilcoxonExactLimit)) {
    // Doubled ranks are integers even with ties, so the null distribution of
    // W+ is an exact subset-sum count over the 2^n sign assignments.
    std::vector<int> r2(n);
    int total = 0, observed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += r2[i];
      if (diffs[i] > 0) observed += r2[i];
    }
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    for (int r : r2) {
      for (int s = total; s >= r; --s) ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
    }
    const int obs_dev = std::abs(2 * observed - total);
    double extreme = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (std::abs(2 * s - total) >= obs_dev) extreme += ways[static_cast<std::size_t>(s)];
    }
    return std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(n)));
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0) w_plus += ranks[i];
  }
  const double nn = static_cast<double>(n);
  const double mu = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  if (var <= 0.0) return 1.0;
  const double z = (w_plus - mu) / std::sqrt(var);
  return std::min(1.0, std::erfc(std::fabs(z) / std::sqrt(2.0)));
}

RiskTier risk_tier(double probability) {
  if (probability < kLowRiskBound) return RiskTier::low;
  if (probability < kHighRiskBound) return RiskTier::medium;
  return RiskTier::high;
}

std::string_view to_string(RiskTier tier) {
  switch (tier) {
    case RiskTier::low: return "low";
    case RiskTier::medium: return "medium";
    case RiskTier::high: return "high";
  }
  return "?";
}

Reclassification reclassify(std::span<const double> model, std::span<const double> baseline,
                            std::span<const int> labels) {
  check_aligned(model.size(), labels.size(), "model predictions and labels");
  check_aligned(baseline.size(), labels.size(), "baseline predictions and labels");
  Reclassification r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int from = static_cast<int>(risk_tier(baseline[i]));
    const int to = static_cast<int>(risk_tier(model[i]));
    if (labels[i] == 1) {
      ++r.cases[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)];
      if (to > from) ++r.cases_correct;
      if (to < from) ++r.cases_incorrect;
    } else {
      ++r.controls[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)];
      if (to < from) ++r.controls_correct;
      if (to > from) ++r.controls_incorrect;
    }
  }
  return r;
}

std::optional<std::size_t> early_stop_step(std::span<const double> losses, EarlyStopRule rule) {
  EarlyStopper stopper(rule);
  for (std::size_t s = 0; s < losses.size(); ++s) {
    if (stopper.observe(losses[s])) return s;
  }
  return std::nullopt;
}

EarlyStopper::EarlyStopper(EarlyStopRule rule) : rule_(rule) {
  if (rule_.window < 1) throw ConfigError("early_stop_window must be at least 1");
  if (!(rule_.delta > 0.0)) throw ConfigError("early_stop_delta must be positive");
}

bool EarlyStopper::observe(double loss) {
  history_.push_back(loss);
  const auto w = static_cast<std::size_t>(rule_.window);
  if (history_.size() < w) return false;
  double sum = 0.0;
  for (std::size_t i = history_.size() - w; i < history_.size(); ++i) sum += history_[i];
  const double mean = sum / static_cast<double>(w);
  const bool stop = best_mean_ && mean - *best_mean_ > rule_.delta;
  if (!best_mean_ || mean < *best_mean_) best_mean_ = mean;
  return stop;
}

EvalReport build_report(std::vector<std::pair<std::string, std::vector<Prediction>>> models,
                        const ReportOptions& options) {
  if (models.empty()) throw DataError("no models to report");
  for (auto& [name, preds] : models) {
    std::sort(preds.begin(), preds.end(),
              [](const Prediction& x, const Prediction& y) { return x.subject_id < y.subject_id; });
  }
  const auto& ref = models.front().second;
  std::vector<int> labels;
  for (const auto& p : ref) labels.push_back(p.label);
  std::vector<std::vector<double>> probs;
  for (const auto& [name, preds] : models) {
    if (preds.size() != ref.size()) throw DataError("model '" + name + "' covers a different subject set");
    std::vector<double> pr;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].subject_id != ref[i].subject_id || preds[i].label != ref[i].label) {
        throw DataError("model '" + name + "' is misaligned with '" + models.front().first + "'");
      }
      pr.push_back(preds[i].probability);
    }
    probs.push_back(std::move(pr));
  }

  EvalReport report;
  for (std::size_t m = 0; m < models.size(); ++m) {
    report.models.push_back({models[m].first, models[m].second,
                             bootstrap_auc(probs[m], labels, options.resamples, options.seed)});
  }
  // Every model's bootstrap uses the same seed, hence the same resample
  // indices, so the sample vectors are already paired.
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      report.comparisons.push_back({models[i].first, models[j].first,
                                    wilcoxon_signed_rank(report.models[i].auc.samples,
                                                         report.models[j].auc.samples)});
    }
  }
  if (options.reclassify_model) {
    std::size_t target = models.size();
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (models[m].first == *options.reclassify_model) target = m;
    }
    if (target == models.size()) throw DataError("unknown model '" + *options.reclassify_model + "'");
    for (std::size_t m = 0; m < models.size(); ++m) {
      if (m == target) continue;
      report.reclassification.push_back(
          {models[target].first, models[m].first, reclassify(probs[target], probs[m], labels)});
    }
  }
  return report;
}

namespace {

void write_tier_matrix(std::ostream& out, const TierMatrix& m) {
  out << "      baseline\\model   low  medium    high\n";
  for (int r = 0; r < 3; ++r) {
    out << "      " << std::setw(16) << std::left << to_string(static_cast<RiskTier>(r)) << std::right;
    for (int c = 0; c < 3; ++c) out << std::setw(c == 0 ? 6 : 8) << m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    out << '\n';
  }
}

}  // namespace

void write_report_text(std::ostream& out, const EvalReport& report) {
  out << std::fixed << std::setprecision(4);
  out << "Model performance (pooled predictions, 95% bootstrap CI)\n";
  for (const auto& m : report.models) {
    out << "  " << std::setw(16) << std::left << m.name << std::right << " AUC " << m.auc.mean << " ["
        << m.auc.lo << ", " << m.auc.hi << "]  n=" << m.predictions.size() << '\n';
  }
  if (!report.comparisons.empty()) {
    out << "Wilcoxon signed-rank over paired bootstrap AUCs (two-sided)\n";
    for (const auto& c : report.comparisons) {
      out << "  " << c.a << " vs " << c.b << ": p=" << std::scientific << std::setprecision(3) << c.p_value
          << std::fixed << std::setprecision(4) << '\n';
    }
  }
  for (const auto& r : report.reclassification) {
    out << "Reclassification: " << r.model << " against " << r.baseline << '\n';
    out << "    cases: " << r.table.cases_correct << " correct, " << r.table.cases_incorrect << " incorrect\n";
    write_tier_matrix(out, r.table.cases);
    out << "    controls: " << r.table.controls_correct << " correct, " << r.table.controls_incorrect
        << " incorrect\n";
    write_tier_matrix(out, r.table.controls);
  }
  out.unsetf(std::ios::floatfield);
}

void write_report_table(std::ostream& out, const EvalReport& report) {
  std::map<std::pair<std::string, std::string>, double> p;
  for (const auto& c : report.comparisons) {
    p[{c.a, c.b}] = c.p_value;
    p[{c.b, c.a}] = c.p_value;
  }
  out << "model\tmean_auc\tci_lo\tci_hi\tauc";
  for (const auto& m : report.models) out << "\tp_vs_" << m.name;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& m : report.models) {
    out << m.name << '\t' << m.auc.mean << '\t' << m.auc.lo << '\t' << m.auc.hi << '\t' << m.auc.point;
    for (const auto& other : report.models) {
      out << '\t';
      if (other.name == m.name) out << '-';
      else out << p.at({m.name, other.name});
    }
    out << '\n';
  }
}

void write_predictions(std::ostream& out, std::span<const Prediction> predictions) {
  out << std::setprecision(17);
  for (const auto& p : predictions) {
    out << p.subject_id << '\t' << p.fold << '\t' << p.probability << '\t' << p.label << '\n';
  }
}

std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    Prediction p;
    std::string prob;
    if (!std::getline(fields, p.subject_id, '\t') || !(fields >> p.fold) || !(fields >> prob) || !(fields >> p.label)) {
      throw DataError("malformed prediction record at line " + std::to_string(lineno));
    }
    try {
      p.probability = std::stod(prob);
    } catch (const std::exception&) {
      throw DataError("malformed probability at line " + std::to_string(lineno));
    }
    if (p.label != 0 && p.label != 1) throw DataError("label must be 0 or 1 at line " + std::to_string(lineno));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace lmsig::eval

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lmsig/error.hpp"
#include "lmsig/features.hpp"
#include "lmsig/ica.hpp"
#include "lmsig/metrics.hpp"
#include "lmsig/synth.hpp"
#include "oracles.hpp"

using namespace lmsig;
using namespace lmsig::synth;

namespace {

GeneratorConfig small_cohort(std::uint64_t seed) {
  GeneratorConfig c;
  c.seed = seed;
  c.n_subjects = 40;
  c.p_variables = 20;
  c.c_true = 4;
  return c;
}

// Plain logistic regression by full-batch gradient descent; used as a probe.
std::vector<double> fit_probe(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  const std::size_t d = x.front().size();
  std::vector<double> w(d + 1, 0.0);
  for (int it = 0; it < 500; ++it) {
    std::vector<double> g(d + 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = w[d];
      for (std::size_t k = 0; k < d; ++k) z += w[k] * x[i][k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
      for (std::size_t k = 0; k < d; ++k) g[k] += err * x[i][k];
      g[d] += err;
    }
    for (std::size_t k = 0; k <= d; ++k) w[k] -= 0.5 * g[k] / static_cast<double>(x.size());
  }
  return w;
}

}  // namespace

TEST(Generator, ValidatesConfig) {
  auto c = small_cohort(1);
  c.c_true = 30;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_cohort(1);
  c.label_noise = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_cohort(1);
  c.min_scan_gap_days = 800;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_cohort(1);
  c.record_span_days = 1000;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(small_cohort(1).validate());
}

TEST(Generator, SameSeedSameCohort) {
  const auto a = generate_cohort(small_cohort(3));
  const auto b = generate_cohort(small_cohort(3));
  EXPECT_EQ(a.truth.mixing, b.truth.mixing);
  ASSERT_EQ(a.streams.size(), b.streams.size());
  for (std::size_t s = 0; s < a.streams.size(); ++s) {
    ASSERT_EQ(a.streams[s].size(), b.streams[s].size());
    for (std::size_t v = 0; v < a.streams[s].size(); ++v) {
      ASSERT_EQ(a.streams[s][v].events.size(), b.streams[s][v].events.size());
      for (std::size_t e = 0; e < a.streams[s][v].events.size(); ++e) {
        EXPECT_EQ(a.streams[s][v].events[e].day, b.streams[s][v].events[e].day);
        EXPECT_EQ(a.streams[s][v].events[e].value, b.streams[s][v].events[e].value);
      }
    }
    for (std::size_t t = 0; t < a.skeletons[s].items.size(); ++t) {
      EXPECT_EQ(a.skeletons[s].items[t].payload, b.skeletons[s].items[t].payload);
    }
  }
  const auto other = generate_cohort(small_cohort(4));
  EXPECT_NE(a.truth.mixing, other.truth.mixing);
}

TEST(Generator, SubjectsAreIndependentOfOrder) {
  CohortGenerator gen(small_cohort(5));
  const auto late = gen.subject(7);
  for (int i = 0; i < 7; ++i) (void)gen.subject(i);
  const auto again = gen.subject(7);
  EXPECT_EQ(late.truth.scan_days, again.truth.scan_days);
  EXPECT_EQ(late.truth.label, again.truth.label);
}

TEST(Generator, StructureOfSubjects) {
  const auto cfg = small_cohort(6);
  const auto cohort = generate_cohort(cfg);
  for (const auto& s : cohort.truth.subjects) {
    ASSERT_FALSE(s.scan_days.empty());
    EXPECT_LE(static_cast<int>(s.scan_days.size()), cfg.max_scans());
    EXPECT_EQ(s.scan_days.back(), cfg.record_span_days - 1);
    for (std::size_t j = 1; j < s.scan_days.size(); ++j) {
      const auto gap = s.scan_days[j] - s.scan_days[j - 1];
      EXPECT_GE(gap, cfg.min_scan_gap_days);
      EXPECT_LE(gap, cfg.max_scan_gap_days);
    }
    EXPECT_EQ(s.segments.front().start, 0);
    // every scan sees its own segment
    for (std::size_t j = 1; j < s.scan_days.size(); ++j) {
      EXPECT_NE(s.latent_at(s.scan_days[j]), s.latent_at(s.scan_days[j - 1]));
    }
  }
}

TEST(Generator, LabelsRecomputableWithoutNoise) {
  for (bool recency : {false, true}) {
    auto cfg = small_cohort(7);
    cfg.n_subjects = 200;
    cfg.recency_signal = recency;
    const auto cohort = generate_cohort(cfg);
    int positives = 0;
    for (std::size_t i = 0; i < cohort.truth.subjects.size(); ++i) {
      const auto& s = cohort.truth.subjects[i];
      EXPECT_EQ(s.label, noiseless_label(cohort.truth, s));
      EXPECT_FALSE(s.label_flipped);
      EXPECT_EQ(cohort.skeletons[i].label, s.label);
      positives += s.label;
    }
    EXPECT_GT(positives, 40);
    EXPECT_LT(positives, 160);
  }
}

TEST(Generator, LabelNoiseFlipsSome) {
  auto cfg = small_cohort(8);
  cfg.n_subjects = 300;
  cfg.label_noise = 0.2;
  const auto cohort = generate_cohort(cfg);
  int flipped = 0;
  for (const auto& s : cohort.truth.subjects) {
    flipped += s.label_flipped;
    EXPECT_EQ(s.label != noiseless_label(cohort.truth, s), s.label_flipped);
  }
  EXPECT_GT(flipped, 30);
  EXPECT_LT(flipped, 90);
}

TEST(Generator, RecencyCohortLastScanPredictor) {
  auto cfg = small_cohort(9);
  cfg.n_subjects = 600;
  cfg.recency_signal = true;
  const auto cohort = generate_cohort(cfg);
  std::vector<double> score;
  std::vector<int> labels;
  for (const auto& s : cohort.truth.subjects) {
    score.push_back(s.latent_at(s.scan_days.back())(cohort.truth.malignant_source));
    labels.push_back(s.label);
  }
  EXPECT_GE(eval::auc(score, labels), 0.95);
}

TEST(Generator, SmoothedLatentIsWindowMean) {
  CohortGenerator gen(small_cohort(10));
  const auto s = gen.subject(2).truth;
  for (Day d : {Day{0}, Day{100}, Day{700}, Day{1824}}) {
    Vector sum = Vector::Zero(4);
    const Day lo = std::max<Day>(0, d - 364);
    for (Day k = lo; k <= d; ++k) sum += s.latent_at(k);
    EXPECT_LE((s.smoothed_latent_at(d) - sum / static_cast<double>(d - lo + 1)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ImageFeatures, DeterministicInLatentAndSeed) {
  Matrix readout(3, 2);
  readout << 1, 2, 3, 4, 5, 6;
  Vector z(2);
  z << 0.5, -1;
  const auto clean = make_image_features(z, readout, 0.0, 1);
  const Vector expect = readout * z;
  for (int i = 0; i < 3; ++i) EXPECT_EQ(clean[i], expect(i));
  EXPECT_EQ(make_image_features(z, readout, 0.0, 99), clean);
  EXPECT_EQ(make_image_features(z, readout, 0.7, 5), make_image_features(z, readout, 0.7, 5));
  EXPECT_NE(make_image_features(z, readout, 0.7, 5), make_image_features(z, readout, 0.7, 6));
}

TEST(ImageFeatures, LogisticProbeFindsLabelSignal) {
  auto cfg = small_cohort(11);
  cfg.n_subjects = 400;
  cfg.recency_signal = true;
  const auto cohort = generate_cohort(cfg);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& seq : cohort.skeletons) {
    const encoder::Token* last = nullptr;
    for (const auto& tok : seq.items) {
      if (tok.modality == encoder::Modality::image && !tok.padding) last = &tok;
    }
    x.push_back(last->payload);
    y.push_back(*seq.label);
  }
  const std::size_t half = x.size() / 2;
  const auto w = fit_probe({x.begin(), x.begin() + half}, {y.begin(), y.begin() + half});
  std::vector<double> score;
  for (std::size_t i = half; i < x.size(); ++i) {
    double z = w.back();
    for (std::size_t k = 0; k < x[i].size(); ++k) z += w[k] * x[i][k];
    score.push_back(z);
  }
  EXPECT_GT(eval::auc(score, std::vector<int>(y.begin() + half, y.end())), 0.6);
}

TEST(EndToEnd, CurvesAndIcaRecoverPlantedSources) {
  auto cfg = small_cohort(12);
  cfg.n_subjects = 300;
  const auto data = features::synthesize_features(cfg, 30, 1, 2);
  ica::FitOptions opt;
  opt.components = cfg.c_true;
  opt.seed = 3;
  const auto model = ica::fit_ica(data.raw.samples, opt);

  const auto& samples = data.raw.samples;
  std::map<std::string, const SubjectTruth*> by_id;
  for (const auto& s : data.truth.subjects) by_id[s.subject_id] = &s;
  std::vector<std::vector<double>> truth(4), got(4);
  for (Eigen::Index col = 0; col < samples.X.cols(); ++col) {
    const auto& meta = samples.meta[static_cast<std::size_t>(col)];
    const Vector z = by_id.at(meta.subject_id)->smoothed_latent_at(meta.day);
    const Vector e = model.project(samples.X.col(col));
    for (int k = 0; k < 4; ++k) {
      truth[k].push_back(z(k));
      got[k].push_back(e(k));
    }
  }
  EXPECT_GE(oracle::matched_abs_correlation(truth, got), 0.9);
  const auto projected = features::project_features(data.raw, model);
  EXPECT_EQ(projected.subjects.size(), 300u);
  EXPECT_EQ(projected.signature_dim, 4);
}

TEST(EndToEnd, ThreadCountDoesNotChangeFeatures) {
  const auto a = features::synthesize_features(small_cohort(13), 200, 4, 1);
  const auto b = features::synthesize_features(small_cohort(13), 200, 4, 3);
  EXPECT_EQ(a.raw.samples.X, b.raw.samples.X);
  ASSERT_EQ(a.raw.subjects.size(), b.raw.subjects.size());
  for (std::size_t i = 0; i < a.raw.subjects.size(); ++i) {
    ASSERT_EQ(a.raw.subjects[i].scans.size(), b.raw.subjects[i].scans.size());
    for (std::size_t j = 0; j < a.raw.subjects[i].scans.size(); ++j) {
      EXPECT_EQ(a.raw.subjects[i].scans[j].section, b.raw.subjects[i].scans[j].section);
      EXPECT_EQ(a.raw.subjects[i].scans[j].code_counts, b.raw.subjects[i].scans[j].code_counts);
    }
  }
}

TEST(GroundTruthIo, JsonRoundTrip) {
  const auto cohort = generate_cohort(small_cohort(14));
  const auto path = std::filesystem::temp_directory_path() / "lmsig_test_truth.json";
  save_ground_truth(path, cohort.truth);
  const auto back = load_ground_truth(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.mixing, cohort.truth.mixing);
  EXPECT_EQ(back.image_readout, cohort.truth.image_readout);
  EXPECT_EQ(back.rule, cohort.truth.rule);
  ASSERT_EQ(back.subjects.size(), cohort.truth.subjects.size());
  for (std::size_t i = 0; i < back.subjects.size(); ++i) {
    EXPECT_EQ(back.subjects[i].scan_days, cohort.truth.subjects[i].scan_days);
    EXPECT_EQ(back.subjects[i].label, cohort.truth.subjects[i].label);
    EXPECT_EQ(noiseless_label(back, back.subjects[i]), noiseless_label(cohort.truth, cohort.truth.subjects[i]));
  }
}

TEST(FeatureIo, ScanFileAndSampleMatrixRoundTrip) {
  const auto data = features::synthesize_features(small_cohort(15), 365, 2, 1);
  std::ostringstream out;
  features::write_scans(out, data.raw);
  std::istringstream in(out.str());
  const auto back = features::read_scans(in);
  ASSERT_EQ(back.size(), data.raw.subjects.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    ASSERT_EQ(back[i].scans.size(), data.raw.subjects[i].scans.size());
    for (std::size_t j = 0; j < back[i].scans.size(); ++j) {
      EXPECT_EQ(back[i].scans[j].day, data.raw.subjects[i].scans[j].day);
      EXPECT_EQ(back[i].scans[j].section, data.raw.subjects[i].scans[j].section);
      EXPECT_EQ(back[i].scans[j].image, data.raw.subjects[i].scans[j].image);
    }
  }
  const auto path = std::filesystem::temp_directory_path() / "lmsig_test_samples.bin";
  features::save_samples(path, data.raw.samples);
  EXPECT_EQ(features::load_samples(path).X, data.raw.samples.X);
  std::filesystem::remove(path);
}

#pragma once

// The six model shapes of the comparison table, cross-validated on a
// feature set, and the seeded suite that runs them on synthetic cohorts.
//
//   CS* : one cross-section (the most recent scan), T = 1
//   TD* : up to T most recent scans
//   *Image : image tokens only (CSImage is an MLP on the latest image)
//   *Code  : TF-IDF binned-code tokens + image tokens
//   *Sig   : signature-expression tokens + image tokens

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lmsig/encoder.hpp"
#include "lmsig/features.hpp"
#include "lmsig/metrics.hpp"
#include "lmsig/synth.hpp"
#include "lmsig/tfidf.hpp"
#include "lmsig/train.hpp"

namespace lmsig::ablation {

enum class Shape { cs_image, cs_code, cs_sig, td_image, td_code, td_sig };

struct ModelSpec {
  std::string name;
  Shape shape = Shape::td_sig;
  encoder::TemMode tem = encoder::TemMode::learned;

  bool cross_sectional() const { return shape == Shape::cs_image || shape == Shape::cs_code || shape == Shape::cs_sig; }
};

/// Accepts CSImage, CSCode, CSSig, TDImage, TDCode, TDSig and TDSig-noTEM.
ModelSpec parse_model(const std::string& name);
std::vector<ModelSpec> standard_models();

struct Architecture {
  int max_scans = 3;
  int model_dim = 320;
  int heads = 4;
  int head_dim = 64;
  int mlp_dim = 124;
  int blocks = 4;
  int mlp_hidden = 64;  // CSImage hidden width
  double tem_b_init = 1.0 / 365.0;
  double tem_c_init = 1.0;
  encoder::TimeDistance distance = encoder::TimeDistance::to_most_recent;
  encoder::Pooling pooling = encoder::Pooling::cls;
};

encoder::EncoderConfig encoder_config(const ModelSpec& spec, const Architecture& arch,
                                      const features::FeatureSet& data, std::uint64_t seed);

/// Token sequence of one subject for `spec`. `idf` is required for the code
/// shapes.
encoder::TokenSequence make_sequence(const features::SubjectFeatures& subject, const ModelSpec& spec,
                                     const Architecture& arch, const tfidf::IdfModel* idf);

/// Trains on every fold but `fold` and predicts that fold's subjects. With
/// `artifacts` set, the best checkpoint and the per-step loss trace are
/// written there as <model>_fold<k>.ckpt and <model>_fold<k>_loss.tsv.
std::vector<eval::Prediction> run_fold(const features::FeatureSet& data, std::span<const int> folds, int fold,
                                       const ModelSpec& spec, const Architecture& arch,
                                       const train::TrainConfig& config,
                                       const std::filesystem::path* artifacts = nullptr);

/// Out-of-fold predictions for every subject, in subject order. Folds run
/// on up to `threads` workers; the output does not depend on the count.
std::vector<eval::Prediction> cross_validate(const features::FeatureSet& data, const ModelSpec& spec,
                                             const Architecture& arch, const train::TrainConfig& config,
                                             unsigned threads = 1,
                                             const std::filesystem::path* artifacts = nullptr);

struct SuiteConfig {
  synth::GeneratorConfig cohort;
  std::int64_t stride_days = 365;
  ica::FitOptions ica;
  Architecture arch;
  train::TrainConfig train;
  std::vector<ModelSpec> models = standard_models();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int bootstrap_resamples = 1000;
  /// Permute labels across subjects after generation (null-signal control).
  bool shuffle_labels = false;
  std::optional<std::string> reclassify_model;
  unsigned threads = 1;
};

struct SeedRun {
  std::uint64_t seed = 0;
  eval::EvalReport report;
};

struct SuiteResult {
  std::vector<SeedRun> runs;
  /// Pooled out-of-fold AUC averaged over seeds, in model order.
  std::vector<std::pair<std::string, double>> mean_auc;

  double mean_auc_of(const std::string& model) const;
};

SuiteResult run_ablation_suite(const SuiteConfig& config);

/// Tab-separated: model, mean AUC over seeds, then one AUC column per seed.
void write_suite_table(std::ostream& out, const SuiteResult& result);

}  // namespace lmsig::ablation

#include "lmsig/ablation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>

#include "lmsig/checkpoint.hpp"
#include "lmsig/error.hpp"
#include "lmsig/parallel.hpp"

namespace lmsig::ablation {

ModelSpec parse_model(const std::string& name) {
  static const std::vector<std::pair<std::string, Shape>> shapes{
      {"CSImage", Shape::cs_image}, {"CSCode", Shape::cs_code}, {"CSSig", Shape::cs_sig},
      {"TDImage", Shape::td_image}, {"TDCode", Shape::td_code}, {"TDSig", Shape::td_sig}};
  for (const auto& [n, s] : shapes) {
    if (name == n) return {n, s, encoder::TemMode::learned};
  }
  if (name == "TDSig-noTEM") return {name, Shape::td_sig, encoder::TemMode::disabled};
  throw ConfigError("unknown model '" + name + "'");
}

std::vector<ModelSpec> standard_models() {
  std::vector<ModelSpec> out;
  for (const char* n : {"CSImage", "CSCode", "CSSig", "TDImage", "TDCode", "TDSig"}) out.push_back(parse_model(n));
  return out;
}

namespace {

bool uses_signatures(Shape s) { return s == Shape::cs_sig || s == Shape::td_sig; }
bool uses_codes(Shape s) { return s == Shape::cs_code || s == Shape::td_code; }

int scans_for(const ModelSpec& spec, const Architecture& arch) { return spec.cross_sectional() ? 1 : arch.max_scans; }

}  // namespace

encoder::EncoderConfig encoder_config(const ModelSpec& spec, const Architecture& arch,
                                      const features::FeatureSet& data, std::uint64_t seed) {
  encoder::EncoderConfig c;
  c.nonimaging_dim = uses_signatures(spec.shape) ? data.signature_dim : uses_codes(spec.shape) ? data.code_dim : 1;
  c.image_dim = std::max(data.image_dim, 1);
  c.max_scans = scans_for(spec, arch);
  c.model_dim = arch.model_dim;
  c.heads = arch.heads;
  c.head_dim = arch.head_dim;
  c.mlp_dim = arch.mlp_dim;
  c.blocks = arch.blocks;
  c.tem = spec.tem;
  c.distance = arch.distance;
  c.pooling = arch.pooling;
  c.tem_b_init = arch.tem_b_init;
  c.tem_c_init = arch.tem_c_init;
  c.seed = seed;
  return c;
}

encoder::TokenSequence make_sequence(const features::SubjectFeatures& subject, const ModelSpec& spec,
                                     const Architecture& arch, const tfidf::IdfModel* idf) {
  const int T = scans_for(spec, arch);
  if (uses_codes(spec.shape) && !idf) throw ConfigError("code models need a fitted IDF");
  std::vector<encoder::ScanObservation> obs;
  const std::size_t first = subject.scans.size() > static_cast<std::size_t>(T) ? subject.scans.size() - static_cast<std::size_t>(T) : 0;
  for (std::size_t i = first; i < subject.scans.size(); ++i) {
    const auto& scan = subject.scans[i];
    encoder::ScanObservation o;
    o.day = scan.day;
    if (uses_signatures(spec.shape)) {
      o.nonimaging = std::vector<double>(scan.expression.data(), scan.expression.data() + scan.expression.size());
    } else if (uses_codes(spec.shape)) {
      const auto v = tfidf::transform(*idf, scan.code_counts);
      o.nonimaging = std::vector<double>(v.data(), v.data() + v.size());
    }
    if (!scan.image.empty()) o.image = scan.image;
    obs.push_back(std::move(o));
  }
  return encoder::assemble_sequence(subject.subject_id, T, std::move(obs), subject.label);
}

namespace {

template <class Model>
std::vector<eval::Prediction> fit_and_predict(Model model, const std::vector<encoder::TokenSequence>& seqs,
                                              const std::vector<int>& labels, const std::vector<std::size_t>& tr,
                                              const std::vector<std::size_t>& va, const std::vector<std::size_t>& te,
                                              const train::TrainConfig& config, int fold,
                                              const std::filesystem::path* artifacts, const std::string& name) {
  auto gather = [&](const std::vector<std::size_t>& idx, std::vector<encoder::TokenSequence>& s, std::vector<int>& l) {
    for (auto i : idx) {
      s.push_back(seqs[i]);
      l.push_back(labels[i]);
    }
  };
  std::vector<encoder::TokenSequence> tr_s, va_s;
  std::vector<int> tr_l, va_l;
  gather(tr, tr_s, tr_l);
  gather(va, va_s, va_l);
  auto result = train::fit(std::move(model), {tr_s, tr_l}, {va_s, va_l}, config);
  if (artifacts) {
    const std::string stem = name + "_fold" + std::to_string(fold);
    save_checkpoint(*artifacts / (stem + ".ckpt"), result.best);
    std::ofstream trace(*artifacts / (stem + "_loss.tsv"));
    if (!trace) throw DataError("cannot write loss trace in " + artifacts->string());
    trace << "step\ttrain_loss\tval_loss\n" << std::setprecision(17);
    for (std::size_t s = 0; s < result.val_loss.size(); ++s) {
      trace << s << '\t' << result.train_loss[s] << '\t' << result.val_loss[s] << '\n';
    }
  }
  std::vector<eval::Prediction> out;
  for (auto i : te) out.push_back({seqs[i].subject_id, result.best.predict(seqs[i]), labels[i], fold});
  return out;
}

}  // namespace

std::vector<eval::Prediction> run_fold(const features::FeatureSet& data, std::span<const int> folds, int fold,
                                       const ModelSpec& spec, const Architecture& arch,
                                       const train::TrainConfig& config, const std::filesystem::path* artifacts) {
  if (folds.size() != data.subjects.size()) throw DataError("fold assignment does not match the subjects");
  std::vector<std::size_t> rest, test;
  for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == fold ? test : rest).push_back(i);
  if (test.empty()) throw DataError("fold " + std::to_string(fold) + " is empty");
  const std::uint64_t fold_seed = derive_seed(config.seed, static_cast<std::uint64_t>(fold));
  auto [tr, va] = train::split_validation(rest, config.validation_fraction, fold_seed);

  std::optional<tfidf::IdfModel> idf;
  if (uses_codes(spec.shape)) {
    std::vector<tfidf::Vector> docs;
    for (auto i : rest) {
      for (const auto& scan : data.subjects[i].scans) docs.push_back(scan.code_counts);
    }
    idf = tfidf::fit_idf(docs);
  }
  std::vector<encoder::TokenSequence> seqs;
  std::vector<int> labels;
  for (const auto& s : data.subjects) {
    seqs.push_back(make_sequence(s, spec, arch, idf ? &*idf : nullptr));
    labels.push_back(s.label);
  }

  train::TrainConfig cfg = config;
  cfg.seed = fold_seed;
  const std::uint64_t init_seed = derive_seed(fold_seed, 0x1417);
  if (spec.shape == Shape::cs_image) {
    if (data.image_dim < 1) throw DataError("CSImage needs image features");
    return fit_and_predict(encoder::MlpClassifier(data.image_dim, arch.mlp_hidden, init_seed), seqs, labels, tr, va,
                           test, cfg, fold, artifacts, spec.name);
  }
  return fit_and_predict(encoder::Encoder(encoder_config(spec, arch, data, init_seed)), seqs, labels, tr, va, test,
                         cfg, fold, artifacts, spec.name);
}

namespace {

std::vector<eval::Prediction> merge_folds(std::vector<std::vector<eval::Prediction>> parts,
                                          const features::FeatureSet& data) {
  std::vector<eval::Prediction> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  std::vector<eval::Prediction> ordered;
  ordered.reserve(all.size());
  // Subjects in their original order; ids are unique within a feature set.
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < all.size(); ++i) at[all[i].subject_id] = i;
  for (const auto& s : data.subjects) ordered.push_back(all[at.at(s.subject_id)]);
  return ordered;
}

}  // namespace

std::vector<eval::Prediction> cross_validate(const features::FeatureSet& data, const ModelSpec& spec,
                                             const Architecture& arch, const train::TrainConfig& config,
                                             unsigned threads, const std::filesystem::path* artifacts) {
  config.validate();
  const auto folds = train::assign_folds(data.subjects.size(), config.folds, config.seed);
  std::vector<std::vector<eval::Prediction>> parts(static_cast<std::size_t>(config.folds));
  parallel_for(parts.size(), threads, [&](std::size_t f) {
    parts[f] = run_fold(data, folds, static_cast<int>(f), spec, arch, config, artifacts);
  });
  return merge_folds(std::move(parts), data);
}

double SuiteResult::mean_auc_of(const std::string& model) const {
  for (const auto& [name, v] : mean_auc) {
    if (name == model) return v;
  }
  throw DataError("model '" + model + "' not in suite result");
}

SuiteResult run_ablation_suite(const SuiteConfig& config) {
  if (config.models.empty()) throw ConfigError("no models requested");
  if (config.seeds.empty()) throw ConfigError("no seeds requested");
  config.train.validate();
  SuiteResult result;
  for (const auto seed : config.seeds) {
    auto cohort = config.cohort;
    cohort.seed = seed;
    auto synthetic = features::synthesize_features(cohort, config.stride_days, derive_seed(seed, 1), config.threads);
    auto ica_opts = config.ica;
    ica_opts.seed = derive_seed(seed, 2);
    const auto model = ica::fit_ica(synthetic.raw.samples, ica_opts);
    synthetic.raw.samples = {};
    auto data = features::project_features(synthetic.raw, model);
    if (config.shuffle_labels) {
      std::vector<int> labels;
      for (const auto& s : data.subjects) labels.push_back(s.label);
      Rng rng(derive_seed(seed, 3));
      rng.shuffle(labels.begin(), labels.end());
      for (std::size_t i = 0; i < labels.size(); ++i) data.subjects[i].label = labels[i];
    }

    auto tc = config.train;
    tc.seed = derive_seed(seed, 4);
    const auto folds = train::assign_folds(data.subjects.size(), tc.folds, tc.seed);
    const std::size_t nf = static_cast<std::size_t>(tc.folds);
    std::vector<std::vector<eval::Prediction>> parts(config.models.size() * nf);
    parallel_for(parts.size(), config.threads, [&](std::size_t job) {
      parts[job] = run_fold(data, folds, static_cast<int>(job % nf), config.models[job / nf], config.arch, tc);
    });

    std::vector<std::pair<std::string, std::vector<eval::Prediction>>> preds;
    for (std::size_t m = 0; m < config.models.size(); ++m) {
      std::vector<std::vector<eval::Prediction>> mine(std::make_move_iterator(parts.begin() + static_cast<std::ptrdiff_t>(m * nf)),
                                                      std::make_move_iterator(parts.begin() + static_cast<std::ptrdiff_t>((m + 1) * nf)));
      preds.emplace_back(config.models[m].name, merge_folds(std::move(mine), data));
    }
    eval::ReportOptions ro;
    ro.resamples = config.bootstrap_resamples;
    ro.seed = derive_seed(seed, 5);
    ro.reclassify_model = config.reclassify_model;
    result.runs.push_back({seed, eval::build_report(std::move(preds), ro)});
  }
  for (std::size_t m = 0; m < config.models.size(); ++m) {
    double sum = 0.0;
    for (const auto& run : result.runs) sum += run.report.models[m].auc.point;
    result.mean_auc.emplace_back(config.models[m].name, sum / static_cast<double>(result.runs.size()));
  }
  return result;
}

void write_suite_table(std::ostream& out, const SuiteResult& result) {
  out << "model\tmean_auc";
  for (const auto& run : result.runs) out << "\tauc_seed" << run.seed;
  out << '\n' << std::setprecision(17);
  for (std::size_t m = 0; m < result.mean_auc.size(); ++m) {
    out << result.mean_auc[m].first << '\t' << result.mean_auc[m].second;
    for (const auto& run : result.runs) out << '\t' << run.report.models[m].auc.point;
    out << '\n';
  }
}

}  // namespace lmsig::ablation

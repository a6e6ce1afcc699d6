// lmsig: command-line driver for the longitudinal signature pipeline.
//
//   lmsig synth     --out DIR                      synthetic cohort
//   lmsig curves    --in SYNTH_DIR --out DIR       curves, ICA samples, scan cross-sections
//   lmsig ica       --in CURVES_DIR --out DIR      signature model and expressions
//   lmsig train     --in CURVES_DIR --ica ICA_DIR --labels FILE --out DIR
//   lmsig eval      --in TRAIN_DIR --out DIR
//   lmsig gradcheck --out DIR
//   lmsig ablate    --out DIR
//   lmsig pipeline  --out DIR                      all stages, cached
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 check failure.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "lmsig/ablation.hpp"
#include "lmsig/error.hpp"
#include "lmsig/event_io.hpp"
#include "lmsig/features.hpp"
#include "lmsig/gradcheck.hpp"
#include "lmsig/ica.hpp"
#include "lmsig/metrics.hpp"
#include "lmsig/parallel.hpp"
#include "lmsig/run_config.hpp"
#include "lmsig/sequence_io.hpp"
#include "lmsig/synth.hpp"

namespace fs = std::filesystem;
using namespace lmsig;

namespace {

constexpr int kExitCheckFailed = 3;

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string out;
  std::vector<std::string> overrides;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig() : RunConfig::load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg.resolved();
}

fs::path require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw DataError("missing input " + p.string() + " (" + hint + ")");
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

// Every stage directory gets the resolved config and a log line carrying
// its hash.
class Stage {
 public:
  Stage(std::string name, const fs::path& dir, const RunConfig& cfg) : name_(std::move(name)), dir_(dir) {
    fs::create_directories(dir_);
    cfg.save(dir_ / "config.resolved");
    log_.open(dir_ / "log.txt", std::ios::app);
    log("start " + name_ + " config_hash=" + cfg.hash_hex());
  }
  const fs::path& dir() const { return dir_; }
  void log(const std::string& msg) {
    log_ << msg << '\n';
    log_.flush();
    std::cerr << "[" << name_ << "] " << msg << '\n';
  }

 private:
  std::string name_;
  fs::path dir_;
  std::ofstream log_;
};

// --- synth -----------------------------------------------------------------

void cmd_synth(const RunConfig& cfg, const fs::path& out) {
  Stage st("synth", out, cfg);
  synth::CohortGenerator gen(cfg.generator());
  auto events = open_out(out / "events.tsv");
  auto seqs = open_out(out / "sequences.tsv");
  auto labels = open_out(out / "labels.tsv");
  auto truth = gen.globals();
  for (int i = 0; i < gen.config().n_subjects; ++i) {
    auto rec = gen.subject(i);
    io::write_events(events, rec.streams);
    encoder::write_sequence(seqs, rec.skeleton);
    encoder::write_labels(labels, {rec.skeleton});
    truth.subjects.push_back(std::move(rec.truth));
  }
  synth::save_ground_truth(out / "ground_truth.json", truth);
  st.log("wrote " + std::to_string(gen.config().n_subjects) + " subjects, " +
         std::to_string(gen.vocabulary().size()) + " variables");
}

// --- curves ----------------------------------------------------------------

void cmd_curves(const RunConfig& cfg, const fs::path& in, const fs::path& out,
                const std::vector<std::string>& export_subjects) {
  const auto events_path = require(in / "events.tsv", "run `lmsig synth` or supply an events file");
  const auto seq_path = require(in / "sequences.tsv", "scan skeletons are needed for scan days and images");
  Stage st("curves", out, cfg);
  const auto table = io::read_events(events_path);
  auto skeletons = encoder::read_sequences(seq_path);
  if (fs::exists(in / "labels.tsv")) {
    std::ifstream lf(in / "labels.tsv");
    const auto labels = encoder::read_labels(lf);
    for (auto& s : skeletons) {
      if (const auto it = labels.find(s.subject_id); it != labels.end()) s.label = it->second;
    }
  }

  std::vector<curves::EventStream> all;
  for (const auto& [id, streams] : table) all.insert(all.end(), streams.begin(), streams.end());
  const auto vocab = curves::Vocabulary::from_streams(all, static_cast<std::size_t>(cfg.min_events()));
  all.clear();
  if (vocab.size() < 2) throw DataError("fewer than two variables survive curves.min_events");

  features::FeatureBuilder builder(vocab, cfg.stride_days(), cfg.get_seed("curves.sample_seed"));
  const std::vector<curves::EventStream> none;
  for (const auto& skel : skeletons) {
    const auto it = table.find(skel.subject_id);
    const auto& streams = it == table.end() ? none : it->second;
    curves::Day last = 0;
    for (const auto& s : streams) {
      if (!s.events.empty()) last = std::max(last, s.events.back().day);
    }
    for (const auto d : features::scan_days(skel)) last = std::max(last, d);
    const auto set = curves::build_curveset(streams, vocab, {0, last});
    builder.add(set, streams, skel);
    if (std::find(export_subjects.begin(), export_subjects.end(), skel.subject_id) != export_subjects.end()) {
      io::write_curve_matrix(out / ("curves_" + skel.subject_id + ".bin"), io::to_matrix(set));
    }
  }
  const auto raw = std::move(builder).finish();
  features::save_samples(out / "samples.bin", raw.samples);
  auto scans = open_out(out / "scans.tsv");
  features::write_scans(scans, raw);
  auto vf = open_out(out / "vocabulary.tsv");
  for (const auto& v : vocab.variables()) vf << v.id << '\t' << curves::to_string(v.kind) << '\n';
  st.log("subjects=" + std::to_string(raw.subjects.size()) + " variables=" + std::to_string(vocab.size()) +
         " samples=" + std::to_string(raw.samples.X.cols()));
}

// --- ica -------------------------------------------------------------------

void cmd_ica(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  const auto samples_path = require(in / "samples.bin", "run `lmsig curves` first");
  const auto scans_path = require(in / "scans.tsv", "run `lmsig curves` first");
  Stage st("ica", out, cfg);
  const auto samples = features::load_samples(samples_path);
  const auto model = ica::fit_ica(samples.X, cfg.ica_options());
  ica::save_model(out / "model.bin", model);
  std::ostringstream conv;
  conv << "iterations=" << model.convergence.iterations << " final_delta=" << model.convergence.final_delta
       << " converged=" << (model.convergence.converged ? "yes" : "no");
  st.log(conv.str());
  if (!model.convergence.converged) st.log("warning: FastICA did not reach ica.tol within ica.max_iter");

  std::ifstream sf(scans_path);
  auto expr = open_out(out / "expressions.tsv");
  for (const auto& subject : features::read_scans(sf)) {
    ica::ExpressionSeries series{subject.subject_id, {}};
    for (const auto& scan : subject.scans) {
      if (scan.section.size() != model.variables()) throw DataError("vocabulary mismatch in " + scans_path.string());
      series.samples.emplace_back(scan.day, model.project(scan.section));
    }
    ica::write_expressions(expr, series);
  }
}

// --- train -----------------------------------------------------------------

features::FeatureSet load_feature_set(const fs::path& curves_dir, const fs::path& ica_dir, const fs::path& labels) {
  const auto scans_path = require(curves_dir / "scans.tsv", "run `lmsig curves` first");
  const auto model_path = require(ica_dir / "model.bin", "run `lmsig ica` first");
  require(labels, "labels are written by `lmsig synth`");
  std::ifstream sf(scans_path), lf(labels);
  features::RawFeatures raw;
  raw.subjects = features::read_scans(sf);
  const auto label_map = encoder::read_labels(lf);
  for (auto& s : raw.subjects) {
    const auto it = label_map.find(s.subject_id);
    if (it == label_map.end()) throw DataError("no label for subject '" + s.subject_id + "' in " + labels.string());
    s.label = it->second;
  }
  return features::project_features(raw, ica::load_model(model_path));
}

void cmd_train(const RunConfig& cfg, const fs::path& curves_dir, const fs::path& ica_dir, const fs::path& labels,
               const fs::path& out, unsigned threads) {
  const auto data = load_feature_set(curves_dir, ica_dir, labels);
  Stage st("train", out, cfg);
  const auto arch = cfg.architecture();
  const auto tc = cfg.train_config();
  for (const auto& spec : cfg.models()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto preds = ablation::cross_validate(data, spec, arch, tc, threads, &out);
    auto pf = open_out(out / ("predictions_" + spec.name + ".tsv"));
    eval::write_predictions(pf, preds);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream msg;
    msg << spec.name << ": " << preds.size() << " out-of-fold predictions in " << std::fixed << std::setprecision(1)
        << secs << " s";
    st.log(msg.str());
  }
}

// --- eval ------------------------------------------------------------------

void cmd_eval(const RunConfig& cfg, const fs::path& in, const fs::path& out) {
  std::vector<std::pair<std::string, std::vector<eval::Prediction>>> models;
  for (const auto& spec : cfg.models()) {
    const auto p = require(in / ("predictions_" + spec.name + ".tsv"), "run `lmsig train` with the same model.names");
    std::ifstream pf(p);
    models.emplace_back(spec.name, eval::read_predictions(pf));
  }
  Stage st("eval", out, cfg);
  eval::ReportOptions ro;
  ro.resamples = static_cast<int>(cfg.get_int("eval.bootstrap"));
  ro.seed = cfg.get_seed("eval.seed");
  if (const auto& r = cfg.get("eval.reclassify_model"); !r.empty()) ro.reclassify_model = r;
  const auto report = eval::build_report(std::move(models), ro);
  auto txt = open_out(out / "report.txt");
  eval::write_report_text(txt, report);
  auto tsv = open_out(out / "metrics.tsv");
  eval::write_report_table(tsv, report);
  eval::write_report_text(std::cout, report);
}

// --- gradcheck -------------------------------------------------------------

void cmd_gradcheck(const RunConfig& cfg, const fs::path& out) {
  Stage st("gradcheck", out, cfg);
  const auto arch = cfg.architecture();
  const auto gc = cfg.gradcheck();
  encoder::EncoderConfig ec;
  ec.nonimaging_dim = static_cast<int>(cfg.get_int("ica.components"));
  ec.image_dim = static_cast<int>(cfg.get_int("synth.image_dim"));
  ec.max_scans = arch.max_scans;
  ec.model_dim = arch.model_dim;
  ec.heads = arch.heads;
  ec.head_dim = arch.head_dim;
  ec.mlp_dim = arch.mlp_dim;
  ec.blocks = arch.blocks;
  ec.distance = arch.distance;
  ec.pooling = arch.pooling;
  ec.tem_b_init = arch.tem_b_init;
  ec.tem_c_init = arch.tem_c_init;
  const auto seed = cfg.get_seed("seed");
  ec.seed = derive_seed(seed, 0x6C);
  encoder::Encoder model(ec);
  const auto seq = random_sequence(ec, derive_seed(seed, 0x6D));
  const auto t0 = std::chrono::steady_clock::now();
  const auto report =
      check_gradients(model, seq, 1, gc.samples_per_tensor, gc.step, derive_seed(seed, 0x6E), {"tem_b_raw", "tem_c_raw"});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  auto f = open_out(out / "gradcheck.tsv");
  f << "tensor\trow\tcol\tanalytic\tnumeric\trel_error\n" << std::setprecision(17);
  for (const auto& e : report.entries) {
    f << e.tensor << '\t' << e.row << '\t' << e.col << '\t' << e.analytic << '\t' << e.numeric << '\t' << e.rel_error
      << '\n';
  }
  std::ostringstream msg;
  msg << "checked " << report.entries.size() << " entries in " << std::fixed << std::setprecision(1) << secs
      << " s; max relative error " << std::scientific << std::setprecision(3) << report.max_rel_error << " at "
      << report.worst.tensor << "(" << report.worst.row << "," << report.worst.col << ")";
  st.log(msg.str());
  std::cout << msg.str() << '\n';
  if (!(report.max_rel_error < gc.tolerance)) throw CheckFailure("gradient check failed");
}

// --- ablate ----------------------------------------------------------------

void cmd_ablate(const RunConfig& cfg, const fs::path& out, unsigned threads) {
  Stage st("ablate", out, cfg);
  auto suite = cfg.suite();
  suite.threads = threads;
  const auto result = ablation::run_ablation_suite(suite);
  auto tsv = open_out(out / "suite.tsv");
  ablation::write_suite_table(tsv, result);
  for (const auto& run : result.runs) {
    auto txt = open_out(out / ("report_seed" + std::to_string(run.seed) + ".txt"));
    eval::write_report_text(txt, run.report);
    auto t = open_out(out / ("metrics_seed" + std::to_string(run.seed) + ".tsv"));
    eval::write_report_table(t, run.report);
  }
  ablation::write_suite_table(std::cout, result);
}

// --- pipeline --------------------------------------------------------------

// A stage is skipped when its directory holds a stamp equal to the hash of
// the resolved config and the upstream stamp.
std::string stage_stamp(const RunConfig& cfg, const std::string& stage, const std::string& upstream) {
  std::ostringstream ss;
  ss << std::hex << fnv1a64(stage + ":" + cfg.hash_hex() + ":" + upstream);
  return ss.str();
}

bool stamp_matches(const fs::path& dir, const std::string& stamp) {
  std::ifstream in(dir / "stamp");
  std::string have;
  return in && std::getline(in, have) && have == stamp;
}

void write_stamp(const fs::path& dir, const std::string& stamp) { open_out(dir / "stamp") << stamp << '\n'; }

void cmd_pipeline(const RunConfig& cfg, const fs::path& out, unsigned threads) {
  fs::create_directories(out);
  cfg.save(out / "config.resolved");
  std::string upstream;
  auto run = [&](const std::string& name, auto&& body) {
    const fs::path dir = out / name;
    const auto stamp = stage_stamp(cfg, name, upstream);
    if (stamp_matches(dir, stamp)) {
      std::cerr << "[pipeline] " << name << " up to date, skipped\n";
    } else {
      fs::remove(dir / "stamp");
      body(dir);
      write_stamp(dir, stamp);
    }
    upstream = stamp;
  };
  run("synth", [&](const fs::path& d) { cmd_synth(cfg, d); });
  run("curves", [&](const fs::path& d) { cmd_curves(cfg, out / "synth", d, {}); });
  run("ica", [&](const fs::path& d) { cmd_ica(cfg, out / "curves", d); });
  run("train", [&](const fs::path& d) {
    cmd_train(cfg, out / "curves", out / "ica", out / "synth" / "labels.tsv", d, threads);
  });
  run("eval", [&](const fs::path& d) { cmd_eval(cfg, out / "train", d); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal clinical signatures with time-distance attention"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "base seed (overrides the config's seed)");
    sub->add_option("--threads", common.threads, "worker threads, 0 = all cores; 1 is the reference schedule");
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--set", common.overrides, "override a config key: --set key=value");
  };

  std::string in, ica_dir, labels;
  std::vector<std::string> export_subjects;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort with ground truth");
  add_common(synth_cmd);
  auto* curves_cmd = app.add_subcommand("curves", "build longitudinal curves and sample them for ICA");
  add_common(curves_cmd);
  curves_cmd->add_option("--in", in, "directory with events.tsv and sequences.tsv")->required();
  curves_cmd->add_option("--export-subject", export_subjects, "also write this subject's full curve matrix");
  auto* ica_cmd = app.add_subcommand("ica", "fit signatures and project scan cross-sections");
  add_common(ica_cmd);
  ica_cmd->add_option("--in", in, "curves stage directory")->required();
  auto* train_cmd = app.add_subcommand("train", "cross-validated training of the configured models");
  add_common(train_cmd);
  train_cmd->add_option("--in", in, "curves stage directory")->required();
  train_cmd->add_option("--ica", ica_dir, "ica stage directory")->required();
  train_cmd->add_option("--labels", labels, "subject_id<TAB>label file")->required();
  auto* eval_cmd = app.add_subcommand("eval", "bootstrap AUC, Wilcoxon and reclassification report");
  add_common(eval_cmd);
  eval_cmd->add_option("--in", in, "train stage directory")->required();
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of encoder gradients");
  add_common(grad_cmd);
  auto* ablate_cmd = app.add_subcommand("ablate", "model-shape comparison on seeded synthetic cohorts");
  add_common(ablate_cmd);
  auto* pipe_cmd = app.add_subcommand("pipeline", "synth, curves, ica, train and eval with stage caching");
  add_common(pipe_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = load_config(common);
    const fs::path out = common.out;
    const unsigned threads = resolve_threads(common.threads);
    if (synth_cmd->parsed()) cmd_synth(cfg, out);
    else if (curves_cmd->parsed()) cmd_curves(cfg, in, out, export_subjects);
    else if (ica_cmd->parsed()) cmd_ica(cfg, in, out);
    else if (train_cmd->parsed()) cmd_train(cfg, in, ica_dir, labels, out, threads);
    else if (eval_cmd->parsed()) cmd_eval(cfg, in, out);
    else if (grad_cmd->parsed()) cmd_gradcheck(cfg, out);
    else if (ablate_cmd->parsed()) cmd_ablate(cfg, out, threads);
    else if (pipe_cmd->parsed()) cmd_pipeline(cfg, out, threads);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kExitCheckFailed;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

// Acceptance run: one PASS/FAIL line per criterion, followed by the numbers
// behind it. Exits non-zero if any criterion fails.
//
//   acceptance [--only NAME]... [--seeds N]
//
// NAME is one of: gradients, attention, tem, padding, ica, curves, metrics,
// ablation, determinism.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "lmsig/ablation.hpp"
#include "lmsig/curves.hpp"
#include "lmsig/encoder.hpp"
#include "lmsig/gradcheck.hpp"
#include "lmsig/ica.hpp"
#include "lmsig/metrics.hpp"
#include "lmsig/train.hpp"
#include "oracles.hpp"

using namespace lmsig;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  violated: " << what << '\n';
    }
  }
};

// ---------------------------------------------------------------------------

Verdict gradients() {
  Verdict v;
  encoder::EncoderConfig cfg;  // reference dimensions, T = 3
  cfg.seed = 101;
  encoder::Encoder model(cfg);
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  std::string where;
  for (int padded : {0, 1}) {
    const auto seq = random_sequence(cfg, 202 + padded, padded);
    const auto r = check_gradients(model, seq, padded == 0 ? 1 : 0, 20, 1e-5, 303 + padded, {"tem_b_raw", "tem_c_raw"});
    checked += r.entries.size();
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = r.worst.tensor;
    }
  }
  const double secs = seconds_since(t0);
  v.detail << "  " << checked << " entries (every TEM b,c; 20 sampled per other tensor) over "
           << parameter_count(model.params()) << " parameters, 7 tokens\n"
           << "  max relative error " << worst << " at " << where << ", " << secs << " s\n";
  v.require(worst < 1e-4, "max relative error < 1e-4");
  v.require(secs < 120.0, "runtime < 2 min");
  return v;
}

Verdict attention() {
  Verdict v;
  Eigen::MatrixXd Q(2, 2), K(2, 2), V(2, 2);
  Q << 0.9, -0.3, 0.4, 1.1;
  K << 0.7, 0.2, -0.5, 0.8;
  V << 1.5, -2.0, 0.25, 3.0;
  const double b = 0.001, c = 0.0;
  const double age[2] = {500.0, 0.0};  // days {0, 500}
  Eigen::MatrixXd scale(2, 2);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) scale(i, j) = encoder::tem(age[i], b, c);
  }
  const auto got = encoder::attend_head(Q, K, V, scale, {false, false}, 2.0);
  double err = 0.0;
  for (int i = 0; i < 2; ++i) {
    double z[2];
    for (int j = 0; j < 2; ++j) {
      const double qk = Q(i, 0) * K(j, 0) + Q(i, 1) * K(j, 1);
      z[j] = std::max(qk, 0.0) / (1.0 + std::exp(b * age[i] - c)) / std::sqrt(2.0);
    }
    const double s = std::exp(z[0]) + std::exp(z[1]);
    for (int col = 0; col < 2; ++col) {
      const double want = (std::exp(z[0]) * V(0, col) + std::exp(z[1]) * V(1, col)) / s;
      err = std::max(err, std::fabs(got.output(i, col) - want));
    }
  }
  v.detail << "  max |output - scalar evaluation| = " << err << '\n';
  v.require(err <= 1e-10, "2-token attention within 1e-10");
  return v;
}

Verdict tem_properties() {
  Verdict v;
  bool monotone = true;
  // b * r stays below the exponent clamp, where TEM is flat by construction
  for (double b : {1e-4, 1e-2, 0.1}) {
    for (double c : {0.0, 1.0, 5.0}) {
      for (double r = 0.0; r < 3000.0; r += 1.0) {
        const double a = encoder::tem(r, b, c), n = encoder::tem(r + 1.0, b, c);
        if (!(n < a) && a > 1e-300) monotone = false;
      }
    }
  }
  v.require(monotone, "TEM strictly decreasing in r for b > 0");

  double zero_err = 0.0;
  for (double c : {0.0, 0.25, 1.0, 3.0, 10.0}) {
    zero_err = std::max(zero_err, std::fabs(encoder::tem(0.0, 0.7, c) - 1.0 / (1.0 + std::exp(-c))));
  }
  v.require(zero_err < 1e-15, "TEM(0) = 1/(1+exp(-c))");

  encoder::EncoderConfig cfg;
  cfg.model_dim = 16;
  cfg.head_dim = 4;
  cfg.mlp_dim = 8;
  cfg.blocks = 2;
  cfg.nonimaging_dim = 5;
  cfg.image_dim = 6;
  encoder::Encoder model(cfg);
  const auto seq = random_sequence(cfg, 5);
  const auto before = model.trace(seq);
  model.params().blocks[0].tem_b_raw(0, 0) += 2.0;
  model.params().blocks[0].tem_c_raw(0, 0) += 1.0;
  const auto after = model.trace(seq);
  bool independent = before.tem_scale[0][0] != after.tem_scale[0][0];
  for (int h = 1; h < cfg.heads; ++h) independent = independent && before.tem_scale[0][h] == after.tem_scale[0][h];
  v.require(independent, "changing head 0's (b, c) leaves heads 1-3 unchanged");

  // 1000 steps with a deliberately large learning rate to push the raw
  // parameters far negative.
  std::vector<encoder::TokenSequence> batch;
  std::vector<int> labels;
  for (int i = 0; i < 16; ++i) {
    batch.push_back(random_sequence(cfg, 900 + i, i % 3));
    labels.push_back(i % 2);
  }
  auto velocity = zeros_like(model.params());
  double min_b = 1e300, min_c = 1e300;
  bool finite = true;
  for (int step = 0; step < 1000; ++step) {
    const auto g = model.backward_batch(batch, labels);
    train::sgd_momentum_step(model.params(), velocity, g, 16.0, 1.0, 0.9);
    for (int blk = 0; blk < cfg.blocks; ++blk) {
      for (int h = 0; h < cfg.heads; ++h) {
        min_b = std::min(min_b, model.tem_b(blk, h));
        min_c = std::min(min_c, model.tem_c(blk, h));
        finite = finite && std::isfinite(model.tem_b(blk, h)) && std::isfinite(model.tem_c(blk, h));
      }
    }
  }
  v.detail << "  min b = " << min_b << ", min c = " << min_c << " over 1000 SGD steps\n";
  v.require(min_b >= 0.0 && min_c >= 0.0 && finite, "b, c >= 0 after 1000 SGD steps");
  return v;
}

Verdict padding() {
  Verdict v;
  encoder::EncoderConfig cfg;
  cfg.model_dim = 32;
  cfg.head_dim = 8;
  cfg.mlp_dim = 16;
  cfg.blocks = 2;
  cfg.seed = 17;
  const encoder::Encoder model(cfg);
  Rng rng(4);
  int cases = 0;
  for (int padded : {1, 2}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto a = random_sequence(cfg, 40 + trial, padded);
      auto b = a;
      for (auto& tok : b.items) {
        if (!tok.padding) continue;
        tok.payload.resize(static_cast<std::size_t>(tok.modality == encoder::Modality::image ? cfg.image_dim
                                                                                             : cfg.nonimaging_dim));
        for (auto& x : tok.payload) x = rng.normal(0.0, 50.0);
      }
      v.require(model.predict(a) == model.predict(b), "identical probability");
      const auto ga = model.backward(a, trial % 2), gb = model.backward(b, trial % 2);
      const auto ta = ga.tensors(), tb = gb.tensors();
      for (std::size_t i = 0; i < ta.size(); ++i) v.require(*ta[i].value == *tb[i].value, "identical " + ta[i].name);
      ++cases;
    }
  }
  v.detail << "  " << cases << " sequence pairs with 1 or 2 padded scans, bit-exact comparison\n";
  return v;
}

Verdict ica_recovery() {
  Verdict v;
  const int p = 200, c = 20, m = 5000;
  const auto t0 = Clock::now();
  double worst_mean = 1.0, worst_roundtrip = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 7919);
    Eigen::MatrixXd S(p, c), E(c, m);
    for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = rng.normal();
    for (Eigen::Index r = 0; r < c; ++r) {
      for (Eigen::Index k = 0; k < m; ++k) {
        E(r, k) = r % 2 ? rng.laplace(1.0 / std::sqrt(2.0)) : rng.uniform(-std::sqrt(3.0), std::sqrt(3.0));
      }
    }
    const Eigen::MatrixXd X = S * E;
    ica::FitOptions opt;
    opt.components = c;
    opt.seed = seed;
    const auto model = ica::fit_ica(X, opt);
    const Eigen::MatrixXd rec = model.projector * (X.colwise() - model.mean);
    std::vector<std::vector<double>> truth(c), got(c);
    for (int r = 0; r < c; ++r) {
      truth[r].assign(m, 0.0);
      got[r].assign(m, 0.0);
      for (int k = 0; k < m; ++k) {
        truth[r][k] = E(r, k);
        got[r][k] = rec(r, k);
      }
    }
    const double mean_corr = oracle::matched_abs_correlation(truth, got);
    worst_mean = std::min(worst_mean, mean_corr);
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd e(c);
      for (auto& x : e) x = rng.normal();
      const Eigen::VectorXd x = model.mean + model.signatures * e;
      worst_roundtrip = std::max(worst_roundtrip, (model.project(x) - e).cwiseAbs().maxCoeff());
    }
    v.detail << "  seed " << seed << ": mean matched |corr| " << mean_corr << ", " << model.convergence.iterations
             << " iterations\n";
  }
  const double secs = seconds_since(t0);
  v.detail << "  worst round-trip error " << worst_roundtrip << ", " << secs << " s\n";
  v.require(worst_mean >= 0.95, "mean matched |corr| >= 0.95 for every seed");
  v.require(worst_roundtrip <= 1e-8, "projection round trip <= 1e-8");
  v.require(secs < 300.0, "runtime < 5 min");
  return v;
}

Verdict curve_oracles() {
  Verdict v;
  Rng rng(77);
  double interp_err = 0.0, knot_err = 0.0, mean_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = rng.uniform_int(2, 15);
    std::vector<curves::Event> events;
    std::vector<double> xs, ys;
    curves::Day d = rng.uniform_int(0, 30);
    for (std::int64_t k = 0; k < n; ++k) {
      const double y = trial % 2 ? rng.normal(0.0, 3.0) : (ys.empty() ? 0.0 : ys.back()) + rng.uniform(0.0, 2.0);
      events.push_back({d, y});
      xs.push_back(static_cast<double>(d));
      ys.push_back(y);
      d += rng.uniform_int(1, 60);
    }
    const auto stream = curves::make_stream("s", "v", curves::VariableKind::continuous_lab, events);
    const curves::DayRange grid{0, static_cast<curves::Day>(xs.back()) + 10};
    const auto curve = curves::interpolate_continuous(stream, grid);
    const oracle::FritschCarlson fc(xs, ys);
    for (curves::Day t = grid.first; t <= grid.last; ++t) {
      interp_err = std::max(interp_err, std::fabs(curve.at(t) - fc(static_cast<double>(t))));
    }
    for (std::size_t k = 0; k < xs.size(); ++k) {
      knot_err = std::max(knot_err, std::fabs(curve.at(static_cast<curves::Day>(xs[k])) - ys[k]));
    }

    const auto len = static_cast<std::size_t>(rng.uniform_int(1, 4001));
    std::vector<double> raw(len);
    for (auto& x : raw) x = rng.uniform() < 0.8 ? 0.0 : rng.normal(0.0, 2.0);
    const auto smooth = curves::rolling_mean({"v", 0, raw, false});
    const auto want = oracle::trailing_mean(raw, curves::kMemoryWindowDays);
    for (std::size_t k = 0; k < len; ++k) mean_err = std::max(mean_err, std::fabs(smooth.values[k] - want[k]));
  }
  v.detail << "  1000 instances: interpolation " << interp_err << ", knots " << knot_err << ", rolling mean "
           << mean_err << '\n';
  v.require(interp_err <= 1e-12, "interpolation within 1e-12");
  v.require(knot_err <= 1e-12, "knots exact");
  v.require(mean_err <= 1e-12, "rolling mean within 1e-12");
  return v;
}

Verdict metric_oracles() {
  Verdict v;
  Rng rng(88);
  int auc_mismatch = 0, wilcoxon_checked = 0, stop_mismatch = 0;
  double wilcoxon_err = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 201));
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i < 2 ? static_cast<int>(i) : rng.uniform() < 0.5;
      p[i] = trial % 2 ? std::round(rng.uniform() * 8) / 8 : rng.uniform();
    }
    auc_mismatch += eval::auc(p, y) != oracle::pairwise_auc(p, y);
  }
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(5, 13));
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = std::round(rng.normal(0.2, 1.0) * 4) / 4;
      b[i] = std::round(rng.normal() * 4) / 4;
    }
    std::size_t nz = 0;
    for (std::size_t i = 0; i < n; ++i) nz += a[i] != b[i];
    if (nz < 5) continue;
    wilcoxon_err = std::max(wilcoxon_err, std::fabs(eval::wilcoxon_signed_rank(a, b) - oracle::wilcoxon_enumerate(a, b)));
    ++wilcoxon_checked;
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const int window = static_cast<int>(rng.uniform_int(1, 40));
    const double delta = rng.uniform(0.01, 0.4);
    std::vector<double> trace(static_cast<std::size_t>(rng.uniform_int(1, 300)));
    double level = rng.uniform();
    const double drift = rng.uniform(-0.01, 0.01);
    for (auto& x : trace) x = (level += drift) + rng.normal(0.0, 0.1);
    stop_mismatch += eval::early_stop_step(trace, {window, delta}) != oracle::early_stop_scan(trace, window, delta);
  }
  std::vector<double> crafted(200, 0.5);
  crafted.resize(400, 0.9);
  const auto crafted_stop = eval::early_stop_step(crafted, {100, 0.2});
  v.require(crafted_stop == oracle::early_stop_scan(crafted, 100, 0.2) && crafted_stop == 250u,
            "crafted 0.5 -> 0.9 trace stops at the oracle's step");

  bool conserved = true;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 400));
    std::vector<double> m(n), b(n);
    std::vector<int> y(n);
    int per_tier[2][3] = {};
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = rng.uniform();
      b[i] = rng.uniform() < 0.1 ? (rng.uniform() < 0.5 ? 0.05 : 0.65) : rng.uniform();
      y[i] = rng.uniform() < 0.4;
      per_tier[y[i]][b[i] < 0.05 ? 0 : b[i] < 0.65 ? 1 : 2]++;
    }
    const auto r = eval::reclassify(m, b, y);
    int total = 0;
    for (int t = 0; t < 3; ++t) {
      int rc = 0, rn = 0;
      for (int u = 0; u < 3; ++u) {
        rc += r.cases[t][u];
        rn += r.controls[t][u];
      }
      conserved = conserved && rc == per_tier[1][t] && rn == per_tier[0][t];
      total += rc + rn;
    }
    conserved = conserved && total == static_cast<int>(n);
  }
  const bool tiers = eval::risk_tier(std::nextafter(0.05, 0.0)) == eval::RiskTier::low &&
                     eval::risk_tier(0.05) == eval::RiskTier::medium &&
                     eval::risk_tier(std::nextafter(0.65, 0.0)) == eval::RiskTier::medium &&
                     eval::risk_tier(0.65) == eval::RiskTier::high;

  v.detail << "  AUC mismatches " << auc_mismatch << "/500; Wilcoxon max |dp| " << wilcoxon_err << " over "
           << wilcoxon_checked << " cases; early-stop mismatches " << stop_mismatch << "/1000\n";
  v.require(auc_mismatch == 0, "AUC equals the pairwise oracle exactly");
  v.require(wilcoxon_checked > 100 && wilcoxon_err < 1e-12, "Wilcoxon equals exact enumeration");
  v.require(stop_mismatch == 0, "early-stop step equals the trace scan");
  v.require(conserved, "reclassification row sums and totals conserved");
  v.require(tiers, "tier boundaries at exactly 0.05 and 0.65");
  return v;
}

// Reduced architecture for the desk-scale model comparison.
ablation::SuiteConfig ablation_suite(bool recency, int seeds) {
  ablation::SuiteConfig c;
  c.cohort.n_subjects = 600;
  c.cohort.p_variables = 60;
  c.cohort.c_true = 6;
  c.cohort.recency_signal = recency;
  c.cohort.image_label_weight = recency ? 1.0 : 0.0;
  c.ica.components = 6;
  c.arch.model_dim = 32;
  c.arch.heads = 4;
  c.arch.head_dim = 8;
  c.arch.mlp_dim = 32;
  c.arch.blocks = 2;
  c.arch.mlp_hidden = 32;
  c.train.learning_rate = 0.01;
  c.train.max_epochs = 30;
  c.train.folds = 5;
  c.bootstrap_resamples = 200;
  c.seeds.clear();
  for (int s = 1; s <= seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  c.threads = 0;
  return c;
}

void print_suite(Verdict& v, const char* title, const ablation::SuiteResult& r) {
  v.detail << "  " << title << ":";
  for (const auto& [name, auc] : r.mean_auc) v.detail << ' ' << name << '=' << auc;
  v.detail << '\n';
}

Verdict directional_ablation(int seeds) {
  Verdict v;
  const auto t0 = Clock::now();

  auto recency = ablation_suite(true, seeds);
  recency.models = {ablation::parse_model("TDSig"), ablation::parse_model("TDSig-noTEM")};
  const auto r1 = ablation::run_ablation_suite(recency);
  print_suite(v, "recency cohort", r1);

  auto signature = ablation_suite(false, seeds);
  signature.models = ablation::standard_models();
  const auto r2 = ablation::run_ablation_suite(signature);
  print_suite(v, "signature cohort", r2);

  const double secs = seconds_since(t0);
  v.detail << "  " << seeds << " seeds, n = 600, 5-fold CV, " << secs << " s\n";

  const double tem_gain = r1.mean_auc_of("TDSig") - r1.mean_auc_of("TDSig-noTEM");
  v.require(tem_gain >= 0.05, "TDSig - TDSig-noTEM >= 0.05 on the recency cohort (got " + std::to_string(tem_gain) + ")");
  const double sig = std::min(r2.mean_auc_of("TDSig"), r2.mean_auc_of("CSSig"));
  const double img = std::max(r2.mean_auc_of("TDImage"), r2.mean_auc_of("CSImage"));
  v.require(sig > img, "Sig variants beat Image variants");
  v.require(r2.mean_auc_of("TDSig") > r2.mean_auc_of("CSSig"), "TDSig beats CSSig");
  v.require(r2.mean_auc_of("TDCode") > r2.mean_auc_of("CSCode"), "TDCode beats CSCode");
  v.require(r2.mean_auc_of("CSSig") > img, "CSSig beats the Image models");
  v.require(secs < 1800.0, "runtime < 30 min");
  return v;
}

Verdict determinism() {
  Verdict v;
#ifdef LMSIG_CLI
  const fs::path work = fs::temp_directory_path() / "lmsig_acceptance_determinism";
  fs::remove_all(work);
  std::string tables[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work / (run ? "b" : "a");
    const std::string cmd = std::string("\"") + LMSIG_CLI + "\" pipeline --config \"" + LMSIG_SMOKE_CONFIG +
                            "\" --threads 1 --out \"" + out.string() + "\" > /dev/null 2>&1";
    const int code = std::system(cmd.c_str());
    v.require(code == 0, "pipeline run exits 0");
    std::ifstream in(out / "eval" / "metrics.tsv");
    std::stringstream ss;
    ss << in.rdbuf();
    tables[run] = ss.str();
  }
  v.require(!tables[0].empty(), "metrics table written");
  v.require(tables[0] == tables[1], "identical metric tables");
  v.detail << "  two pipeline runs, --threads 1, " << tables[0].size() << "-byte metric tables\n";
  fs::remove_all(work);
#else
  v.require(false, "built without the lmsig tool");
#endif
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only;
  int seeds = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only.insert(argv[++i]);
    else if (a == "--seeds" && i + 1 < argc) seeds = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--only NAME]... [--seeds N]\n";
      return 1;
    }
  }

  const std::vector<std::tuple<std::string, std::string, std::function<Verdict()>>> criteria{
      {"gradients", "Gradient fidelity", gradients},
      {"attention", "Two-token attention oracle", attention},
      {"tem", "TEM properties", tem_properties},
      {"padding", "Padding invariance", padding},
      {"ica", "ICA recovery", ica_recovery},
      {"curves", "Curve oracles", curve_oracles},
      {"metrics", "Metric oracles", metric_oracles},
      {"ablation", "Directional ablation", [seeds] { return directional_ablation(seeds); }},
      {"determinism", "Determinism", determinism},
  };

  int failed = 0;
  for (const auto& [key, title, run] : criteria) {
    if (!only.empty() && !only.count(key)) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "  exception: " << e.what() << '\n';
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << title << '\n' << v.detail.str() << std::flush;
    failed += !v.pass;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << failed << " failing\n";
  return failed ? 1 : 0;
}

#include <benchmark/benchmark.h>

#include "lmsig/curves.hpp"
#include "lmsig/encoder.hpp"
#include "lmsig/gradcheck.hpp"
#include "lmsig/ica.hpp"
#include "lmsig/rng.hpp"

using namespace lmsig;

namespace {

encoder::EncoderConfig bench_config(int blocks) {
  encoder::EncoderConfig cfg;
  cfg.blocks = blocks;
  cfg.seed = 1;
  return cfg;
}

void BM_EncoderForward(benchmark::State& state) {
  const auto cfg = bench_config(static_cast<int>(state.range(0)));
  const encoder::Encoder model(cfg);
  const auto seq = random_sequence(cfg, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(seq));
}
BENCHMARK(BM_EncoderForward)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_EncoderBackward(benchmark::State& state) {
  const auto cfg = bench_config(static_cast<int>(state.range(0)));
  const encoder::Encoder model(cfg);
  const auto seq = random_sequence(cfg, 2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.backward(seq, 1));
}
BENCHMARK(BM_EncoderBackward)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_AttendHead(benchmark::State& state) {
  const int T = 7, d = 64;
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Random(T, d), K = Eigen::MatrixXd::Random(T, d), V = Eigen::MatrixXd::Random(T, d);
  const Eigen::MatrixXd scale = Eigen::MatrixXd::Constant(T, T, 0.5);
  const std::vector<bool> padding(T, false);
  for (auto _ : state) benchmark::DoNotOptimize(encoder::attend_head(Q, K, V, scale, padding, d));
}
BENCHMARK(BM_AttendHead);

void BM_FastIca(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0)), c = 20, m = 5000;
  Rng rng(3);
  Eigen::MatrixXd S(p, c), E(c, m);
  for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = (i % 2) ? rng.laplace(1.0) : rng.uniform(-1.7, 1.7);
  const Eigen::MatrixXd X = S * E;
  ica::FitOptions opt;
  opt.components = c;
  opt.seed = 4;
  for (auto _ : state) benchmark::DoNotOptimize(ica::fit_ica(X, opt));
}
BENCHMARK(BM_FastIca)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_RollingMean(benchmark::State& state) {
  curves::LongitudinalCurve curve;
  curve.values.resize(static_cast<std::size_t>(state.range(0)));
  Rng rng(5);
  for (auto& v : curve.values) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(curves::rolling_mean(curve));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RollingMean)->Arg(3650)->Arg(36500);

void BM_MonotoneCubic(benchmark::State& state) {
  std::vector<double> x, y;
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    x.push_back(40.0 * i);
    y.push_back(rng.normal());
  }
  const curves::MonotoneCubic f(x, y);
  for (auto _ : state) {
    double s = 0.0;
    for (int t = 0; t < 2000; ++t) s += f(t);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_MonotoneCubic);

}  // namespace

BENCHMARK_MAIN();

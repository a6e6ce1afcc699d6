#pragma once

// Latent clinical signatures: a linear mixture x(day) = S * e(day) fitted by
// FastICA on curve cross-sections, and projection of new curves onto the
// fitted signatures.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lmsig/curves.hpp"
#include "lmsig/rng.hpp"

namespace lmsig::ica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SampleMeta {
  std::string subject_id;
  curves::Day day = 0;
};

/// Curve cross-sections as columns: X is variables x samples.
struct SampleMatrix {
  Matrix X;
  std::vector<SampleMeta> meta;
};

/// Days {first + r, first + r + stride, ...} inside `grid`.
std::vector<curves::Day> strided_days(curves::DayRange grid, std::int64_t stride, std::int64_t offset);

/// Incremental form of sample_curves(), so a cohort can be sampled one
/// subject at a time without holding every CurveSet in memory.
class CurveSampler {
 public:
  CurveSampler(std::int64_t stride_days, std::uint64_t seed);

  /// Draws this subject's offset and appends its columns.
  void add(const curves::CurveSet& set);
  std::size_t columns() const { return meta_.size(); }
  SampleMatrix finish() &&;

 private:
  std::int64_t stride_;
  Rng rng_;
  std::size_t rows_ = 0;
  bool have_rows_ = false;
  std::vector<double> data_;  // column-major
  std::vector<SampleMeta> meta_;
};

/// Samples each subject's curves every `stride_days` days starting from an
/// offset drawn uniformly in [0, stride_days), concatenating all subjects.
SampleMatrix sample_curves(std::span<const curves::CurveSet> cohort, std::int64_t stride_days,
                           std::uint64_t seed);

struct FitOptions {
  int components = 20;
  std::uint64_t seed = 0;
  double tol = 1e-4;
  int max_iter = 200;
  /// Scale each variable to unit variance before whitening.
  bool zscore = false;
};

struct ConvergenceInfo {
  int iterations = 0;
  double final_delta = 0.0;
  bool converged = false;
};

/// Fitted mixture. `signatures` (p x c) has unit-norm columns whose largest
/// magnitude entry is positive; `projector` (c x p) is its pseudo-inverse
/// composed with the whitening transform, so projector * signatures = I.
struct SignatureModel {
  Matrix signatures;
  Matrix projector;
  Vector mean;
  Matrix whitening;  // c x p, maps centered curves to whitened coordinates
  ConvergenceInfo convergence;

  Eigen::Index variables() const { return signatures.rows(); }
  Eigen::Index components() const { return signatures.cols(); }

  /// e = projector * (x - mean)
  Vector project(const Eigen::Ref<const Vector>& x) const;
};

/// FastICA with a logcosh contrast (g = tanh), symmetric decorrelation and
/// eigendecomposition whitening. Throws DataError("component count exceeds
/// rank") when the centered data cannot support `components` sources.
SignatureModel fit_ica(const Matrix& X, const FitOptions& options);
inline SignatureModel fit_ica(const SampleMatrix& samples, const FitOptions& options) {
  return fit_ica(samples.X, options);
}

struct ExpressionSeries {
  std::string subject_id;
  std::vector<std::pair<curves::Day, Vector>> samples;
};

ExpressionSeries project_expressions(const SignatureModel& model, const curves::CurveSet& curves,
                                     std::span<const curves::Day> days);

/// Binary model file: 8-byte magic "LMSIGICA", uint32 version, uint32 flags,
/// then int64 p, int64 c, int64 iterations, float64 final_delta, followed by
/// mean (p), whitening (c x p), signatures (p x c), projector (c x p), all
/// row-major float64.
void save_model(const std::filesystem::path& path, const SignatureModel& model);
SignatureModel load_model(const std::filesystem::path& path);

/// subject_id<TAB>day<TAB>e_1,...,e_c per sample.
void write_expressions(std::ostream& out, const ExpressionSeries& series);
std::vector<ExpressionSeries> read_expressions(std::istream& in);

}  // namespace lmsig::ica

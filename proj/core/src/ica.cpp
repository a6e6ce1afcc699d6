#include "lmsig/ica.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "lmsig/error.hpp"

namespace lmsig::ica {

std::vector<curves::Day> strided_days(curves::DayRange grid, std::int64_t stride,
                                      std::int64_t offset) {
  std::vector<curves::Day> days;
  for (curves::Day d = grid.first + offset; d <= grid.last; d += stride) days.push_back(d);
  return days;
}

CurveSampler::CurveSampler(std::int64_t stride_days, std::uint64_t seed)
    : stride_(stride_days), rng_(seed) {
  if (stride_days < 1) throw DataError("stride_days must be at least 1");
}

void CurveSampler::add(const curves::CurveSet& set) {
  if (!have_rows_) {
    rows_ = set.variable_count();
    have_rows_ = true;
  } else if (set.variable_count() != rows_) {
    throw DataError("subject '" + set.subject_id + "' has a different vocabulary size");
  }
  const auto offset = rng_.uniform_int(0, stride_);
  for (const auto d : strided_days(set.grid, stride_, offset)) {
    const auto x = set.cross_section(d);
    data_.insert(data_.end(), x.begin(), x.end());
    meta_.push_back({set.subject_id, d});
  }
}

SampleMatrix CurveSampler::finish() && {
  if (!have_rows_) throw DataError("empty cohort");
  SampleMatrix out;
  out.X = Eigen::Map<const Matrix>(data_.data(), static_cast<Eigen::Index>(rows_),
                                   static_cast<Eigen::Index>(meta_.size()));
  out.meta = std::move(meta_);
  return out;
}

SampleMatrix sample_curves(std::span<const curves::CurveSet> cohort, std::int64_t stride_days,
                           std::uint64_t seed) {
  if (cohort.empty()) throw DataError("empty cohort");
  CurveSampler sampler(stride_days, seed);
  for (const auto& set : cohort) sampler.add(set);
  return std::move(sampler).finish();
}

namespace {

/// W <- (W W^T)^{-1/2} W
Matrix symmetric_decorrelation(const Matrix& W) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(W * W.transpose());
  const Vector inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * W;
}

}  // namespace

SignatureModel fit_ica(const Matrix& X, const FitOptions& options) {
  const Eigen::Index p = X.rows();
  const Eigen::Index m = X.cols();
  const Eigen::Index c = options.components;
  if (p < 2) throw DataError("need at least two variables");
  if (c < 1 || c > std::min(p, m)) {
    throw DataError("component count must lie in [1, min(variables, samples)]");
  }
  if (!X.allFinite()) throw DataError("sample matrix has non-finite entries");

  SignatureModel model;
  model.mean = X.rowwise().mean();
  Matrix centered = X.colwise() - model.mean;

  Vector scale = Vector::Ones(p);
  if (options.zscore) {
    const Vector sd = (centered.rowwise().squaredNorm() / static_cast<double>(m)).cwiseSqrt();
    for (Eigen::Index i = 0; i < p; ++i) scale(i) = sd(i) > 0.0 ? sd(i) : 1.0;
    centered = scale.cwiseInverse().asDiagonal() * centered;
  }

  const Matrix cov = centered * centered.transpose() / static_cast<double>(m);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& evals = eig.eigenvalues();  // ascending
  const double top = evals(p - 1);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < p; ++i) rank += evals(i) > top * 1e-10 ? 1 : 0;
  if (top <= 0.0 || c > rank) throw DataError("component count exceeds rank");

  // Leading c eigenpairs, largest first.
  Matrix basis(p, c);
  Vector lambda(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    basis.col(k) = eig.eigenvectors().col(p - 1 - k);
    lambda(k) = evals(p - 1 - k);
  }
  const Matrix K = lambda.cwiseSqrt().cwiseInverse().asDiagonal() * basis.transpose();
  const Matrix Z = K * centered;

  Rng rng(options.seed);
  Matrix W(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) W(i, j) = rng.normal();
  }
  W = symmetric_decorrelation(W);

  const double inv_m = 1.0 / static_cast<double>(m);
  ConvergenceInfo info;
  for (int it = 1; it <= options.max_iter; ++it) {
    const Matrix G = (W * Z).array().tanh().matrix();
    const Vector gprime = (1.0 - G.array().square()).rowwise().mean();
    Matrix next = G * Z.transpose() * inv_m - gprime.asDiagonal() * W;
    next = symmetric_decorrelation(next);
    const double delta =
        ((next * W.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    W = std::move(next);
    info.iterations = it;
    info.final_delta = delta;
    if (delta < options.tol) {
      info.converged = true;
      break;
    }
  }
  model.convergence = info;

  model.whitening = K * scale.cwiseInverse().asDiagonal();
  // Mixing = pinv(W * whitening) = diag(scale) * basis * sqrt(lambda) * W^T.
  model.signatures =
      scale.asDiagonal() * basis * lambda.cwiseSqrt().asDiagonal() * W.transpose();
  model.projector = W * model.whitening;

  for (Eigen::Index k = 0; k < c; ++k) {
    const double norm = model.signatures.col(k).norm();
    Eigen::Index arg = 0;
    model.signatures.col(k).cwiseAbs().maxCoeff(&arg);
    const double sign = model.signatures(arg, k) < 0.0 ? -1.0 : 1.0;
    model.signatures.col(k) *= sign / norm;
    model.projector.row(k) *= sign * norm;
  }

  const double err =
      (model.projector * model.signatures - Matrix::Identity(c, c)).cwiseAbs().maxCoeff();
  if (!(err <= 1e-8)) {
    throw DataError("projector is not a left inverse of the signatures (error " +
                    std::to_string(err) + ")");
  }
  return model;
}

Vector SignatureModel::project(const Eigen::Ref<const Vector>& x) const {
  return projector * (x - mean);
}

ExpressionSeries project_expressions(const SignatureModel& model, const curves::CurveSet& curves,
                                     std::span<const curves::Day> days) {
  if (static_cast<Eigen::Index>(curves.variable_count()) != model.variables()) {
    throw DataError("vocabulary mismatch: curves have " +
                    std::to_string(curves.variable_count()) + " variables, model expects " +
                    std::to_string(model.variables()));
  }
  ExpressionSeries series{curves.subject_id, {}};
  series.samples.reserve(days.size());
  for (const auto d : days) {
    const auto x = curves.cross_section(d);
    series.samples.emplace_back(d, model.project(Eigen::Map<const Vector>(
                                       x.data(), static_cast<Eigen::Index>(x.size()))));
  }
  return series;
}

namespace {
constexpr char kMagic[8] = {'L', 'M', 'S', 'I', 'G', 'I', 'C', 'A'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_model(const std::filesystem::path& path, const SignatureModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  detail::write_pod(out, kVersion);
  detail::write_pod(out, std::uint32_t{model.convergence.converged ? 1u : 0u});
  detail::write_pod(out, static_cast<std::int64_t>(model.variables()));
  detail::write_pod(out, static_cast<std::int64_t>(model.components()));
  detail::write_pod(out, static_cast<std::int64_t>(model.convergence.iterations));
  detail::write_pod(out, model.convergence.final_delta);
  detail::write_row_major(out, model.mean.transpose());
  detail::write_row_major(out, model.whitening);
  detail::write_row_major(out, model.signatures);
  detail::write_row_major(out, model.projector);
  if (!out) throw DataError("failed writing " + path.string());
}

SignatureModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open signature model " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + " is not a signature model file");
  }
  const auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kVersion) throw DataError("unsupported signature model version");
  SignatureModel model;
  model.convergence.converged = detail::read_pod<std::uint32_t>(in, "flags") & 1u;
  const auto p = detail::read_pod<std::int64_t>(in, "p");
  const auto c = detail::read_pod<std::int64_t>(in, "c");
  if (p < 1 || c < 1 || c > p) throw DataError("bad signature model dimensions");
  model.convergence.iterations = static_cast<int>(detail::read_pod<std::int64_t>(in, "iterations"));
  model.convergence.final_delta = detail::read_pod<double>(in, "delta");
  Matrix mean(1, p);
  detail::read_row_major(in, mean, "mean");
  model.mean = mean.transpose();
  model.whitening.resize(c, p);
  detail::read_row_major(in, model.whitening, "whitening");
  model.signatures.resize(p, c);
  detail::read_row_major(in, model.signatures, "signatures");
  model.projector.resize(c, p);
  detail::read_row_major(in, model.projector, "projector");
  return model;
}

void write_expressions(std::ostream& out, const ExpressionSeries& series) {
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& [day, e] : series.samples) {
    line.str({});
    line << series.subject_id << '\t' << day << '\t';
    for (Eigen::Index k = 0; k < e.size(); ++k) line << (k ? "," : "") << e(k);
    line << '\n';
    out << line.str();
  }
}

std::vector<ExpressionSeries> read_expressions(std::istream& in) {
  std::vector<ExpressionSeries> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError("expression line " + std::to_string(line_no) + ": expected 3 fields");
    }
    const std::string subject = line.substr(0, t1);
    const curves::Day day = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    std::vector<double> values;
    std::stringstream ss(line.substr(t2 + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(std::stod(tok));
    if (out.empty() || out.back().subject_id != subject) out.push_back({subject, {}});
    out.back().samples.emplace_back(
        day, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return out;
}

}  // namespace lmsig::ica

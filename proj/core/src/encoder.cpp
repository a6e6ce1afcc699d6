#include "lmsig/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lmsig/error.hpp"
#include "lmsig/rng.hpp"

namespace lmsig::encoder {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::signature:
      return "signature";
    case Modality::image:
      return "image";
    case Modality::cls:
      return "cls";
  }
  return "?";
}

Modality parse_modality(std::string_view text) {
  if (text == "signature") return Modality::signature;
  if (text == "image") return Modality::image;
  if (text == "cls") return Modality::cls;
  throw DataError("unknown modality '" + std::string(text) + "'");
}

TokenSequence assemble_sequence(std::string subject_id, int max_scans,
                                std::vector<ScanObservation> scans, std::optional<int> label) {
  if (max_scans < 1) throw DataError("max_scans must be positive");
  std::stable_sort(scans.begin(), scans.end(),
                   [](const ScanObservation& a, const ScanObservation& b) { return a.day < b.day; });
  if (scans.size() > static_cast<std::size_t>(max_scans)) {
    scans.erase(scans.begin(), scans.end() - max_scans);
  }
  const Day last = scans.empty() ? 0 : scans.back().day;

  TokenSequence seq{std::move(subject_id), {}, label};
  seq.items.reserve(static_cast<std::size_t>(2 * max_scans + 1));
  seq.items.push_back({{}, Modality::cls, last, false});

  auto fill_block = [&](Modality modality, auto member) {
    int used = 0;
    for (const auto& scan : scans) {
      const auto& payload = scan.*member;
      if (!payload) continue;
      seq.items.push_back({*payload, modality, scan.day, false});
      ++used;
    }
    for (; used < max_scans; ++used) seq.items.push_back({{}, modality, last, true});
  };
  fill_block(Modality::signature, &ScanObservation::nonimaging);
  fill_block(Modality::image, &ScanObservation::image);
  return seq;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (y <= 0.0) throw DataError("softplus output must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double tem(double r, double b, double c) {
  const double z = std::clamp(b * r - c, -500.0, 500.0);
  return 1.0 / (1.0 + std::exp(z));
}

double bce_with_logit(double logit, int label) {
  // softplus(z) - y z == -[y log p + (1 - y) log(1 - p)] for p = sigmoid(z)
  return softplus(logit) - static_cast<double>(label) * logit;
}

Matrix sinusoidal_positions(int length, int dim) {
  Matrix pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

Matrix build_relative_times(const TokenSequence& seq, TimeDistance distance) {
  const auto n = static_cast<Eigen::Index>(seq.items.size());
  std::vector<bool> timed(seq.items.size());
  Day last = std::numeric_limits<Day>::min();
  for (std::size_t i = 0; i < seq.items.size(); ++i) {
    const auto& t = seq.items[i];
    timed[i] = !t.padding && t.modality != Modality::cls;
    if (timed[i]) last = std::max(last, t.day);
  }

  Matrix R = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!timed[static_cast<std::size_t>(i)]) continue;
    const Day ti = seq.items[static_cast<std::size_t>(i)].day;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (distance == TimeDistance::to_most_recent) {
        R(i, j) = static_cast<double>(std::abs(last - ti));
      } else if (timed[static_cast<std::size_t>(j)]) {
        R(i, j) = static_cast<double>(std::abs(ti - seq.items[static_cast<std::size_t>(j)].day));
      }
    }
  }
  return R;
}

HeadAttention attend_head(const Matrix& Q, const Matrix& K, const Matrix& V, const Matrix& tem_scale,
                          const std::vector<bool>& key_padding, double scale_dim) {
  const Eigen::Index n = Q.rows();
  const Eigen::Index keys = K.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(scale_dim);

  HeadAttention out;
  out.scores = Q * K.transpose();
  out.weights.resize(n, keys);
  for (Eigen::Index i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < keys; ++j) {
      if (key_padding[static_cast<std::size_t>(j)]) continue;
      const double z = std::max(out.scores(i, j), 0.0) * tem_scale(i, j) * inv_sqrt_d;
      if (std::isnan(z)) throw DataError("NaN attention logit");
      out.weights(i, j) = z;
      top = std::max(top, z);
    }
    if (top == -std::numeric_limits<double>::infinity()) {
      throw DataError("every attention key is padded");
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < keys; ++j) {
      if (key_padding[static_cast<std::size_t>(j)]) {
        out.weights(i, j) = 0.0;  // exp(-inf)
        continue;
      }
      out.weights(i, j) = std::exp(out.weights(i, j) - top);
      total += out.weights(i, j);
    }
    out.weights.row(i) /= total;
  }
  out.output = out.weights * V;
  return out;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  Vector rstd;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache& cache) {
  const Eigen::Index n = x.rows();
  const auto d = static_cast<double>(x.cols());
  cache.xhat.resize(n, x.cols());
  cache.rstd.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mu).square().sum() / d;
    cache.rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.xhat.row(r) = (x.row(r).array() - mu) * cache.rstd(r);
  }
  Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& cache,
                           Matrix& dgain, Matrix& dbias) {
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / d;
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.rstd(r) *
                (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u / std::numbers::sqrt2)); }

double gelu_grad(double u) {
  const double cdf = 0.5 * (1.0 + std::erf(u / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + u * pdf;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, sd);
  }
  return m;
}

Eigen::Map<const Eigen::RowVectorXd> as_row(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace

std::vector<NamedTensor> EncoderParams::tensors() {
  std::vector<NamedTensor> t{{"nonimaging_proj", &nonimaging_proj},
                             {"nonimaging_bias", &nonimaging_bias},
                             {"image_proj", &image_proj},
                             {"image_bias", &image_bias},
                             {"segment", &segment}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& p = blocks[b];
    const std::string pre = "block" + std::to_string(b) + ".";
    for (auto [name, m] : std::initializer_list<std::pair<const char*, Matrix*>>{
             {"ln1_gain", &p.ln1_gain}, {"ln1_bias", &p.ln1_bias},
             {"wq", &p.wq}, {"wk", &p.wk}, {"wv", &p.wv},
             {"wo", &p.wo}, {"wo_bias", &p.wo_bias},
             {"ln2_gain", &p.ln2_gain}, {"ln2_bias", &p.ln2_bias},
             {"mlp_in", &p.mlp_in}, {"mlp_in_bias", &p.mlp_in_bias},
             {"mlp_out", &p.mlp_out}, {"mlp_out_bias", &p.mlp_out_bias},
             {"tem_b_raw", &p.tem_b_raw}, {"tem_c_raw", &p.tem_c_raw}}) {
      t.push_back({pre + name, m});
    }
  }
  t.push_back({"final_gain", &final_gain});
  t.push_back({"final_bias", &final_bias});
  t.push_back({"head_weight", &head_weight});
  t.push_back({"head_bias", &head_bias});
  return t;
}

std::vector<ConstNamedTensor> EncoderParams::tensors() const {
  std::vector<ConstNamedTensor> out;
  for (auto& t : const_cast<EncoderParams*>(this)->tensors()) out.push_back({t.name, t.value});
  return out;
}

Encoder::Encoder(EncoderConfig config) : config_(config) {
  const auto& c = config_;
  if (c.nonimaging_dim < 1 || c.image_dim < 1 || c.max_scans < 1 || c.model_dim < 2 ||
      c.heads < 1 || c.head_dim < 1 || c.mlp_dim < 1 || c.blocks < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
  Rng rng(c.seed);
  const int D = c.model_dim;
  const int A = c.attention_width();
  auto& p = params_;
  p.nonimaging_proj = random_matrix(rng, c.nonimaging_dim, D, 1.0 / std::sqrt(c.nonimaging_dim));
  p.nonimaging_bias = Matrix::Zero(1, D);
  p.image_proj = random_matrix(rng, c.image_dim, D, 1.0 / std::sqrt(c.image_dim));
  p.image_bias = Matrix::Zero(1, D);
  p.segment = random_matrix(rng, 3, D, 0.1);
  const double b_raw = inverse_softplus(c.tem_b_init);
  const double c_raw = inverse_softplus(c.tem_c_init);
  for (int b = 0; b < c.blocks; ++b) {
    BlockParams bp;
    bp.ln1_gain = Matrix::Ones(1, D);
    bp.ln1_bias = Matrix::Zero(1, D);
    bp.wq = random_matrix(rng, D, A, 1.0 / std::sqrt(D));
    bp.wk = random_matrix(rng, D, A, 1.0 / std::sqrt(D));
    bp.wv = random_matrix(rng, D, A, 1.0 / std::sqrt(D));
    bp.wo = random_matrix(rng, A, D, 1.0 / std::sqrt(A));
    bp.wo_bias = Matrix::Zero(1, D);
    bp.ln2_gain = Matrix::Ones(1, D);
    bp.ln2_bias = Matrix::Zero(1, D);
    bp.mlp_in = random_matrix(rng, D, c.mlp_dim, 1.0 / std::sqrt(D));
    bp.mlp_in_bias = Matrix::Zero(1, c.mlp_dim);
    bp.mlp_out = random_matrix(rng, c.mlp_dim, D, 1.0 / std::sqrt(c.mlp_dim));
    bp.mlp_out_bias = Matrix::Zero(1, D);
    bp.tem_b_raw = Matrix::Constant(1, c.heads, b_raw);
    bp.tem_c_raw = Matrix::Constant(1, c.heads, c_raw);
    p.blocks.push_back(std::move(bp));
  }
  p.final_gain = Matrix::Ones(1, D);
  p.final_bias = Matrix::Zero(1, D);
  p.head_weight = random_matrix(rng, D, 1, 1.0 / std::sqrt(D));
  p.head_bias = Matrix::Zero(1, 1);
  positional_ = sinusoidal_positions(c.sequence_length(), D);
}

Encoder::Encoder(EncoderConfig config, EncoderParams params) : Encoder(config) {
  auto mine = params_.tensors();
  const auto theirs = params.tensors();
  if (mine.size() != theirs.size()) throw DataError("parameter set does not match configuration");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].value->rows() != theirs[i].value->rows() ||
        mine[i].value->cols() != theirs[i].value->cols()) {
      throw DataError("parameter '" + mine[i].name + "' has the wrong shape");
    }
  }
  params_ = std::move(params);
}

double Encoder::tem_b(int block, int head) const {
  return softplus(params_.blocks.at(static_cast<std::size_t>(block)).tem_b_raw(0, head));
}

double Encoder::tem_c(int block, int head) const {
  return softplus(params_.blocks.at(static_cast<std::size_t>(block)).tem_c_raw(0, head));
}

Matrix Encoder::tem_matrix(const Matrix& relative_times, int block, int head) const {
  if (config_.tem == TemMode::disabled) {
    return Matrix::Ones(relative_times.rows(), relative_times.cols());
  }
  const double b = tem_b(block, head);
  const double c = tem_c(block, head);
  return relative_times.unaryExpr([&](double r) { return tem(r, b, c); });
}

void Encoder::validate(const TokenSequence& seq) const {
  const int T = config_.max_scans;
  if (static_cast<int>(seq.items.size()) != 2 * T + 1) {
    throw DataError("sequence '" + seq.subject_id + "' has " + std::to_string(seq.items.size()) +
                    " tokens, expected " + std::to_string(2 * T + 1));
  }
  for (int i = 0; i <= 2 * T; ++i) {
    const auto& tok = seq.items[static_cast<std::size_t>(i)];
    const Modality expected = i == 0 ? Modality::cls : (i <= T ? Modality::signature : Modality::image);
    if (tok.modality != expected) {
      throw DataError("sequence '" + seq.subject_id + "': token " + std::to_string(i) + " should be " +
                      std::string(to_string(expected)));
    }
    if (tok.padding || tok.modality == Modality::cls) continue;
    const auto want = static_cast<std::size_t>(tok.modality == Modality::signature ? config_.nonimaging_dim
                                                                                   : config_.image_dim);
    if (tok.payload.size() != want) {
      throw DataError("dimension mismatch: sequence '" + seq.subject_id + "' token " + std::to_string(i) +
                      " has payload length " + std::to_string(tok.payload.size()) + ", expected " +
                      std::to_string(want));
    }
    for (double v : tok.payload) {
      if (!std::isfinite(v)) throw DataError("non-finite payload in sequence '" + seq.subject_id + "'");
    }
  }
  if (seq.items[0].padding) throw DataError("cls token cannot be padding");
}

struct Encoder::Cache {
  std::vector<bool> padding;
  Matrix R;
  struct Block {
    LayerNormCache ln1;
    Matrix a, Q, K, V;
    std::vector<Matrix> tem_scale;
    std::vector<HeadAttention> heads;
    Matrix O;
    LayerNormCache ln2;
    Matrix m, u, g;
  };
  std::vector<Block> blocks;
  LayerNormCache final_ln;
  std::vector<Eigen::Index> pooled_rows;
  Eigen::RowVectorXd pooled;
  double logit = 0.0;
};

double Encoder::forward(const TokenSequence& seq, Cache* cache, AttentionTrace* trace) const {
  validate(seq);
  const auto& c = config_;
  const auto n = static_cast<Eigen::Index>(seq.items.size());
  const int dh = c.head_dim;

  std::vector<bool> padding(seq.items.size());
  for (std::size_t i = 0; i < seq.items.size(); ++i) padding[i] = seq.items[i].padding;
  const Matrix R = build_relative_times(seq, c.distance);
  if (trace) trace->relative_times = R;

  Matrix x(n, c.model_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tok = seq.items[static_cast<std::size_t>(i)];
    x.row(i) = positional_.row(i) + params_.segment.row(static_cast<int>(tok.modality));
    if (tok.padding || tok.modality == Modality::cls) continue;
    if (tok.modality == Modality::signature) {
      x.row(i) += as_row(tok.payload) * params_.nonimaging_proj + params_.nonimaging_bias;
    } else {
      x.row(i) += as_row(tok.payload) * params_.image_proj + params_.image_bias;
    }
  }

  Cache local;
  Cache& k = cache ? *cache : local;
  k.padding = padding;
  k.R = R;
  k.blocks.resize(static_cast<std::size_t>(c.blocks));

  for (int b = 0; b < c.blocks; ++b) {
    const auto& p = params_.blocks[static_cast<std::size_t>(b)];
    auto& bc = k.blocks[static_cast<std::size_t>(b)];
    bc.a = layer_norm(x, p.ln1_gain, p.ln1_bias, bc.ln1);
    bc.Q = bc.a * p.wq;
    bc.K = bc.a * p.wk;
    bc.V = bc.a * p.wv;
    bc.O.resize(n, c.attention_width());
    bc.tem_scale.resize(static_cast<std::size_t>(c.heads));
    bc.heads.resize(static_cast<std::size_t>(c.heads));
    if (trace) {
      trace->tem_scale.emplace_back();
      trace->weights.emplace_back();
    }
    for (int h = 0; h < c.heads; ++h) {
      auto& scale = bc.tem_scale[static_cast<std::size_t>(h)];
      scale = tem_matrix(R, b, h);
      auto& head = bc.heads[static_cast<std::size_t>(h)];
      head = attend_head(bc.Q.middleCols(h * dh, dh), bc.K.middleCols(h * dh, dh),
                         bc.V.middleCols(h * dh, dh), scale, padding, dh);
      bc.O.middleCols(h * dh, dh) = head.output;
      if (trace) {
        trace->tem_scale.back().push_back(scale);
        trace->weights.back().push_back(head.weights);
      }
    }
    Matrix attn = bc.O * p.wo;
    attn.rowwise() += p.wo_bias.row(0);
    x += attn;

    bc.m = layer_norm(x, p.ln2_gain, p.ln2_bias, bc.ln2);
    bc.u = bc.m * p.mlp_in;
    bc.u.rowwise() += p.mlp_in_bias.row(0);
    bc.g = bc.u.unaryExpr([](double v) { return gelu(v); });
    Matrix f = bc.g * p.mlp_out;
    f.rowwise() += p.mlp_out_bias.row(0);
    x += f;
  }

  const Matrix hf = layer_norm(x, params_.final_gain, params_.final_bias, k.final_ln);
  k.pooled_rows.clear();
  if (c.pooling == Pooling::mean) {
    for (Eigen::Index i = 1; i < n; ++i) {
      if (!padding[static_cast<std::size_t>(i)]) k.pooled_rows.push_back(i);
    }
  }
  if (k.pooled_rows.empty()) k.pooled_rows.push_back(0);
  k.pooled = Eigen::RowVectorXd::Zero(c.model_dim);
  for (const auto r : k.pooled_rows) k.pooled += hf.row(r);
  k.pooled /= static_cast<double>(k.pooled_rows.size());

  k.logit = k.pooled.dot(params_.head_weight.col(0)) + params_.head_bias(0, 0);
  if (!std::isfinite(k.logit)) throw DataError("non-finite classifier logit");
  return k.logit;
}

double Encoder::logit(const TokenSequence& seq) const { return forward(seq, nullptr, nullptr); }

double Encoder::predict(const TokenSequence& seq) const { return sigmoid(logit(seq)); }

AttentionTrace Encoder::trace(const TokenSequence& seq) const {
  AttentionTrace t;
  forward(seq, nullptr, &t);
  return t;
}

double Encoder::accumulate_gradient(const TokenSequence& seq, int label, EncoderParams& grads) const {
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
  Cache k;
  const double z = forward(seq, &k, nullptr);
  const auto& c = config_;
  const auto n = static_cast<Eigen::Index>(seq.items.size());
  const int dh = c.head_dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));

  const double dlogit = sigmoid(z) - static_cast<double>(label);
  grads.head_weight.col(0) += dlogit * k.pooled.transpose();
  grads.head_bias(0, 0) += dlogit;

  Matrix dhf = Matrix::Zero(n, c.model_dim);
  const Eigen::RowVectorXd dpooled =
      dlogit * params_.head_weight.col(0).transpose() / static_cast<double>(k.pooled_rows.size());
  for (const auto r : k.pooled_rows) dhf.row(r) += dpooled;
  Matrix dx = layer_norm_backward(dhf, params_.final_gain, k.final_ln, grads.final_gain, grads.final_bias);

  for (int b = c.blocks - 1; b >= 0; --b) {
    const auto& p = params_.blocks[static_cast<std::size_t>(b)];
    auto& g = grads.blocks[static_cast<std::size_t>(b)];
    const auto& bc = k.blocks[static_cast<std::size_t>(b)];

    // MLP sublayer.
    g.mlp_out += bc.g.transpose() * dx;
    g.mlp_out_bias += dx.colwise().sum();
    const Matrix dgelu = dx * p.mlp_out.transpose();
    const Matrix du = dgelu.cwiseProduct(bc.u.unaryExpr([](double v) { return gelu_grad(v); }));
    g.mlp_in += bc.m.transpose() * du;
    g.mlp_in_bias += du.colwise().sum();
    dx += layer_norm_backward(du * p.mlp_in.transpose(), p.ln2_gain, bc.ln2, g.ln2_gain, g.ln2_bias);

    // Attention sublayer.
    g.wo += bc.O.transpose() * dx;
    g.wo_bias += dx.colwise().sum();
    const Matrix dO = dx * p.wo.transpose();
    Matrix dQ = Matrix::Zero(n, c.attention_width());
    Matrix dK = Matrix::Zero(n, c.attention_width());
    Matrix dV = Matrix::Zero(n, c.attention_width());
    for (int h = 0; h < c.heads; ++h) {
      const auto& head = bc.heads[static_cast<std::size_t>(h)];
      const auto& scale = bc.tem_scale[static_cast<std::size_t>(h)];
      const auto& P = head.weights;
      const auto dOh = dO.middleCols(h * dh, dh);
      dV.middleCols(h * dh, dh) += P.transpose() * dOh;
      const Matrix dP = dOh * bc.V.middleCols(h * dh, dh).transpose();

      Matrix dS = Matrix::Zero(n, n);
      double d_b = 0.0;
      double d_c = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double row_dot = dP.row(i).dot(P.row(i));
        for (Eigen::Index j = 0; j < n; ++j) {
          if (k.padding[static_cast<std::size_t>(j)]) continue;
          const double dz = P(i, j) * (dP(i, j) - row_dot);
          const double s = head.scores(i, j);
          if (s > 0.0) dS(i, j) = dz * scale(i, j) * inv_sqrt_d;
          if (c.tem == TemMode::learned) {
            const double dscale = dz * std::max(s, 0.0) * inv_sqrt_d;
            const double slope = scale(i, j) * (1.0 - scale(i, j));
            d_b -= dscale * k.R(i, j) * slope;
            d_c += dscale * slope;
          }
        }
      }
      if (c.tem == TemMode::learned) {
        g.tem_b_raw(0, h) += d_b * sigmoid(p.tem_b_raw(0, h));
        g.tem_c_raw(0, h) += d_c * sigmoid(p.tem_c_raw(0, h));
      }
      dQ.middleCols(h * dh, dh) += dS * bc.K.middleCols(h * dh, dh);
      dK.middleCols(h * dh, dh) += dS.transpose() * bc.Q.middleCols(h * dh, dh);
    }
    g.wq += bc.a.transpose() * dQ;
    g.wk += bc.a.transpose() * dK;
    g.wv += bc.a.transpose() * dV;
    const Matrix da = dQ * p.wq.transpose() + dK * p.wk.transpose() + dV * p.wv.transpose();
    dx += layer_norm_backward(da, p.ln1_gain, bc.ln1, g.ln1_gain, g.ln1_bias);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tok = seq.items[static_cast<std::size_t>(i)];
    grads.segment.row(static_cast<int>(tok.modality)) += dx.row(i);
    if (tok.padding || tok.modality == Modality::cls) continue;
    if (tok.modality == Modality::signature) {
      grads.nonimaging_proj += as_row(tok.payload).transpose() * dx.row(i);
      grads.nonimaging_bias += dx.row(i);
    } else {
      grads.image_proj += as_row(tok.payload).transpose() * dx.row(i);
      grads.image_bias += dx.row(i);
    }
  }
  return bce_with_logit(z, label);
}

EncoderParams Encoder::backward(const TokenSequence& seq, int label) const {
  EncoderParams grads = zeros_like(params_);
  accumulate_gradient(seq, label, grads);
  return grads;
}

EncoderParams Encoder::backward_batch(std::span<const TokenSequence> seqs, std::span<const int> labels,
                                      double* loss) const {
  if (seqs.size() != labels.size()) throw DataError("batch sequences and labels differ in length");
  EncoderParams grads = zeros_like(params_);
  double total = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) total += accumulate_gradient(seqs[i], labels[i], grads);
  if (loss) *loss = total;
  return grads;
}

std::vector<NamedTensor> MlpParams::tensors() {
  return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}};
}

std::vector<ConstNamedTensor> MlpParams::tensors() const {
  return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}};
}

MlpClassifier::MlpClassifier(int input_dim, int hidden_dim, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1) throw ConfigError("MLP dimensions must be positive");
  Rng rng(seed);
  params_.w1 = random_matrix(rng, input_dim, hidden_dim, 1.0 / std::sqrt(input_dim));
  params_.b1 = Matrix::Zero(1, hidden_dim);
  params_.w2 = random_matrix(rng, hidden_dim, 1, 1.0 / std::sqrt(hidden_dim));
  params_.b2 = Matrix::Zero(1, 1);
}

Eigen::RowVectorXd MlpClassifier::input(const TokenSequence& seq) const {
  const Token* latest = nullptr;
  for (const auto& tok : seq.items) {
    if (tok.modality != Modality::image || tok.padding) continue;
    if (!latest || tok.day >= latest->day) latest = &tok;
  }
  if (!latest) throw DataError("sequence '" + seq.subject_id + "' has no image token");
  if (static_cast<int>(latest->payload.size()) != input_dim()) {
    throw DataError("dimension mismatch: image payload for '" + seq.subject_id + "'");
  }
  return as_row(latest->payload);
}

double MlpClassifier::logit(const TokenSequence& seq) const {
  Eigen::RowVectorXd u = input(seq) * params_.w1 + params_.b1;
  const Eigen::RowVectorXd h = u.unaryExpr([](double v) { return gelu(v); });
  return h.dot(params_.w2.col(0)) + params_.b2(0, 0);
}

double MlpClassifier::predict(const TokenSequence& seq) const { return sigmoid(logit(seq)); }

double MlpClassifier::accumulate_gradient(const TokenSequence& seq, int label, MlpParams& grads) const {
  const Eigen::RowVectorXd x = input(seq);
  const Eigen::RowVectorXd u = x * params_.w1 + params_.b1;
  const Eigen::RowVectorXd h = u.unaryExpr([](double v) { return gelu(v); });
  const double z = h.dot(params_.w2.col(0)) + params_.b2(0, 0);
  const double dz = sigmoid(z) - static_cast<double>(label);
  grads.w2.col(0) += dz * h.transpose();
  grads.b2(0, 0) += dz;
  const Eigen::RowVectorXd du =
      (dz * params_.w2.col(0).transpose()).cwiseProduct(u.unaryExpr([](double v) { return gelu_grad(v); }));
  grads.w1 += x.transpose() * du;
  grads.b1 += du;
  return bce_with_logit(z, label);
}

}  // namespace lmsig::encoder

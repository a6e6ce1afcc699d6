#pragma once

// Longitudinal multimodal encoder with time-distance scaled self-attention.
//
// A subject is a sequence [cls, n_1..n_T, g_1..g_T] of one classification
// token, T non-imaging tokens (signature expressions or binned-code vectors)
// and T image tokens sampled at the same dates. Each token is embedded as
// projection(payload) + fixed sinusoidal position + learnable segment row.
// Every attention head scales its ReLU-gated query-key products by a
// temporal emphasis model
//
//   TEM(r) = 1 / (1 + exp(b * r - c)),   b, c >= 0 per head,
//
// applied to the token's age r in days relative to the most recent scan.
// The reference path is float64 throughout.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmsig/curves.hpp"
#include "lmsig/params.hpp"

namespace lmsig::encoder {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using curves::Day;

enum class Modality : int { signature = 0, image = 1, cls = 2 };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view text);

struct Token {
  std::vector<double> payload;
  Modality modality = Modality::signature;
  Day day = 0;
  bool padding = false;
};

/// Layout: item 0 is cls, items 1..T the non-imaging block, items T+1..2T the
/// image block. Padded items sit after the real ones in each block and carry
/// the most recent day.
struct TokenSequence {
  std::string subject_id;
  std::vector<Token> items;
  std::optional<int> label;

  int max_scans() const { return static_cast<int>(items.size() - 1) / 2; }
};

/// One acquisition date with whatever modalities were available on it.
struct ScanObservation {
  Day day = 0;
  std::optional<std::vector<double>> nonimaging;
  std::optional<std::vector<double>> image;
};

/// Builds a well-formed sequence from the `max_scans` most recent scans
/// (input need not be sorted). Missing modalities become padded tokens.
TokenSequence assemble_sequence(std::string subject_id, int max_scans,
                                std::vector<ScanObservation> scans,
                                std::optional<int> label = std::nullopt);

enum class TemMode {
  learned,
  /// Ablation: every TEM value is fixed to 1.
  disabled,
};

enum class TimeDistance {
  /// R[i][j] = |t_last - t_i|, constant along each row.
  to_most_recent,
  /// Experimental variant: R[i][j] = |t_i - t_j|.
  pairwise,
};

enum class Pooling { cls, mean };

struct EncoderConfig {
  int nonimaging_dim = 20;
  int image_dim = 64;
  int max_scans = 3;
  int model_dim = 320;
  int heads = 4;
  int head_dim = 64;
  int mlp_dim = 124;
  int blocks = 4;
  TemMode tem = TemMode::learned;
  TimeDistance distance = TimeDistance::to_most_recent;
  Pooling pooling = Pooling::cls;
  double tem_b_init = 1.0 / 365.0;  // per day
  double tem_c_init = 1.0;
  std::uint64_t seed = 0;

  int sequence_length() const { return 2 * max_scans + 1; }
  int attention_width() const { return heads * head_dim; }
};

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

/// Temporal emphasis model; the exponent is clamped to [-500, 500].
double tem(double r, double b, double c);

/// R of the time-distance attention. Rows of padded tokens and of the cls
/// token are zero; cls counts as the most recent observation.
Matrix build_relative_times(const TokenSequence& seq,
                            TimeDistance distance = TimeDistance::to_most_recent);

/// Single-head core of the time-distance attention:
///   softmax_j( ReLU(Q K^T) o R_hat / sqrt(d) )  V
/// with padded key columns set to -inf just before the softmax, so they get
/// exactly zero weight. Throws DataError on NaN logits.
struct HeadAttention {
  Matrix scores;   // Q K^T, before gating
  Matrix weights;  // post-softmax
  Matrix output;
};
HeadAttention attend_head(const Matrix& Q, const Matrix& K, const Matrix& V, const Matrix& tem_scale,
                          const std::vector<bool>& key_padding, double scale_dim);

struct BlockParams {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, wk, wv;  // model_dim x heads*head_dim
  Matrix wo, wo_bias;
  Matrix ln2_gain, ln2_bias;
  Matrix mlp_in, mlp_in_bias;
  Matrix mlp_out, mlp_out_bias;
  Matrix tem_b_raw, tem_c_raw;  // 1 x heads, softplus-reparameterized
};

struct EncoderParams {
  Matrix nonimaging_proj, nonimaging_bias;
  Matrix image_proj, image_bias;
  Matrix segment;  // 3 x model_dim: signature, image, cls
  std::vector<BlockParams> blocks;
  Matrix final_gain, final_bias;
  Matrix head_weight, head_bias;

  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

/// Diagnostic copy of intermediate attention quantities.
struct AttentionTrace {
  Matrix relative_times;
  std::vector<std::vector<Matrix>> tem_scale;  // [block][head]
  std::vector<std::vector<Matrix>> weights;    // [block][head]
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig config);
  Encoder(EncoderConfig config, EncoderParams params);

  const EncoderConfig& config() const { return config_; }
  const EncoderParams& params() const { return params_; }
  EncoderParams& params() { return params_; }
  using Params = EncoderParams;

  double tem_b(int block, int head) const;
  double tem_c(int block, int head) const;
  /// R_hat for one head of one block.
  Matrix tem_matrix(const Matrix& relative_times, int block, int head) const;

  double logit(const TokenSequence& seq) const;
  double predict(const TokenSequence& seq) const;
  AttentionTrace trace(const TokenSequence& seq) const;

  /// Adds d(BCE)/d(params) for one labelled sequence into `grads` and returns
  /// the loss.
  double accumulate_gradient(const TokenSequence& seq, int label, EncoderParams& grads) const;
  EncoderParams backward(const TokenSequence& seq, int label) const;
  /// Summed loss over the batch; gradients are summed in input order.
  EncoderParams backward_batch(std::span<const TokenSequence> seqs, std::span<const int> labels,
                               double* loss = nullptr) const;

  void validate(const TokenSequence& seq) const;

 private:
  struct Cache;
  double forward(const TokenSequence& seq, Cache* cache, AttentionTrace* trace) const;

  EncoderConfig config_;
  EncoderParams params_;
  Matrix positional_;
};

/// Fixed sinusoidal table, rows = positions.
Matrix sinusoidal_positions(int length, int dim);

/// Binary cross-entropy on a logit, numerically stable.
double bce_with_logit(double logit, int label);

/// Two-layer perceptron on the most recent image token, the single
/// cross-section image-only baseline.
struct MlpParams {
  Matrix w1, b1, w2, b2;
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
};

class MlpClassifier {
 public:
  using Params = MlpParams;
  MlpClassifier(int input_dim, int hidden_dim, std::uint64_t seed);

  const MlpParams& params() const { return params_; }
  MlpParams& params() { return params_; }
  int input_dim() const { return static_cast<int>(params_.w1.rows()); }

  double logit(const TokenSequence& seq) const;
  double predict(const TokenSequence& seq) const;
  double accumulate_gradient(const TokenSequence& seq, int label, MlpParams& grads) const;

 private:
  Eigen::RowVectorXd input(const TokenSequence& seq) const;
  MlpParams params_;
};

}  // namespace lmsig::encoder

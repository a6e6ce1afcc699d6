#pragma once

#include <filesystem>

#include "lmsig/encoder.hpp"

namespace lmsig::encoder {

/// Checkpoint layout: 8-byte magic "LMSIGCKP", uint32 version, uint32 flags
/// (bit 0 TEM disabled, bit 1 pairwise distance, bit 2 mean pooling), int64
/// nonimaging_dim, image_dim, max_scans, model_dim, heads, head_dim, mlp_dim,
/// blocks, seed, float64 tem_b_init, tem_c_init, then every parameter tensor
/// in EncoderParams::tensors() order as row-major float64.
void save_checkpoint(const std::filesystem::path& path, const Encoder& model);
Encoder load_checkpoint(const std::filesystem::path& path);

/// Same idea for the image-only perceptron: magic "LMSIGMLP", uint32
/// version, uint32 reserved, int64 input_dim, int64 hidden_dim, tensors.
void save_checkpoint(const std::filesystem::path& path, const MlpClassifier& model);
MlpClassifier load_mlp_checkpoint(const std::filesystem::path& path);

}  // namespace lmsig::encoder

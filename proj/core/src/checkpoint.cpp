#include "lmsig/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "lmsig/error.hpp"

namespace lmsig::encoder {

namespace {

constexpr char kEncoderMagic[8] = {'L', 'M', 'S', 'I', 'G', 'C', 'K', 'P'};
constexpr char kMlpMagic[8] = {'L', 'M', 'S', 'I', 'G', 'M', 'L', 'P'};
constexpr std::uint32_t kVersion = 1;

void check_magic(std::istream& in, const char (&magic)[8], const std::filesystem::path& path) {
  char buf[8];
  in.read(buf, sizeof buf);
  if (!in || std::memcmp(buf, magic, sizeof buf) != 0) {
    throw DataError(path.string() + " is not a checkpoint of the expected kind");
  }
  if (detail::read_pod<std::uint32_t>(in, "version") != kVersion) {
    throw DataError("unsupported checkpoint version in " + path.string());
  }
}

template <class Params>
void write_tensors(std::ostream& out, const Params& params) {
  for (const auto& t : params.tensors()) detail::write_row_major(out, *t.value);
}

template <class Params>
void read_tensors(std::istream& in, Params& params) {
  for (auto& t : params.tensors()) detail::read_row_major(in, *t.value, t.name);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Encoder& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto& c = model.config();
  out.write(kEncoderMagic, sizeof kEncoderMagic);
  detail::write_pod(out, kVersion);
  std::uint32_t flags = 0;
  if (c.tem == TemMode::disabled) flags |= 1u;
  if (c.distance == TimeDistance::pairwise) flags |= 2u;
  if (c.pooling == Pooling::mean) flags |= 4u;
  detail::write_pod(out, flags);
  for (const std::int64_t v : {c.nonimaging_dim, c.image_dim, c.max_scans, c.model_dim, c.heads,
                               c.head_dim, c.mlp_dim, c.blocks}) {
    detail::write_pod(out, v);
  }
  detail::write_pod(out, static_cast<std::int64_t>(c.seed));
  detail::write_pod(out, c.tem_b_init);
  detail::write_pod(out, c.tem_c_init);
  write_tensors(out, model.params());
  if (!out) throw DataError("failed writing " + path.string());
}

Encoder load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  check_magic(in, kEncoderMagic, path);
  const auto flags = detail::read_pod<std::uint32_t>(in, "flags");
  EncoderConfig c;
  c.tem = (flags & 1u) ? TemMode::disabled : TemMode::learned;
  c.distance = (flags & 2u) ? TimeDistance::pairwise : TimeDistance::to_most_recent;
  c.pooling = (flags & 4u) ? Pooling::mean : Pooling::cls;
  for (int* field : {&c.nonimaging_dim, &c.image_dim, &c.max_scans, &c.model_dim, &c.heads,
                     &c.head_dim, &c.mlp_dim, &c.blocks}) {
    const auto v = detail::read_pod<std::int64_t>(in, "dimensions");
    if (v < 1 || v > (1 << 24)) throw DataError("implausible dimension in " + path.string());
    *field = static_cast<int>(v);
  }
  c.seed = static_cast<std::uint64_t>(detail::read_pod<std::int64_t>(in, "seed"));
  c.tem_b_init = detail::read_pod<double>(in, "tem_b_init");
  c.tem_c_init = detail::read_pod<double>(in, "tem_c_init");
  Encoder model(c);
  read_tensors(in, model.params());
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const MlpClassifier& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMlpMagic, sizeof kMlpMagic);
  detail::write_pod(out, kVersion);
  detail::write_pod(out, std::uint32_t{0});
  detail::write_pod(out, static_cast<std::int64_t>(model.params().w1.rows()));
  detail::write_pod(out, static_cast<std::int64_t>(model.params().w1.cols()));
  write_tensors(out, model.params());
  if (!out) throw DataError("failed writing " + path.string());
}

MlpClassifier load_mlp_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  check_magic(in, kMlpMagic, path);
  detail::read_pod<std::uint32_t>(in, "reserved");
  const auto input = detail::read_pod<std::int64_t>(in, "input_dim");
  const auto hidden = detail::read_pod<std::int64_t>(in, "hidden_dim");
  if (input < 1 || hidden < 1 || input > (1 << 24) || hidden > (1 << 24)) {
    throw DataError("implausible dimension in " + path.string());
  }
  MlpClassifier model(static_cast<int>(input), static_cast<int>(hidden), 0);
  read_tensors(in, model.params());
  return model;
}

}  // namespace lmsig::encoder

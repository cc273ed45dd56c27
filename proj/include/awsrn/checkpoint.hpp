#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "awsrn/errors.hpp"
#include "awsrn/model.hpp"

// Checkpoint layout, all integers little-endian:
//
//   "AWSR"                       magic
//   u32 version                  = kCheckpointVersion
//   config block:
//     u32 scale, n_lfb, n_awru, c_feat, c_wide
//     u32 kernel count, then u32 per kernel
//     u8 ru_kind (0 basic, 1 adaptive), u8 use_lrfu, u8 use_awms
//     f64 init_unit_weight, f64 init_branch_weight
//   u32 parameter count
//   per parameter:
//     u32 name length, name bytes
//     u8 dtype (0 = f32, 1 = f64)
//     u8 rank (4 conv kernel, 1 per-channel vector, 0 scalar), u32 per dim
//     values, little-endian IEEE-754

namespace awsrn {

inline constexpr char kCheckpointMagic[4] = {'A', 'W', 'S', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  /// `context` names what was being read when the data ran out.
  void need(std::size_t n, const std::string& context) const {
    if (pos_ + n > buf_.size()) {
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            "checkpoint truncated while reading " + context);
    }
  }
  std::uint8_t u8(const std::string& ctx) {
    need(1, ctx);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32(const std::string& ctx) {
    need(4, ctx);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const std::string& ctx) {
    need(8, ctx);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const std::string& ctx) { return std::bit_cast<float>(u32(ctx)); }
  double f64(const std::string& ctx) { return std::bit_cast<double>(u64(ctx)); }
  std::string bytes(std::size_t n, const std::string& ctx) {
    need(n, ctx);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

template <class T>
constexpr std::uint8_t dtype_tag() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

inline std::vector<std::uint32_t> stored_dims(const Shape& s, ParamRole role) {
  switch (role) {
    case ParamRole::ConvDirection:
      return {std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h), std::uint32_t(s.w)};
    case ParamRole::ConvGain:
    case ParamRole::ConvBias: return {std::uint32_t(s.c)};
    case ParamRole::UnitWeight:
    case ParamRole::BranchWeight: return {};
  }
  return {};
}

inline Shape shape_from_dims(const std::vector<std::uint32_t>& d) {
  switch (d.size()) {
    case 0: return {1, 1, 1, 1};
    case 1: return {1, d[0], 1, 1};
    case 4: return {d[0], d[1], d[2], d[3]};
    default: return {0, 0, 0, 0};
  }
}

inline void write_config(ByteWriter& w, const ModelConfig& c) {
  w.u32(std::uint32_t(c.scale));
  w.u32(std::uint32_t(c.n_lfb));
  w.u32(std::uint32_t(c.n_awru));
  w.u32(std::uint32_t(c.c_feat));
  w.u32(std::uint32_t(c.c_wide));
  w.u32(std::uint32_t(c.awms_kernels.size()));
  for (int k : c.awms_kernels) w.u32(std::uint32_t(k));
  w.u8(c.ru_kind == RuKind::Adaptive ? 1 : 0);
  w.u8(c.use_lrfu ? 1 : 0);
  w.u8(c.use_awms ? 1 : 0);
  w.f64(c.init_unit_weight);
  w.f64(c.init_branch_weight);
}

inline ModelConfig read_config(ByteReader& r) {
  const std::string ctx = "config block";
  ModelConfig c;
  c.scale = static_cast<int>(r.u32(ctx));
  c.n_lfb = static_cast<int>(r.u32(ctx));
  c.n_awru = static_cast<int>(r.u32(ctx));
  c.c_feat = static_cast<int>(r.u32(ctx));
  c.c_wide = static_cast<int>(r.u32(ctx));
  const std::uint32_t nk = r.u32(ctx);
  r.need(std::size_t(nk) * 4, ctx);
  c.awms_kernels.clear();
  for (std::uint32_t i = 0; i < nk; ++i) c.awms_kernels.push_back(static_cast<int>(r.u32(ctx)));
  c.ru_kind = r.u8(ctx) ? RuKind::Adaptive : RuKind::Basic;
  c.use_lrfu = r.u8(ctx) != 0;
  c.use_awms = r.u8(ctx) != 0;
  c.init_unit_weight = r.f64(ctx);
  c.init_branch_weight = r.f64(ctx);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                          std::string("checkpoint config is invalid: ") + e.what());
  }
  return c;
}

}  // namespace detail

template <class T>
std::vector<char> serialize_checkpoint(const AwsrnModel<T>& model) {
  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  detail::write_config(w, model.config());
  const auto layout = expected_layout(model.config());
  w.u32(std::uint32_t(model.params().size()));
  std::size_t i = 0;
  for (const auto& p : model.params()) {
    w.u32(std::uint32_t(p.name.size()));
    w.bytes(p.name);
    w.u8(detail::dtype_tag<T>());
    const auto dims = detail::stored_dims(p.value().shape(), layout.at(i++).role);
    w.u8(std::uint8_t(dims.size()));
    for (auto d : dims) w.u32(d);
    for (T v : p.value().data()) {
      if constexpr (std::is_same_v<T, float>) {
        w.f32(v);
      } else {
        w.f64(v);
      }
    }
  }
  return w.buffer();
}

template <class T>
void save_checkpoint(const AwsrnModel<T>& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "write to '" + path + "' failed");
}

/// Parses a checkpoint. When `expected` is given, the stored config must equal it.
template <class T>
AwsrnModel<T> deserialize_checkpoint(std::vector<char> bytes,
                                     const std::optional<ModelConfig>& expected = std::nullopt) {
  detail::ByteReader r(std::move(bytes));
  const std::string magic = r.bytes(4, "magic");
  if (magic != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError(CheckpointErrorKind::BadMagic, "not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::VersionMismatch,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  const ModelConfig cfg = detail::read_config(r);
  if (expected && !(*expected == cfg)) {
    throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                          "checkpoint config does not match the requested model configuration");
  }
  const auto layout = expected_layout(cfg);
  const std::uint32_t count = r.u32("parameter count");
  if (count != layout.size()) {
    throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                          "checkpoint stores " + std::to_string(count) +
                              " parameters, its config implies " + std::to_string(layout.size()));
  }
  ParameterRegistry<T> reg;
  for (const ParamSpec& spec : layout) {
    const std::string ctx = "parameter '" + spec.name + "'";
    const std::uint32_t len = r.u32(ctx);
    const std::string name = r.bytes(len, ctx);
    if (name != spec.name) {
      throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                            "checkpoint parameter '" + name + "' where '" + spec.name +
                                "' was expected");
    }
    const std::uint8_t dtype = r.u8(ctx);
    if (dtype > 1) {
      throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                            "unknown dtype tag " + std::to_string(dtype) + " for " + ctx);
    }
    const std::uint8_t rank = r.u8(ctx);
    std::vector<std::uint32_t> dims;
    for (std::uint8_t i = 0; i < rank; ++i) dims.push_back(r.u32(ctx));
    const Shape shape = detail::shape_from_dims(dims);
    if (!(shape == spec.shape) || dims != detail::stored_dims(spec.shape, spec.role)) {
      throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                            ctx + " has shape " + shape.str() + ", expected " + spec.shape.str());
    }
    const std::size_t elem = dtype == 0 ? 4 : 8;
    r.need(shape.numel() * elem, ctx);
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < shape.numel(); ++i) {
      t[i] = dtype == 0 ? static_cast<T>(r.f32(ctx)) : static_cast<T>(r.f64(ctx));
    }
    reg.add(spec.name, std::move(t));
  }
  if (!r.at_end()) {
    throw CheckpointError(CheckpointErrorKind::RegistryMismatch,
                          "unexpected trailing data after the last parameter");
  }
  return AwsrnModel<T>::from_registry(cfg, std::move(reg));
}

template <class T>
AwsrnModel<T> load_checkpoint(const std::string& path,
                              const std::optional<ModelConfig>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(std::move(bytes), expected);
}

/// Reads only the config block of a checkpoint.
inline ModelConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r(std::move(bytes));
  if (r.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError(CheckpointErrorKind::BadMagic, "not a checkpoint (bad magic)");
  }
  if (r.u32("version") != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::VersionMismatch, "unsupported checkpoint version");
  }
  return detail::read_config(r);
}

}  // namespace awsrn

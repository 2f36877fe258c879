#include "vseg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/hash.hpp"

namespace vseg {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { le(v); }
  void u32(uint32_t v) { le(v); }
  void u64(uint64_t v) { le(v); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    le(bits);
  }
  void bytes(const void* p, std::size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void f32_array(const float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(p, n * 4);
    } else {
      for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }
  }
  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  uint8_t u8(const char* field) { return take<uint8_t>(field); }
  uint16_t u16(const char* field) { return take<uint16_t>(field); }
  uint32_t u32(const char* field) { return take<uint32_t>(field); }
  uint64_t u64(const char* field) { return take<uint64_t>(field); }
  float f32(const char* field) {
    uint32_t bits = take<uint32_t>(field);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64(const char* field) {
    uint64_t bits = take<uint64_t>(field);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void bytes(void* out, std::size_t n, const char* field) {
    need(n, field);
    std::memcpy(out, p_ + pos_, n);
    pos_ += n;
  }
  void f32_array(float* out, std::size_t n, const char* field) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(out, n * 4, field);
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = f32(field);
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  template <typename U>
  U take(const char* field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(p_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  void need(std::size_t n, const char* field) {
    if (pos_ + n > n_) throw FormatError(std::string("truncated ") + field);
  }
  const uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

constexpr uint16_t kVolumeVersion = 1;
constexpr uint16_t kCheckpointVersion = 1;

void write_volume_header(ByteWriter& w, VolumeKind kind, const Dims3& dims,
                         const Spacing3& spacing) {
  w.bytes("VVOL", 4);
  w.u16(kVolumeVersion);
  w.u8(static_cast<uint8_t>(kind));
  for (int a = 0; a < 3; ++a) w.u32(static_cast<uint32_t>(dims[a]));
  for (int a = 0; a < 3; ++a) w.f64(spacing[a]);
}

struct VolumeHeader {
  VolumeKind kind;
  Dims3 dims;
  Spacing3 spacing;
};

VolumeHeader read_volume_header(ByteReader& r) {
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "VVOL", 4) != 0) throw FormatError("magic (expected VVOL)");
  uint16_t version = r.u16("version");
  if (version != kVolumeVersion) {
    throw FormatError("version (expected 1, got " + std::to_string(version) + ")");
  }
  uint8_t dtype = r.u8("dtype");
  if (dtype > 2) throw FormatError("dtype (expected 0, 1 or 2)");
  VolumeHeader h;
  h.kind = static_cast<VolumeKind>(dtype);
  for (int a = 0; a < 3; ++a) {
    uint32_t d = r.u32("dims");
    if (d == 0 || d > (1u << 24)) throw FormatError("dims (out of range)");
    h.dims[a] = static_cast<int>(d);
  }
  for (int a = 0; a < 3; ++a) {
    h.spacing[a] = r.f64("spacing");
    if (!(h.spacing[a] > 0.0)) throw FormatError("spacing (must be > 0)");
  }
  return h;
}

}  // namespace

void write_volume(const std::filesystem::path& path, const VolumeImage& v) {
  v.validate();
  ByteWriter w;
  write_volume_header(w, VolumeKind::kImage, v.dims, v.spacing);
  w.f32_array(v.data.data(), v.data.size());
  write_file(path, w.data());
}

void write_volume(const std::filesystem::path& path, const BinaryMask& v) {
  v.validate();
  ByteWriter w;
  write_volume_header(w, VolumeKind::kBinary, v.dims, v.spacing);
  w.bytes(v.data.data(), v.data.size());
  write_file(path, w.data());
}

void write_volume(const std::filesystem::path& path, const TriLabelMask& v) {
  v.validate();
  ByteWriter w;
  write_volume_header(w, VolumeKind::kTriLabel, v.dims, v.spacing);
  w.bytes(v.data.data(), v.data.size());
  write_file(path, w.data());
}

VolumeKind peek_volume_kind(const std::filesystem::path& path) {
  std::vector<uint8_t> buf = read_file(path);
  ByteReader r(buf.data(), buf.size());
  return read_volume_header(r).kind;
}

VolumeImage read_volume_image(const std::filesystem::path& path) {
  std::vector<uint8_t> buf = read_file(path);
  ByteReader r(buf.data(), buf.size());
  VolumeHeader h = read_volume_header(r);
  if (h.kind != VolumeKind::kImage) throw FormatError("dtype (expected image)");
  VolumeImage v;
  v.dims = h.dims;
  v.spacing = h.spacing;
  v.data.resize(voxel_count(h.dims));
  r.f32_array(v.data.data(), v.data.size(), "payload");
  if (r.remaining() != 0) throw FormatError("payload (trailing bytes)");
  return v;
}

BinaryMask read_binary_mask(const std::filesystem::path& path) {
  std::vector<uint8_t> buf = read_file(path);
  ByteReader r(buf.data(), buf.size());
  VolumeHeader h = read_volume_header(r);
  if (h.kind != VolumeKind::kBinary) throw FormatError("dtype (expected binary mask)");
  BinaryMask v;
  v.dims = h.dims;
  v.spacing = h.spacing;
  v.data.resize(voxel_count(h.dims));
  r.bytes(v.data.data(), v.data.size(), "payload");
  if (r.remaining() != 0) throw FormatError("payload (trailing bytes)");
  for (uint8_t b : v.data) {
    if (b > 1) throw FormatError("payload (binary voxel outside {0,1})");
  }
  return v;
}

TriLabelMask read_tri_label_mask(const std::filesystem::path& path) {
  std::vector<uint8_t> buf = read_file(path);
  ByteReader r(buf.data(), buf.size());
  VolumeHeader h = read_volume_header(r);
  if (h.kind != VolumeKind::kTriLabel) throw FormatError("dtype (expected tri-label mask)");
  TriLabelMask v;
  v.dims = h.dims;
  v.spacing = h.spacing;
  v.data.resize(voxel_count(h.dims));
  r.bytes(v.data.data(), v.data.size(), "payload");
  if (r.remaining() != 0) throw FormatError("payload (trailing bytes)");
  for (uint8_t b : v.data) {
    if (b != 0 && b != 1 && b != kUnlabeled) {
      throw FormatError("payload (tri-label voxel outside {0,1,255})");
    }
  }
  return v;
}

namespace {

void write_net_config(ByteWriter& w, const UNetConfig& cfg) {
  w.u32(static_cast<uint32_t>(cfg.levels));
  w.u32(static_cast<uint32_t>(cfg.base_channels));
  w.u32(static_cast<uint32_t>(cfg.in_channels));
  w.u32(static_cast<uint32_t>(cfg.out_channels));
  for (const auto& k : cfg.kernel_sizes) {
    for (int a = 0; a < 3; ++a) w.u32(static_cast<uint32_t>(k[a]));
  }
  for (const auto& s : cfg.pooling_strides) {
    for (int a = 0; a < 3; ++a) w.u32(static_cast<uint32_t>(s[a]));
  }
}

UNetConfig read_net_config(ByteReader& r) {
  UNetConfig cfg;
  cfg.levels = static_cast<int>(r.u32("config.levels"));
  if (cfg.levels < 1 || cfg.levels > 16) throw FormatError("config.levels (out of range)");
  cfg.base_channels = static_cast<int>(r.u32("config.base_channels"));
  cfg.in_channels = static_cast<int>(r.u32("config.in_channels"));
  cfg.out_channels = static_cast<int>(r.u32("config.out_channels"));
  cfg.kernel_sizes.resize(cfg.levels);
  for (auto& k : cfg.kernel_sizes) {
    for (int a = 0; a < 3; ++a) k[a] = static_cast<int>(r.u32("config.kernel_sizes"));
  }
  cfg.pooling_strides.resize(cfg.levels - 1);
  for (auto& s : cfg.pooling_strides) {
    for (int a = 0; a < 3; ++a) s[a] = static_cast<int>(r.u32("config.pooling_strides"));
  }
  cfg.validate();
  return cfg;
}

void write_params(ByteWriter& w, const UNetParameters<float>& params) {
  w.u32(static_cast<uint32_t>(params.params.size()));
  for (const auto& p : params.params) {
    w.u16(static_cast<uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u8(static_cast<uint8_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<uint32_t>(d));
    w.f32_array(p.value.data(), p.value.size());
    w.f32_array(p.momentum.data(), p.momentum.size());
  }
}

void read_params(ByteReader& r, UNetParameters<float>& params) {
  uint32_t count = r.u32("params.count");
  if (count != params.params.size()) throw FormatError("params.count (does not match config)");
  for (auto& p : params.params) {
    uint16_t name_len = r.u16("params.name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "params.name");
    if (name != p.name) throw FormatError("params.name (layer order mismatch)");
    uint8_t ndims = r.u8("params.ndims");
    if (ndims != p.shape.size()) throw FormatError("params.ndims (does not match config)");
    for (std::size_t i = 0; i < p.shape.size(); ++i) {
      if (r.u32("params.shape") != static_cast<uint32_t>(p.shape[i])) {
        throw FormatError("params.shape (does not match config)");
      }
    }
    r.f32_array(p.value.data(), p.value.size(), "params.value");
    r.f32_array(p.momentum.data(), p.momentum.size(), "params.momentum");
  }
}

std::vector<uint8_t> build_checkpoint(uint8_t kind, bool frozen, const UNetConfig& cfg,
                                      const std::vector<double>& history,
                                      const UNetParameters<float>& params) {
  ByteWriter w;
  w.bytes("VCKP", 4);
  w.u16(kCheckpointVersion);
  w.u8(kind);
  w.u8(frozen ? 1 : 0);
  write_net_config(w, cfg);
  w.u32(static_cast<uint32_t>(history.size()));
  for (double h : history) w.f64(h);
  write_params(w, params);
  uint64_t checksum = fnv1a64(w.data().data(), w.data().size());
  w.u64(checksum);
  return w.data();
}

struct CheckpointBody {
  uint8_t kind;
  bool frozen;
  UNetConfig cfg;
  std::vector<double> history;
  UNetParameters<float> params;
};

CheckpointBody parse_checkpoint(const std::filesystem::path& path, uint8_t expected_kind) {
  std::vector<uint8_t> buf = read_file(path);
  if (buf.size() < 16) throw FormatError("truncated checkpoint");
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
  }
  uint64_t computed = fnv1a64(buf.data(), buf.size() - 8);
  if (stored != computed) throw ChecksumError("checkpoint content does not match its checksum");

  ByteReader r(buf.data(), buf.size() - 8);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "VCKP", 4) != 0) throw FormatError("magic (expected VCKP)");
  uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) throw FormatError("version (expected 1)");

  CheckpointBody body;
  body.kind = r.u8("kind");
  if (body.kind != expected_kind) throw FormatError("kind (wrong model type)");
  body.frozen = r.u8("frozen") != 0;
  body.cfg = read_net_config(r);
  uint32_t n_hist = r.u32("history.count");
  body.history.resize(n_hist);
  for (auto& h : body.history) h = r.f64("history");
  body.params = make_unet_parameters<float>(body.cfg);
  read_params(r, body.params);
  if (r.remaining() != 0) throw FormatError("params (trailing bytes)");
  return body;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SSNModel& model) {
  write_file(path, build_checkpoint(0, false, model.cfg, model.training_history, model.params));
}

void save_checkpoint(const std::filesystem::path& path, const SDNModel& model) {
  write_file(path, build_checkpoint(1, model.frozen, model.cfg, {}, model.params));
}

SSNModel load_ssn_checkpoint(const std::filesystem::path& path) {
  CheckpointBody body = parse_checkpoint(path, 0);
  SSNModel model;
  model.cfg = body.cfg;
  model.params = std::move(body.params);
  model.training_history = std::move(body.history);
  return model;
}

SDNModel load_sdn_checkpoint(const std::filesystem::path& path) {
  CheckpointBody body = parse_checkpoint(path, 1);
  SDNModel model;
  model.cfg = body.cfg;
  model.params = std::move(body.params);
  model.frozen = body.frozen;
  return model;
}

}  // namespace vseg

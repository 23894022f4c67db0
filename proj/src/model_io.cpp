// Model file layout (all integers little-endian):
//
//   "SPNF" | u32 version | u64 FNV-1a checksum of payload | u64 payload length | payload
//
// payload = f64 gate, then for each of the two nets: its NetworkSpec followed
// by every parameter tensor as (name, rank, extents, float32 values), then a
// u32-length-prefixed metadata string.

#include <bit>
#include <cstring>

#include "spoof/fsutil.hpp"
#include "spoof/spoofnet.hpp"

namespace spoof {

namespace {

using Kind = ModelFormatError::Kind;
constexpr std::uint8_t kMagic[4] = {'S', 'P', 'N', 'F'};
constexpr std::size_t kHeaderBytes = 24;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void size(std::size_t v) { u32(static_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t size() { return u32(); }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ModelFormatError(Kind::Truncated, "model file truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_extent(Writer& w, const Extent2& e) {
  w.size(e.h);
  w.size(e.w);
}

Extent2 read_extent(Reader& r) {
  Extent2 e;
  e.h = r.size();
  e.w = r.size();
  return e;
}

void write_spec(Writer& w, const NetworkSpec& spec) {
  w.size(spec.input_size);
  w.size(spec.input_channels);
  for (const auto& c : spec.conv_stack) {
    w.size(c.out_channels);
    write_extent(w, c.kernel);
    write_extent(w, c.stride);
    write_extent(w, c.padding);
  }
  write_extent(w, spec.pool.window);
  write_extent(w, spec.pool.stride);
  write_extent(w, spec.pool.padding);
  const auto& inc = spec.inception;
  for (auto v : {inc.b1_out, inc.b2_reduce, inc.b2_out, inc.b3_reduce, inc.b3_out, inc.b4_out})
    w.size(v);
  w.f64(spec.dropout);
  w.f64(spec.input_mean);
  w.f64(spec.input_scale);
}

NetworkSpec read_spec(Reader& r) {
  NetworkSpec spec;
  spec.input_size = r.size();
  spec.input_channels = r.size();
  for (auto& c : spec.conv_stack) {
    c.out_channels = r.size();
    c.kernel = read_extent(r);
    c.stride = read_extent(r);
    c.padding = read_extent(r);
  }
  spec.pool.window = read_extent(r);
  spec.pool.stride = read_extent(r);
  spec.pool.padding = read_extent(r);
  auto& inc = spec.inception;
  for (auto* v : {&inc.b1_out, &inc.b2_reduce, &inc.b2_out, &inc.b3_reduce, &inc.b3_out,
                  &inc.b4_out})
    *v = r.size();
  spec.dropout = r.f64();
  spec.input_mean = r.f64();
  spec.input_scale = r.f64();
  return spec;
}

void write_net(Writer& w, const SpoofNet<float>& net) {
  write_spec(w, net.spec());
  auto params = const_cast<SpoofNet<float>&>(net).params();
  w.size(params.size());
  for (const auto& p : params) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    w.u8(static_cast<std::uint8_t>(p.value->rank()));
    for (auto d : p.value->shape()) w.size(d);
    w.u8(4);
    for (float v : p.value->data()) w.f32(v);
  }
}

SpoofNet<float> read_net(Reader& r) {
  const NetworkSpec spec = read_spec(r);
  SpoofNet<float> net;
  try {
    net = SpoofNet<float>(spec);
  } catch (const std::exception& e) {
    throw ModelFormatError(Kind::Structure, std::string("invalid network spec: ") + e.what());
  }
  auto params = net.params();
  if (r.size() != params.size())
    throw ModelFormatError(Kind::Structure, "parameter count does not match the network spec");
  for (auto& p : params) {
    const std::string name = r.string(r.u16());
    if (name != p.name)
      throw ModelFormatError(Kind::Structure, "expected parameter " + p.name + ", found " + name);
    Shape shape(r.u8());
    for (auto& d : shape) d = r.size();
    if (shape != p.value->shape())
      throw ModelFormatError(Kind::Structure, "parameter " + name + " has shape " +
                                                  to_string(shape) + ", spec implies " +
                                                  to_string(p.value->shape()));
    if (r.u8() != 4) throw ModelFormatError(Kind::Structure, "unsupported element width");
    for (auto& v : p.value->data()) v = r.f32();
  }
  return net;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const CascadeModel& model) {
  Writer payload;
  payload.f64(model.gate);
  write_net(payload, model.net1);
  write_net(payload, model.net2);
  payload.size(model.metadata.size());
  payload.bytes(model.metadata);

  Writer out;
  for (auto b : kMagic) out.u8(b);
  out.u32(kModelFormatVersion);
  out.u64(fnv1a64(payload.buffer()));
  out.u64(payload.buffer().size());
  auto& buf = out.buffer();
  buf.insert(buf.end(), payload.buffer().begin(), payload.buffer().end());
  return std::move(buf);
}

CascadeModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw ModelFormatError(Kind::Truncated, "model file truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ModelFormatError(Kind::Magic, "not a model file (bad magic)");
  Reader header(bytes.subspan(4, kHeaderBytes - 4));
  const auto version = header.u32();
  if (version != kModelFormatVersion)
    throw ModelFormatError(Kind::Version, "model format version " + std::to_string(version) +
                                              " unsupported (expected " +
                                              std::to_string(kModelFormatVersion) + ")");
  const auto checksum = header.u64();
  const auto length = header.u64();
  const auto payload = bytes.subspan(kHeaderBytes);
  if (payload.size() < length) throw ModelFormatError(Kind::Truncated, "model file truncated");
  if (payload.size() > length)
    throw ModelFormatError(Kind::Structure, "trailing bytes after model payload");
  if (fnv1a64(payload) != checksum)
    throw ModelFormatError(Kind::Checksum, "model checksum mismatch");

  Reader r(payload);
  CascadeModel model;
  model.gate = r.f64();
  model.net1 = read_net(r);
  model.net2 = read_net(r);
  model.metadata = r.string(r.size());
  if (!r.done()) throw ModelFormatError(Kind::Structure, "unparsed bytes in model payload");
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(Kind::Structure, e.what());
  }
  return model;
}

void save_model(const CascadeModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

CascadeModel load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file_bytes(path));
}

}  // namespace spoof

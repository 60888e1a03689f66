#include "adaptraj/numcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::numcore {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw PersistenceError("checkpoint: truncated stream");
  }

 private:
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

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const ParameterSet& params) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  const auto& reg = params.registry();
  w.u32(static_cast<std::uint32_t>(reg.layer_count()));
  for (std::size_t l = 0; l < reg.layer_count(); ++l) {
    w.str(reg.layer_name(l));
    w.u32(static_cast<std::uint32_t>(reg.tensors_of(l).size()));
    for (const auto ti : reg.tensors_of(l)) {
      const auto& t = params.tensor(ti);
      w.str(t.name);
      w.u32(static_cast<std::uint32_t>(t.shape.size()));
      for (const auto d : t.shape) w.u64(d);
      for (const double v : t.values) w.f64(v);
    }
  }
  w.u64(fnv1a(w.bytes));
  return std::move(w.bytes);
}

ParameterSet deserialize_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) + 4 + 8) {
    throw PersistenceError("checkpoint: truncated stream");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw PersistenceError("checkpoint: bad magic");
  }
  Reader r(bytes.subspan(sizeof(kCheckpointMagic)));
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw PersistenceError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                           std::to_string(kCheckpointVersion) + ")");
  }
  ParameterSet out;
  const auto layers = r.u32();
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto layer_name = r.str();
    const auto count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto name = r.str();
      const auto rank = r.u32();
      if (rank > 8) throw PersistenceError("checkpoint: implausible rank for '" + name + "'");
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
      const auto volume = shape_volume(shape);
      r.need(volume * 8);
      const auto index = out.add(layer_name, name, shape);
      for (auto& v : out.tensor(index).values) v = r.f64();
    }
  }
  const std::size_t body = sizeof(kCheckpointMagic) + r.position();
  const auto stored = r.u64();
  if (stored != fnv1a(bytes.first(body))) throw PersistenceError("checkpoint: checksum mismatch");
  if (body + 8 != bytes.size()) throw PersistenceError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  const auto bytes = serialize_params(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PersistenceError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw PersistenceError("write failed for '" + path.string() + "'");
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PersistenceError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

void assign_values(ParameterSet& target, const ParameterSet& source) {
  if (!target.same_layout(source)) throw PersistenceError("checkpoint: layout does not match model");
  for (std::size_t i = 0; i < target.tensor_count(); ++i) {
    target.tensor(i).values = source.tensor(i).values;
  }
}

}  // namespace adaptraj::numcore

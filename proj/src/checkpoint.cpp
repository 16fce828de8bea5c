#include "sfc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace sfc {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'C', 'K'};

void le_push(std::vector<uint8_t>& out, uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const std::vector<uint8_t>& buf;
  const std::string& path;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError("'" + path + "': " + msg + " at byte " + std::to_string(pos));
  }
  uint64_t le(int bytes) {
    if (pos + bytes > buf.size()) fail("truncated");
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += bytes;
    return v;
  }
  const uint8_t* raw(size_t n) {
    if (pos + n > buf.size()) fail("truncated");
    const uint8_t* p = buf.data() + pos;
    pos += n;
    return p;
  }
};

size_t dtype_size(uint8_t dtype) {
  switch (dtype) {
    case kDtypeF32: return 4;
    case kDtypeF64: return 8;
    case kDtypeU8: return 1;
    case kDtypeI64: return 8;
    default: throw DataError("checkpoint: unknown dtype code " + std::to_string(dtype));
  }
}

template <typename T, typename U>
void put_typed(Checkpoint& c, const std::string& name, const T* v, std::vector<uint32_t> dims,
               uint8_t dtype) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = dtype;
  e.dims = std::move(dims);
  const size_t n = e.count();
  e.bytes.reserve(n * sizeof(T));
  for (size_t i = 0; i < n; ++i) le_push(e.bytes, static_cast<uint64_t>(std::bit_cast<U>(v[i])), sizeof(T));
  c.entries.push_back(std::move(e));
}

template <typename T, typename U>
std::vector<T> get_typed(const Checkpoint& c, const std::string& name, uint8_t dtype) {
  const CheckpointEntry& e = c.at(name);
  if (e.dtype != dtype)
    throw DataError("checkpoint: entry '" + name + "' has dtype " + std::to_string(e.dtype));
  const size_t n = e.count();
  std::vector<T> out(n);
  for (size_t i = 0; i < n; ++i) {
    U raw = 0;
    for (size_t b = 0; b < sizeof(T); ++b)
      raw |= static_cast<U>(e.bytes[i * sizeof(T) + b]) << (8 * b);
    out[i] = std::bit_cast<T>(raw);
  }
  return out;
}

}  // namespace

size_t CheckpointEntry::count() const {
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

void Checkpoint::put_f32(const std::string& name, const float* v, std::vector<uint32_t> dims) {
  put_typed<float, uint32_t>(*this, name, v, std::move(dims), kDtypeF32);
}
void Checkpoint::put_f64(const std::string& name, const double* v, std::vector<uint32_t> dims) {
  put_typed<double, uint64_t>(*this, name, v, std::move(dims), kDtypeF64);
}
void Checkpoint::put_u8(const std::string& name, const uint8_t* v, std::vector<uint32_t> dims) {
  put_typed<uint8_t, uint8_t>(*this, name, v, std::move(dims), kDtypeU8);
}
void Checkpoint::put_i64(const std::string& name, const int64_t* v, std::vector<uint32_t> dims) {
  put_typed<int64_t, uint64_t>(*this, name, v, std::move(dims), kDtypeI64);
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const CheckpointEntry& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  const CheckpointEntry* e = find(name);
  if (!e) throw DataError("checkpoint: missing entry '" + name + "'");
  return *e;
}

std::vector<float> Checkpoint::f32(const std::string& name) const {
  return get_typed<float, uint32_t>(*this, name, kDtypeF32);
}
std::vector<double> Checkpoint::f64(const std::string& name) const {
  return get_typed<double, uint64_t>(*this, name, kDtypeF64);
}
std::vector<uint8_t> Checkpoint::u8(const std::string& name) const {
  return get_typed<uint8_t, uint8_t>(*this, name, kDtypeU8);
}
std::vector<int64_t> Checkpoint::i64(const std::string& name) const {
  return get_typed<int64_t, uint64_t>(*this, name, kDtypeI64);
}

uint32_t crc32(const uint8_t* data, size_t n) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  le_push(buf, ckpt.version, 4);
  le_push(buf, ckpt.config_hash, 8);
  le_push(buf, ckpt.entries.size(), 4);
  for (const CheckpointEntry& e : ckpt.entries) {
    if (e.name.size() > 0xFFFF) throw ConfigError("checkpoint: entry name too long");
    if (e.bytes.size() != e.count() * dtype_size(e.dtype))
      throw ConfigError("checkpoint: entry '" + e.name + "' payload does not match dims");
    le_push(buf, e.name.size(), 2);
    buf.insert(buf.end(), e.name.begin(), e.name.end());
    buf.push_back(e.dtype);
    buf.push_back(static_cast<uint8_t>(e.dims.size()));
    for (uint32_t d : e.dims) le_push(buf, d, 4);
    le_push(buf, e.bytes.size(), 8);
    buf.insert(buf.end(), e.bytes.begin(), e.bytes.end());
  }
  le_push(buf, crc32(buf.data(), buf.size()), 4);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("'" + tmp + "': cannot open for writing");
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("'" + tmp + "': write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("'" + path + "': cannot open");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf, path};
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw DataError("'" + path + "': not a checkpoint (bad magic)");
  if (buf.size() < 8) r.fail("truncated");
  const uint32_t stored_crc = static_cast<uint32_t>(
      Reader{buf, path, buf.size() - 4}.le(4));
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw DataError("'" + path + "': CRC mismatch, file is corrupt");

  r.pos = 4;
  Checkpoint c;
  c.version = static_cast<uint32_t>(r.le(4));
  if (c.version != 1)
    throw DataError("'" + path + "': unsupported format version " + std::to_string(c.version));
  c.config_hash = r.le(8);
  const size_t count = r.le(4);
  for (size_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const size_t name_len = r.le(2);
    const uint8_t* np = r.raw(name_len);
    e.name.assign(reinterpret_cast<const char*>(np), name_len);
    e.dtype = static_cast<uint8_t>(r.le(1));
    const size_t rank = r.le(1);
    for (size_t d = 0; d < rank; ++d) e.dims.push_back(static_cast<uint32_t>(r.le(4)));
    const size_t nbytes = r.le(8);
    if (nbytes != e.count() * dtype_size(e.dtype)) r.fail("entry size mismatch");
    const uint8_t* pp = r.raw(nbytes);
    e.bytes.assign(pp, pp + nbytes);
    c.entries.push_back(std::move(e));
  }
  if (r.pos != buf.size() - 4) r.fail("trailing bytes before CRC");
  return c;
}

}  // namespace sfc

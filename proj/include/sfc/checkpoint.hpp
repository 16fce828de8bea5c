#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfc/errors.hpp"

namespace sfc {

enum : uint8_t { kDtypeF32 = 0, kDtypeF64 = 1, kDtypeU8 = 2, kDtypeI64 = 3 };

struct CheckpointEntry {
  std::string name;
  uint8_t dtype = kDtypeF32;
  std::vector<uint32_t> dims;
  std::vector<uint8_t> bytes;  // little-endian payload

  size_t count() const;  // element count implied by dims
};

// Versioned binary container: magic "SFCK", format version, config hash, an
// entry table, and a trailing CRC32 over everything before it. Writes go to a
// temp file first and are renamed into place, so a killed run never leaves a
// loadable partial file.
struct Checkpoint {
  uint32_t version = 1;
  uint64_t config_hash = 0;
  std::vector<CheckpointEntry> entries;

  void put_f32(const std::string& name, const float* v, std::vector<uint32_t> dims);
  void put_f64(const std::string& name, const double* v, std::vector<uint32_t> dims);
  void put_u8(const std::string& name, const uint8_t* v, std::vector<uint32_t> dims);
  void put_i64(const std::string& name, const int64_t* v, std::vector<uint32_t> dims);

  const CheckpointEntry* find(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;  // DataError if absent

  std::vector<float> f32(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<uint8_t> u8(const std::string& name) const;
  std::vector<int64_t> i64(const std::string& name) const;
};

uint32_t crc32(const uint8_t* data, size_t n);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sfc

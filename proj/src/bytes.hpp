#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "speckle/error.hpp"

namespace speckle::bytes {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32_z(::crc32_z(0L, Z_NULL, 0), data, n));
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  template <typename T>
  void put_array(const T* data, std::size_t n) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n * sizeof(T));
  }
  /// Appends the CRC32 of everything written so far and returns the buffer.
  std::vector<std::uint8_t> finish() {
    put(crc32(out_.data(), out_.size()));
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
};

/// Bounds-checked cursor; running past the end is a CorruptionError.
class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  std::string get_string(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  template <typename T>
  void get_array(T* out, std::size_t n) {
    if (n > (size_ - pos_) / sizeof(T)) throw CorruptionError("unexpected end of data");
    std::memcpy(out, take(n * sizeof(T)), n * sizeof(T));
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw CorruptionError("unexpected end of data");
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

/// Checks magic, version and trailing CRC of a container; returns a reader over the body
/// (after magic and version, before the CRC).
inline Reader open_container(const std::vector<std::uint8_t>& bytes, std::string_view magic,
                             std::uint32_t version) {
  if (bytes.size() >= magic.size() && std::memcmp(bytes.data(), magic.data(), magic.size()) != 0)
    throw FormatError("not a " + std::string(magic) + " file");
  const std::size_t head = magic.size() + sizeof(std::uint32_t);
  if (bytes.size() < head + sizeof(std::uint32_t)) throw CorruptionError("file is truncated");
  std::uint32_t file_version;
  std::memcpy(&file_version, bytes.data() + magic.size(), sizeof file_version);
  if (file_version != version)
    throw FormatError("unsupported " + std::string(magic) + " version " + std::to_string(file_version));
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (crc32(bytes.data(), body) != stored) throw CorruptionError("checksum mismatch");
  return Reader(bytes.data() + head, body - head);
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace speckle::bytes

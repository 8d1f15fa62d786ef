#pragma once

// Dataset directory format.
//
//   <dir>/manifest.json   format version, split tag, class space counts and,
//                         per item: id, record file, H, W, D, has_label, has_saliency
//   <dir>/<id>.ncds       "NCDS" | u32 version | u32 H | u32 W | u32 D
//                         | f32 features (row-major, pixel-major) | [u8 labels] | [u8 saliency]
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ncd/core.hpp"

namespace ncd::io {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr char kRecordMagic[4] = {'N', 'C', 'D', 'S'};
inline constexpr const char* kManifestName = "manifest.json";

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Little-endian byte sink/source used by every binary format in the project.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void f32(float v);
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void magic(const char (&m)[4]);
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint8_t u8();
  std::uint32_t u32();
  float f32();
  bool magic(const char (&m)[4]);
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// 64-bit FNV-1a; stable across platforms, used for cache keys.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace ncd::io

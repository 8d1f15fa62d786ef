#include "ncd/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace ncd::io {

namespace fs = std::filesystem;
using nlohmann::json;

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::magic(const char (&m)[4]) {
  for (char c : m) bytes_.push_back(static_cast<std::uint8_t>(c));
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw IoError("unexpected end of data");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

bool ByteReader::magic(const char (&m)[4]) {
  need(4);
  bool ok = std::memcmp(data_.data() + pos_, m, 4) == 0;
  pos_ += 4;
  return ok;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const fs::path& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace {

std::string record_name(const std::string& id) { return id + ".ncds"; }

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..")
    throw Error("image id '" + id + "' is not usable as a file name");
}

std::vector<std::uint8_t> encode_record(const DatasetItem& item) {
  const auto& f = item.features;
  ByteWriter w;
  w.magic(kRecordMagic);
  w.u32(kDatasetFormatVersion);
  w.u32(static_cast<std::uint32_t>(f.height()));
  w.u32(static_cast<std::uint32_t>(f.width()));
  w.u32(static_cast<std::uint32_t>(f.dim()));
  for (float v : f.values()) w.f32(v);
  if (item.labels) w.raw(item.labels->values());
  if (item.saliency) w.raw(item.saliency->values());
  return w.bytes();
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  // Everything is validated and encoded before the first byte hits disk.
  dataset.validate();
  std::vector<std::vector<std::uint8_t>> records;
  records.reserve(dataset.size());
  json items = json::array();
  for (const auto& item : dataset.items) {
    check_id(item.id);
    records.push_back(encode_record(item));
    items.push_back({{"id", item.id},
                     {"file", record_name(item.id)},
                     {"height", item.features.height()},
                     {"width", item.features.width()},
                     {"dim", item.features.dim()},
                     {"has_label", item.labels.has_value()},
                     {"has_saliency", item.saliency.has_value()}});
  }
  json manifest = {{"format", "ncds-dataset"},
                   {"version", kDatasetFormatVersion},
                   {"split_tag", to_string(dataset.split)},
                   {"n_base", dataset.class_space.n_base},
                   {"n_novel", dataset.class_space.n_novel},
                   {"novel_head_size", dataset.class_space.novel_head_size},
                   {"items", std::move(items)}};

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    write_file(dir / record_name(dataset.items[i].id), records[i]);
  write_text(dir / kManifestName, manifest.dump(1) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / kManifestName));
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest in " + dir.string() + ": " + e.what());
  }

  Dataset ds;
  std::vector<std::tuple<std::string, std::string, int, int, int, bool, bool>> entries;
  try {
    if (manifest.at("format").get<std::string>() != "ncds-dataset")
      throw IoError("not a dataset manifest: " + dir.string());
    auto version = manifest.at("version").get<std::uint32_t>();
    if (version != kDatasetFormatVersion)
      throw IoError("unsupported dataset version " + std::to_string(version) + " in " + dir.string());
    ds.split = split_tag_from_string(manifest.at("split_tag").get<std::string>());
    ds.class_space = ClassSpace{manifest.at("n_base").get<int>(), manifest.at("n_novel").get<int>(),
                                manifest.at("novel_head_size").get<int>()};
    for (const auto& e : manifest.at("items"))
      entries.emplace_back(e.at("id").get<std::string>(), e.at("file").get<std::string>(),
                           e.at("height").get<int>(), e.at("width").get<int>(), e.at("dim").get<int>(),
                           e.at("has_label").get<bool>(), e.at("has_saliency").get<bool>());
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest in " + dir.string() + ": " + e.what());
  }

  ds.items.reserve(entries.size());
  for (const auto& [id, file, h, w, d, has_label, has_sal] : entries) {
    check_id(id);
    if (h < 1 || w < 1 || d < 1) throw IoError("manifest entry '" + id + "' has invalid shape");
    auto bytes = read_file(dir / file);
    const std::size_t px = static_cast<std::size_t>(h) * w;
    const std::size_t expected = 20 + px * d * 4 + (has_label ? px : 0) + (has_sal ? px : 0);
    if (bytes.size() != expected)
      throw IoError("corrupt record for image '" + id + "': expected " + std::to_string(expected) +
                    " bytes, found " + std::to_string(bytes.size()));
    ByteReader r(bytes);
    if (!r.magic(kRecordMagic)) throw IoError("corrupt record for image '" + id + "': bad magic");
    if (r.u32() != kDatasetFormatVersion)
      throw IoError("record for image '" + id + "' has an unsupported version");
    auto rh = r.u32(), rw = r.u32(), rd = r.u32();
    if (rh != static_cast<std::uint32_t>(h) || rw != static_cast<std::uint32_t>(w) ||
        rd != static_cast<std::uint32_t>(d))
      throw IoError("shape mismatch between manifest and record for image '" + id + "'");

    std::vector<float> feats(px * d);
    for (auto& v : feats) v = r.f32();
    DatasetItem item{id, FeatureMap(h, w, d, std::move(feats)), std::nullopt, std::nullopt};
    if (has_label) {
      std::vector<ClassId> labels(px);
      for (auto& v : labels) v = r.u8();
      item.labels = LabelMap(h, w, std::move(labels));
    }
    if (has_sal) {
      std::vector<std::uint8_t> sal(px);
      for (auto& v : sal) v = r.u8();
      item.saliency = SaliencyMask(h, w, std::move(sal));
    }
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

}  // namespace ncd::io

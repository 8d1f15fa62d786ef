#include <doctest.h>

#include <json.hpp>

#include "ncd/io.hpp"
#include "support.hpp"

using namespace ncd;
using ncd::testing::TempDir;

namespace {

Dataset sample_dataset() {
  std::mt19937_64 rng(3);
  Dataset ds{SplitTag::novel, ClassSpace::exact(3, 2), {}};
  for (int i = 0; i < 4; ++i) {
    DatasetItem item;
    item.id = "img_" + std::to_string(i);
    item.features = testing::random_features(rng, 3 + i, 5, 4);
    if (i % 2 == 0) item.labels = testing::random_labels(rng, 3 + i, 5, 5);
    item.saliency = testing::random_mask<SaliencyMask>(rng, 3 + i, 5, 0.4);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

TEST_CASE("little-endian encoding") {
  io::ByteWriter w;
  w.u32(0x01020304u);
  w.f32(1.0f);
  w.magic(io::kRecordMagic);
  const std::vector<std::uint8_t> expect{0x04, 0x03, 0x02, 0x01, 0x00, 0x00, 0x80, 0x3f, 'N', 'C', 'D', 'S'};
  CHECK(w.bytes() == expect);

  io::ByteReader r(w.bytes());
  CHECK(r.u32() == 0x01020304u);
  CHECK(r.f32() == 1.0f);
  CHECK(r.magic(io::kRecordMagic));
  CHECK(r.remaining() == 0);
  CHECK_THROWS_AS(r.u8(), IoError);
}

TEST_CASE("fnv1a reference values") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("dataset round trip") {
  TempDir tmp("io");
  const auto ds = sample_dataset();
  io::write_dataset(ds, tmp.path() / "d");
  const auto back = io::read_dataset(tmp.path() / "d");
  CHECK(back == ds);

  // Manifest is plain JSON with the documented fields.
  const auto manifest = nlohmann::json::parse(io::read_text(tmp.path() / "d" / io::kManifestName));
  CHECK(manifest.at("format") == "ncds-dataset");
  CHECK(manifest.at("split_tag") == "novel");
  CHECK(manifest.at("items").size() == 4);
  CHECK(manifest.at("items")[1].at("has_label") == false);
  CHECK(manifest.at("items")[1].at("height") == 4);
}

TEST_CASE("record byte layout") {
  TempDir tmp("io");
  Dataset ds{SplitTag::val, ClassSpace::exact(2, 1), {}};
  ds.items.push_back({"x", FeatureMap(1, 2, 1, {1.0f, -2.0f}), LabelMap(1, 2, std::vector<ClassId>{0, 2}), std::nullopt});
  io::write_dataset(ds, tmp.path());
  const auto bytes = io::read_file(tmp.path() / "x.ncds");
  const std::vector<std::uint8_t> expect{'N', 'C', 'D', 'S', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0,
                                         0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0, 0, 2};
  CHECK(bytes == expect);
}

TEST_CASE("read errors name the problem") {
  TempDir tmp("io");
  const auto ds = sample_dataset();
  const auto dir = tmp.path() / "d";
  io::write_dataset(ds, dir);

  SUBCASE("missing directory") { CHECK_THROWS_AS(io::read_dataset(tmp.path() / "nope"), IoError); }

  SUBCASE("unsupported version") {
    auto m = nlohmann::json::parse(io::read_text(dir / io::kManifestName));
    m["version"] = 99;
    io::write_text(dir / io::kManifestName, m.dump());
    CHECK_THROWS_WITH_AS(io::read_dataset(dir), doctest::Contains("version 99"), IoError);
  }

  SUBCASE("truncated record names the image") {
    auto bytes = io::read_file(dir / "img_2.ncds");
    bytes.resize(bytes.size() - 3);
    io::write_file(dir / "img_2.ncds", bytes);
    CHECK_THROWS_WITH_AS(io::read_dataset(dir), doctest::Contains("img_2"), IoError);
  }

  SUBCASE("shape disagreement between manifest and record") {
    auto m = nlohmann::json::parse(io::read_text(dir / io::kManifestName));
    m["items"][0]["height"] = 5;
    m["items"][0]["width"] = 3;
    io::write_text(dir / io::kManifestName, m.dump());
    CHECK_THROWS_AS(io::read_dataset(dir), IoError);
  }

  SUBCASE("wrong magic") {
    auto bytes = io::read_file(dir / "img_0.ncds");
    bytes[0] = 'X';
    io::write_file(dir / "img_0.ncds", bytes);
    CHECK_THROWS_WITH_AS(io::read_dataset(dir), doctest::Contains("img_0"), IoError);
  }
}

TEST_CASE("invalid datasets are not written") {
  TempDir tmp("io");
  auto ds = sample_dataset();
  ds.items[1].id = ds.items[0].id;
  CHECK_THROWS(io::write_dataset(ds, tmp.path() / "d"));
  CHECK_FALSE(std::filesystem::exists(tmp.path() / "d" / io::kManifestName));
}

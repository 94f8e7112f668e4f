#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "spml/score_map.hpp"
#include "spml/seed.hpp"

using namespace spml;
namespace fs = std::filesystem;

namespace {

SpatialScoreMap sample_map(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t c) {
  Rng rng(seed);
  SpatialScoreMap map(h, w, c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) map.at(y, x, k) = static_cast<float>(rng.uniform(0.0, 3.0));
    }
  }
  return map;
}

void set_u32(std::vector<std::uint8_t>& bytes, std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::size_t format_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_score_map(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("decode accepted malformed bytes");
  return 0;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("SSM1 header layout") {
  SpatialScoreMap map(2, 3, 4);
  map.at(1, 2, 3) = 1.5f;
  const auto bytes = encode_score_map(map);
  REQUIRE(bytes.size() == 16 + 4 * 24);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SSM1");
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 4);
  // Last value, little endian.
  const std::uint32_t last = std::bit_cast<std::uint32_t>(1.5f);
  CHECK(bytes[bytes.size() - 4] == (last & 0xFF));
  CHECK(bytes.back() == (last >> 24));
}

TEST_CASE("SSM1 round trip is bit exact") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const SpatialScoreMap map =
        sample_map(seed, 1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(12));
    const auto bytes = encode_score_map(map);
    const SpatialScoreMap back = decode_score_map(bytes);
    CHECK(back == map);
    CHECK(encode_score_map(back) == bytes);
  }
  // Denormals and zero survive unchanged.
  SpatialScoreMap tiny(1, 1, 2);
  tiny.at(0, 0, 0) = std::numeric_limits<float>::denorm_min();
  CHECK(decode_score_map(encode_score_map(tiny)) == tiny);
}

TEST_CASE("SSM1 decoding reports the offending byte offset") {
  const auto good = encode_score_map(sample_map(1, 2, 2, 3));

  auto bad_magic = good;
  bad_magic[2] = 'X';
  CHECK(format_offset(bad_magic) == 0);
  CHECK(format_offset({}) == 0);

  const std::vector<std::uint8_t> short_header(good.begin(), good.begin() + 10);
  CHECK(format_offset(short_header) == 10);

  auto zero_h = good;
  set_u32(zero_h, 4, 0);
  CHECK(format_offset(zero_h) == 4);
  auto zero_w = good;
  set_u32(zero_w, 8, 0);
  CHECK(format_offset(zero_w) == 8);
  auto zero_c = good;
  set_u32(zero_c, 12, 0);
  CHECK(format_offset(zero_c) == 12);

  const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 3);
  CHECK(format_offset(truncated) == truncated.size());

  auto trailing = good;
  trailing.push_back(0);
  CHECK(format_offset(trailing) == good.size());

  auto negative = good;
  set_u32(negative, 16 + 4 * 5, std::bit_cast<std::uint32_t>(-0.25f));
  CHECK(format_offset(negative) == 16 + 4 * 5);

  auto nan = good;
  set_u32(nan, 16 + 4 * 7, std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN()));
  CHECK(format_offset(nan) == 16 + 4 * 7);

  auto inf = good;
  set_u32(inf, 16, std::bit_cast<std::uint32_t>(std::numeric_limits<float>::infinity()));
  CHECK(format_offset(inf) == 16);
}

TEST_CASE("in-memory maps reject invalid evidence") {
  CHECK_THROWS_AS(SpatialScoreMap(0, 2, 2), DomainError);
  CHECK_THROWS_AS(SpatialScoreMap(1, 1, 2, std::vector<float>{1.0f}), DomainError);
  CHECK_THROWS_AS(SpatialScoreMap(1, 1, 2, std::vector<float>{1.0f, -1.0f}), DomainError);
  const SpatialScoreMap m(1, 2, 2, std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
  const auto totals = m.class_totals();
  CHECK(totals[0] == 4.0);
  CHECK(totals[1] == 6.0);
}

TEST_CASE("files, sidecars and directories") {
  TempDir dir("spml_score_map_test");
  const SpatialScoreMap a = sample_map(3, 3, 2, 4);
  const SpatialScoreMap b = sample_map(4, 3, 2, 4);
  save_score_map(dir.path / "b.ssm1", b);
  save_score_map(dir.path / "a.ssm1", a);
  CHECK(load_score_map(dir.path / "a.ssm1") == a);

  CHECK_FALSE(load_sidecar(dir.path / "a.ssm1").has_value());
  save_sidecar(dir.path / "a.ssm1", ScoreMapMetadata{"img-a", {"w", "x", "y", "z"}, "synthetic"});
  const auto meta = load_sidecar(dir.path / "a.ssm1");
  REQUIRE(meta.has_value());
  CHECK(meta->image_id == "img-a");
  CHECK(meta->class_names.size() == 4);
  CHECK(meta->source_model == "synthetic");
  CHECK(sidecar_path(dir.path / "a.ssm1").filename() == "a.ssm1.json");

  // Without a manifest: lexicographic order.
  auto maps = load_score_map_directory(dir.path);
  REQUIRE(maps.size() == 2);
  CHECK(maps[0] == a);
  CHECK(maps[1] == b);

  // A manifest fixes the order.
  std::ofstream(dir.path / "manifest.json") << R"({"maps": ["b.ssm1", "a.ssm1"]})";
  maps = load_score_map_directory(dir.path);
  REQUIRE(maps.size() == 2);
  CHECK(maps[0] == b);
  CHECK(maps[1] == a);

  // Corrupt file: the offset survives the path prefix.
  std::ofstream(dir.path / "bad.ssm1", std::ios::binary) << "SSM1";
  try {
    load_score_map(dir.path / "bad.ssm1");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
    CHECK(std::string(e.what()).find("bad.ssm1") != std::string::npos);
  }
  CHECK_THROWS(load_score_map(dir.path / "missing.ssm1"));
}

#include "spml/score_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace spml {
namespace {

constexpr std::size_t kHeaderBytes = 16;
constexpr char kMagic[4] = {'S', 'S', 'M', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw DomainError(std::string("encode_score_map: ") + what + " too large");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

SpatialScoreMap::SpatialScoreMap(std::size_t height, std::size_t width, std::size_t classes)
    : height_(height), width_(width), classes_(classes), evidence_(height * width * classes, 0.0f) {
  if (height == 0 || width == 0 || classes == 0) {
    throw DomainError("SpatialScoreMap: dimensions must be positive");
  }
}

SpatialScoreMap::SpatialScoreMap(std::size_t height, std::size_t width, std::size_t classes,
                                 std::vector<float> evidence)
    : height_(height), width_(width), classes_(classes), evidence_(std::move(evidence)) {
  if (height == 0 || width == 0 || classes == 0) {
    throw DomainError("SpatialScoreMap: dimensions must be positive");
  }
  if (evidence_.size() != height * width * classes) {
    throw DomainError("SpatialScoreMap: evidence size does not match H*W*C");
  }
  for (float v : evidence_) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw DomainError("SpatialScoreMap: evidence must be finite and nonnegative");
    }
  }
}

std::vector<double> SpatialScoreMap::class_totals() const {
  std::vector<double> totals(classes_, 0.0);
  for (std::size_t i = 0; i < evidence_.size(); ++i) totals[i % classes_] += evidence_[i];
  return totals;
}

std::vector<std::uint8_t> encode_score_map(const SpatialScoreMap& map) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * map.evidence().size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, checked_u32(map.height(), "height"));
  put_u32(out, checked_u32(map.width(), "width"));
  put_u32(out, checked_u32(map.class_count(), "class count"));
  for (float v : map.evidence()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

SpatialScoreMap decode_score_map(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("SSM1: bad magic", 0);
  }
  if (bytes.size() < kHeaderBytes) throw FormatError("SSM1: truncated header", bytes.size());
  const std::uint32_t h = get_u32(bytes.data() + 4);
  const std::uint32_t w = get_u32(bytes.data() + 8);
  const std::uint32_t c = get_u32(bytes.data() + 12);
  if (h == 0) throw FormatError("SSM1: height must be positive", 4);
  if (w == 0) throw FormatError("SSM1: width must be positive", 8);
  if (c == 0) throw FormatError("SSM1: class count must be positive", 12);
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * c;
  const std::uint64_t expected = kHeaderBytes + 4 * count;
  if (bytes.size() < expected) throw FormatError("SSM1: truncated payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("SSM1: trailing bytes after payload", expected);
  std::vector<float> evidence(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t offset = kHeaderBytes + 4 * i;
    const float v = std::bit_cast<float>(get_u32(bytes.data() + offset));
    if (!std::isfinite(v)) throw FormatError("SSM1: non-finite evidence", offset);
    if (v < 0.0f) throw FormatError("SSM1: negative evidence", offset);
    evidence[i] = v;
  }
  return SpatialScoreMap(h, w, c, std::move(evidence));
}

void save_score_map(const std::filesystem::path& path, const SpatialScoreMap& map) {
  const auto bytes = encode_score_map(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SpatialScoreMap load_score_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_score_map(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& map_path) {
  return std::filesystem::path(map_path.string() + ".json");
}

void save_sidecar(const std::filesystem::path& map_path, const ScoreMapMetadata& meta) {
  nlohmann::json j = {{"image_id", meta.image_id},
                      {"class_names", meta.class_names},
                      {"source_model", meta.source_model}};
  std::ofstream out(sidecar_path(map_path));
  if (!out) throw std::runtime_error("cannot write sidecar for " + map_path.string());
  out << j.dump(2) << '\n';
}

std::optional<ScoreMapMetadata> load_sidecar(const std::filesystem::path& map_path) {
  std::ifstream in(sidecar_path(map_path));
  if (!in) return std::nullopt;
  const nlohmann::json j = nlohmann::json::parse(in);
  ScoreMapMetadata meta;
  meta.image_id = j.value("image_id", std::string{});
  meta.class_names = j.value("class_names", std::vector<std::string>{});
  meta.source_model = j.value("source_model", std::string{});
  return meta;
}

std::vector<SpatialScoreMap> load_score_map_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  const auto manifest = dir / "manifest.json";
  if (std::filesystem::exists(manifest)) {
    std::ifstream in(manifest);
    const nlohmann::json j = nlohmann::json::parse(in);
    if (!j.contains("maps")) throw std::runtime_error(manifest.string() + ": missing \"maps\"");
    for (const auto& name : j.at("maps")) files.push_back(dir / name.get<std::string>());
  } else {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ssm1") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  }
  std::vector<SpatialScoreMap> maps;
  maps.reserve(files.size());
  for (const auto& f : files) maps.push_back(load_score_map(f));
  return maps;
}

}  // namespace spml

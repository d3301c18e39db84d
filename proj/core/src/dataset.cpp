#include "textcond/dataset.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"

namespace textcond {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<char, 4> kFeatureMagic = {'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr int kManifestVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kMissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

FeatureStore::FeatureStore(std::size_t count, std::size_t dim, std::vector<float> values)
    : count_(count), dim_(dim), values_(std::move(values)) {
  if (count == 0 || dim == 0) throw std::invalid_argument("FeatureStore: count and dim must be >= 1");
  if (values_.size() != count * dim) throw std::invalid_argument("FeatureStore: size != count * dim");
  for (float v : values_) {
    if (!std::isfinite(v)) throw NumericError("FeatureStore: non-finite feature value");
  }
}

std::span<const float> FeatureStore::row(std::size_t index) const {
  if (index >= count_) throw std::invalid_argument("FeatureStore::row: index out of range");
  return {values_.data() + index * dim_, dim_};
}

Vector FeatureStore::vector(std::size_t index) const {
  const auto r = row(index);
  return Vector(r.begin(), r.end());
}

void Dataset::validate() const {
  const std::size_t v = vocab.size();
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const auto& ex = examples[e];
    if (ex.feature_id >= features.count()) {
      throw FormatError(FormatError::Kind::kIdOutOfRange,
                        "example " + std::to_string(e) + ": feature_id " +
                            std::to_string(ex.feature_id) + " >= feature count " +
                            std::to_string(features.count()));
    }
    const auto& ids = ex.token_ids;
    if (ids.size() < 2 || ids.front() != kStartId || ids.back() != kStopId) {
      throw std::invalid_argument("example " + std::to_string(e) + ": caption must be START ... STOP");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= v) {
        throw FormatError(FormatError::Kind::kIdOutOfRange,
                          "example " + std::to_string(e) + ": token id out of range");
      }
      if (i > 0 && ids[i] == kStartId) {
        throw std::invalid_argument("example " + std::to_string(e) + ": interior START");
      }
    }
  }
}

void write_feature_file(const fs::path& path, const FeatureStore& store) {
  std::string bytes(kFeatureMagic.begin(), kFeatureMagic.end());
  put_u32(bytes, kFeatureVersion);
  put_u32(bytes, static_cast<std::uint32_t>(store.count()));
  put_u32(bytes, static_cast<std::uint32_t>(store.dim()));
  bytes.reserve(bytes.size() + 4 * store.values().size());
  for (float f : store.values()) put_u32(bytes, std::bit_cast<std::uint32_t>(f));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kMissingFile, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FeatureStore read_feature_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16) {
    throw FormatError(FormatError::Kind::kMalformed, path.string() + ": truncated feature header");
  }
  if (std::memcmp(p, kFeatureMagic.data(), 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, path.string() + ": bad magic, expected FEAT");
  }
  const std::uint32_t version = get_u32(p + 4);
  if (version != kFeatureVersion) {
    throw FormatError(FormatError::Kind::kBadVersion,
                      path.string() + ": unsupported feature file version " + std::to_string(version));
  }
  const std::size_t count = get_u32(p + 8);
  const std::size_t dim = get_u32(p + 12);
  if (count == 0 || dim == 0 || bytes.size() != 16 + 4 * count * dim) {
    throw FormatError(FormatError::Kind::kDimMismatch,
                      path.string() + ": payload size does not match count x dim");
  }
  std::vector<float> values(count * dim);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(p + 16 + 4 * i));
  }
  try {
    return FeatureStore(count, dim, std::move(values));
  } catch (const NumericError& e) {
    throw FormatError(FormatError::Kind::kMalformed, path.string() + ": " + e.what());
  }
}

Dataset load_dataset(const fs::path& manifest_path) {
  const std::string text = read_file(manifest_path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed,
                      manifest_path.string() + ": invalid JSON: " + e.what());
  }

  Dataset ds;
  try {
    const int version = doc.at("version").get<int>();
    if (version != kManifestVersion) {
      throw FormatError(FormatError::Kind::kBadVersion,
                        manifest_path.string() + ": unsupported manifest version " +
                            std::to_string(version));
    }
    const auto words = doc.at("vocab").at("words").get<std::vector<std::string>>();
    ds.vocab = Vocabulary(words);

    const fs::path feature_path = manifest_path.parent_path() / doc.at("feature_file").get<std::string>();
    ds.features = read_feature_file(feature_path);
    if (doc.contains("feature_dim") && doc["feature_dim"].get<std::size_t>() != ds.features.dim()) {
      throw FormatError(FormatError::Kind::kDimMismatch,
                        manifest_path.string() + ": feature_dim " +
                            std::to_string(doc["feature_dim"].get<std::size_t>()) +
                            " disagrees with feature file dim " + std::to_string(ds.features.dim()));
    }

    for (const auto& item : doc.at("examples")) {
      const auto tokens = item.at("tokens").get<std::vector<std::string>>();
      const auto fid = item.at("feature_id").get<long long>();
      if (fid < 0) {
        throw FormatError(FormatError::Kind::kIdOutOfRange, manifest_path.string() + ": negative feature_id");
      }
      ds.examples.push_back({static_cast<std::size_t>(fid), encode_caption(ds.vocab, tokens)});
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, manifest_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::kMalformed, manifest_path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& manifest_path,
                  const std::string& feature_file_name) {
  dataset.validate();
  json doc;
  doc["version"] = kManifestVersion;
  doc["feature_file"] = feature_file_name;
  doc["feature_dim"] = dataset.features.dim();
  doc["vocab"]["words"] = dataset.vocab.words();
  json examples = json::array();
  for (const auto& ex : dataset.examples) {
    std::vector<std::string> tokens;
    for (std::size_t i = 1; i + 1 < ex.token_ids.size(); ++i) {
      tokens.push_back(dataset.vocab.word(ex.token_ids[i]));
    }
    examples.push_back({{"feature_id", ex.feature_id}, {"tokens", tokens}});
  }
  doc["examples"] = std::move(examples);

  write_feature_file(manifest_path.parent_path() / feature_file_name, dataset.features);
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kMissingFile, "cannot write " + manifest_path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace textcond

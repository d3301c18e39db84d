#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "textcond/numerics.hpp"
#include "textcond/vocab.hpp"

namespace textcond {

/// Precomputed image feature vectors, stored as 32-bit floats exactly as
/// they appear on disk.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t count, std::size_t dim, std::vector<float> values);

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(std::size_t index) const;
  /// Row widened to double precision for the model.
  Vector vector(std::size_t index) const;
  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

struct CaptionExample {
  std::size_t feature_id = 0;
  std::vector<TokenId> token_ids;  // START ... STOP

  friend bool operator==(const CaptionExample&, const CaptionExample&) = default;
};

struct Dataset {
  Vocabulary vocab;
  FeatureStore features;
  std::vector<CaptionExample> examples;

  /// Checks every example against the vocabulary and feature store.
  /// Throws FormatError(kIdOutOfRange) or std::invalid_argument.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Feature file: "FEAT", u32 version (1), u32 count, u32 dim, then
/// count * dim little-endian IEEE-754 floats, row-major.
void write_feature_file(const std::filesystem::path& path, const FeatureStore& store);
FeatureStore read_feature_file(const std::filesystem::path& path);

/// Manifest JSON:
///   {"version": 1, "feature_file": "<path relative to the manifest>",
///    "vocab": {"words": [...regular words in id order...]},
///    "examples": [{"feature_id": k, "tokens": ["a", "red", ...]}]}
/// Tokens exclude START/STOP; words outside the vocabulary load as UNK.
Dataset load_dataset(const std::filesystem::path& manifest_path);
/// Writes the manifest and `feature_file_name` next to it.
void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                  const std::string& feature_file_name = "features.bin");

/// One word category of the synthetic corpus (e.g. colors). Each category owns
/// a disjoint block of `block_dim` feature coordinates.
struct SynthCategory {
  std::string name;
  std::vector<std::string> words;
  std::size_t block_dim = 4;
};

/// Compositional corpus: every caption is "a <w_1> <w_2> ... <w_n>", one word
/// per category in category order, and the feature vector carries a fixed
/// per-word signature in each category's block plus Gaussian noise.
struct SynthSpec {
  std::vector<SynthCategory> categories;
  std::size_t num_examples = 32;
  double noise_stddev = 0.05;
  /// Share of each signature's variance that comes from a prototype common
  /// to the category, so members of a category look alike (0 = independent).
  double shared_fraction = 0.0;
  std::uint64_t seed = 1;
  std::string article = "a";

  void validate() const;
  std::size_t feature_dim() const;
  /// Defaults used by the CLI and the acceptance suite: 4 colors, 4 objects,
  /// 2 actions.
  static SynthSpec standard();
};

Dataset synth_dataset(const SynthSpec& spec);

}  // namespace textcond

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "textcond/dataset.hpp"

namespace textcond {

void SynthSpec::validate() const {
  if (categories.empty()) throw std::invalid_argument("SynthSpec: no categories");
  if (num_examples == 0) throw std::invalid_argument("SynthSpec: num_examples must be >= 1");
  if (!(noise_stddev >= 0.0)) throw std::invalid_argument("SynthSpec: noise_stddev must be >= 0");
  if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) {
    throw std::invalid_argument("SynthSpec: shared_fraction must be in [0, 1]");
  }
  if (tokenize(article) != std::vector<std::string>{article}) {
    throw std::invalid_argument("SynthSpec: article must be a single token");
  }
  std::vector<std::string> seen{article};
  for (const auto& cat : categories) {
    if (cat.words.empty()) throw std::invalid_argument("SynthSpec: category '" + cat.name + "' has no words");
    if (cat.block_dim == 0) throw std::invalid_argument("SynthSpec: category '" + cat.name + "' has block_dim 0");
    for (const auto& w : cat.words) {
      if (tokenize(w) != std::vector<std::string>{w}) {
        throw std::invalid_argument("SynthSpec: word '" + w + "' is not a normalized single token");
      }
      if (std::find(seen.begin(), seen.end(), w) != seen.end()) {
        throw std::invalid_argument("SynthSpec: word '" + w + "' appears twice");
      }
      seen.push_back(w);
    }
  }
}

std::size_t SynthSpec::feature_dim() const {
  return std::accumulate(categories.begin(), categories.end(), std::size_t{0},
                         [](std::size_t acc, const SynthCategory& c) { return acc + c.block_dim; });
}

SynthSpec SynthSpec::standard() {
  SynthSpec spec;
  spec.categories = {
      {"color", {"red", "blue", "green", "yellow"}, 4},
      {"object", {"dog", "cat", "car", "ball"}, 4},
      {"action", {"runs", "sits"}, 4},
  };
  spec.num_examples = 32;
  spec.noise_stddev = 0.05;
  spec.seed = 1;
  return spec;
}

Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t dim = spec.feature_dim();

  // Per-word signatures, category by category: a category prototype is drawn
  // first, then each word mixes it with its own draw so every coordinate
  // keeps unit variance.
  const double shared = std::sqrt(spec.shared_fraction);
  const double own = std::sqrt(1.0 - spec.shared_fraction);
  std::vector<std::vector<Vector>> signatures;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& cat : spec.categories) {
    offsets.push_back(offset);
    Vector prototype(cat.block_dim);
    for (auto& x : prototype) x = rng.gaussian();
    auto& sigs = signatures.emplace_back();
    for (std::size_t w = 0; w < cat.words.size(); ++w) {
      Vector s(cat.block_dim);
      for (std::size_t k = 0; k < s.size(); ++k) s[k] = shared * prototype[k] + own * rng.gaussian();
      sigs.push_back(std::move(s));
    }
    offset += cat.block_dim;
  }

  // Word combinations: a seeded permutation of the full grid when it is small
  // enough to enumerate, cycled if more examples are requested.
  std::size_t combos = 1;
  bool enumerable = true;
  for (const auto& cat : spec.categories) {
    if (combos > (std::size_t{1} << 20) / cat.words.size()) {
      enumerable = false;
      break;
    }
    combos *= cat.words.size();
  }
  std::vector<std::size_t> order;
  if (enumerable) {
    order.resize(combos);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = combos; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }

  std::vector<std::vector<std::string>> captions;
  std::vector<float> values;
  values.reserve(spec.num_examples * dim);
  for (std::size_t e = 0; e < spec.num_examples; ++e) {
    std::vector<std::size_t> choice(spec.categories.size());
    if (enumerable) {
      std::size_t code = order[e % combos];
      for (std::size_t c = spec.categories.size(); c-- > 0;) {
        const std::size_t n = spec.categories[c].words.size();
        choice[c] = code % n;
        code /= n;
      }
    } else {
      for (std::size_t c = 0; c < spec.categories.size(); ++c) {
        choice[c] = rng.below(spec.categories[c].words.size());
      }
    }

    std::vector<std::string> caption{spec.article};
    Vector feature(dim, 0.0);
    for (std::size_t c = 0; c < spec.categories.size(); ++c) {
      caption.push_back(spec.categories[c].words[choice[c]]);
      const auto& sig = signatures[c][choice[c]];
      for (std::size_t k = 0; k < sig.size(); ++k) feature[offsets[c] + k] = sig[k];
    }
    for (auto& x : feature) {
      if (spec.noise_stddev > 0.0) x += rng.gaussian(0.0, spec.noise_stddev);
      values.push_back(static_cast<float>(x));
    }
    captions.push_back(std::move(caption));
  }

  Dataset ds;
  ds.vocab = build_vocab(captions, 1);
  ds.features = FeatureStore(spec.num_examples, dim, std::move(values));
  for (std::size_t e = 0; e < captions.size(); ++e) {
    ds.examples.push_back({e, encode_caption(ds.vocab, captions[e])});
  }
  return ds;
}

}  // namespace textcond

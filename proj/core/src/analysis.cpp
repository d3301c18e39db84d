#include "textcond/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace textcond {

double mask_distance(const Matrix& cond, TokenId a, TokenId b) {
  if (a >= cond.cols || b >= cond.cols) throw std::invalid_argument("mask_distance: word id out of range");
  double sq = 0.0;
  for (std::size_t r = 0; r < cond.rows; ++r) {
    const double d = cond(r, a) - cond(r, b);
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::vector<Neighbor> mask_nearest_neighbors(const Matrix& cond, TokenId word, std::size_t k,
                                             const Vocabulary* vocab) {
  if (word >= cond.cols) throw std::invalid_argument("mask_nearest_neighbors: word id out of range");
  if (k >= cond.cols) throw std::invalid_argument("mask_nearest_neighbors: k must be < vocabulary size");
  if (vocab && vocab->size() != cond.cols) {
    throw std::invalid_argument("mask_nearest_neighbors: vocabulary does not match W_c");
  }
  std::vector<Neighbor> all;
  for (TokenId other = 0; other < cond.cols; ++other) {
    if (other == word) continue;
    all.push_back({other, vocab ? vocab->word(other) : std::string(), mask_distance(cond, word, other)});
  }
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  all.resize(k);
  return all;
}

CategoryClustering category_clustering(const Matrix& cond, const Vocabulary& vocab,
                                       const std::vector<std::vector<std::string>>& categories) {
  CategoryClustering out;
  for (const auto& cat : categories) {
    if (cat.size() < 2) continue;
    std::vector<TokenId> ids;
    for (const auto& w : cat) {
      if (!vocab.contains(w)) throw std::invalid_argument("category_clustering: '" + w + "' not in vocabulary");
      ids.push_back(vocab.lookup(w));
    }
    const std::size_t k = cat.size() - 1;
    for (TokenId id : ids) {
      const auto nn = mask_nearest_neighbors(cond, id, k, &vocab);
      std::size_t same = 0;
      for (const auto& n : nn) {
        if (std::find(ids.begin(), ids.end(), n.id) != ids.end()) ++same;
      }
      ++out.words;
      if (2 * same > k) ++out.clustered;
    }
  }
  return out;
}

}  // namespace textcond

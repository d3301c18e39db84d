#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "textcond/numerics.hpp"
#include "textcond/vocab.hpp"

namespace textcond {

struct Neighbor {
  TokenId id = 0;
  std::string word;
  double distance = 0.0;
};

/// Euclidean distance between columns a and b of the conditional matrix.
double mask_distance(const Matrix& cond, TokenId a, TokenId b);

/// The k columns of W_c closest to column `word` (itself excluded), nearest
/// first, ties broken by id. `vocab` supplies surface forms when non-null.
std::vector<Neighbor> mask_nearest_neighbors(const Matrix& cond, TokenId word, std::size_t k,
                                             const Vocabulary* vocab = nullptr);

struct CategoryClustering {
  std::size_t words = 0;
  std::size_t clustered = 0;
  double fraction() const { return words == 0 ? 0.0 : static_cast<double>(clustered) / words; }
};

/// For every word of every category, takes its top-k list with
/// k = |category| - 1 and counts the word as clustered when more than half of
/// that list belongs to its own category.
CategoryClustering category_clustering(const Matrix& cond, const Vocabulary& vocab,
                                       const std::vector<std::vector<std::string>>& categories);

}  // namespace textcond

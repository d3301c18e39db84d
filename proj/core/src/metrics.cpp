#include "textcond/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <stdexcept>

namespace textcond {

namespace {

using NGram = std::vector<std::string>;
using Counts = std::map<NGram, double>;

Counts ngram_counts(const Sentence& s, std::size_t n) {
  Counts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    counts[NGram(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  }
  return counts;
}

void check_shapes(std::size_t candidates, std::size_t references) {
  if (candidates == 0) throw std::invalid_argument("metrics: empty candidate set");
  if (candidates != references) throw std::invalid_argument("metrics: one reference set per candidate required");
}

}  // namespace

std::vector<double> bleu(std::span<const Sentence> candidates,
                         std::span<const std::vector<Sentence>> references, std::size_t max_n) {
  check_shapes(candidates.size(), references.size());
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be >= 1");

  std::vector<double> matched(max_n, 0.0);
  std::vector<double> total(max_n, 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;

  for (std::size_t e = 0; e < candidates.size(); ++e) {
    const auto& cand = candidates[e];
    const auto& refs = references[e];
    if (refs.empty()) throw std::invalid_argument("bleu: example without references");

    cand_len += static_cast<double>(cand.size());
    std::size_t closest = refs.front().size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) {
        closest = r.size();
      }
    }
    ref_len += static_cast<double>(closest);

    for (std::size_t n = 1; n <= max_n; ++n) {
      const Counts cc = ngram_counts(cand, n);
      Counts max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : cc) {
        total[n - 1] += c;
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }

  double bp = 0.0;
  if (cand_len > 0.0) bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;

  std::vector<double> scores(max_n, 0.0);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double p = total[n - 1] > 0.0 ? matched[n - 1] / total[n - 1] : 0.0;
    if (p == 0.0) zero = true;
    if (!zero) log_sum += std::log(p);
    scores[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
  }
  return scores;
}

namespace {

constexpr std::size_t kCiderN = 4;
constexpr double kCiderSigma = 6.0;

struct DocVectors {
  std::array<Counts, kCiderN> counts;
  std::array<std::map<NGram, double>, kCiderN> weights;
  std::array<double, kCiderN> norm{};
  double length = 0.0;
};

DocVectors vectorize(const Sentence& s, const std::map<NGram, double>& df, double log_n) {
  DocVectors d;
  for (std::size_t n = 0; n < kCiderN; ++n) {
    d.counts[n] = ngram_counts(s, n + 1);
    double sq = 0.0;
    for (const auto& [g, tf] : d.counts[n]) {
      const auto it = df.find(g);
      const double doc_freq = it == df.end() ? 0.0 : it->second;
      const double w = tf * (log_n - std::log(std::max(1.0, doc_freq)));
      d.weights[n][g] = w;
      sq += w * w;
    }
    d.norm[n] = std::sqrt(sq);
  }
  d.length = static_cast<double>(s.size());
  return d;
}

double similarity(const DocVectors& cand, const DocVectors& ref, std::size_t n) {
  double val = 0.0;
  for (const auto& [g, w] : cand.weights[n]) {
    const auto it = ref.weights[n].find(g);
    if (it != ref.weights[n].end()) val += std::min(w, it->second) * it->second;
  }
  if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) {
    val /= cand.norm[n] * ref.norm[n];
  } else if (cand.norm[n] == 0.0 && ref.norm[n] == 0.0) {
    val = (!cand.counts[n].empty() && cand.counts[n] == ref.counts[n]) ? 1.0 : 0.0;
  } else {
    val = 0.0;
  }
  const double delta = cand.length - ref.length;
  return val * std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
}

}  // namespace

CiderResult cider(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references) {
  check_shapes(candidates.size(), references.size());

  std::map<NGram, double> df;
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument("cider: example without references");
    std::set<NGram> seen;
    for (const auto& r : refs) {
      for (std::size_t n = 1; n <= kCiderN; ++n) {
        for (const auto& [g, c] : ngram_counts(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(references.size()));

  CiderResult result;
  for (std::size_t e = 0; e < candidates.size(); ++e) {
    const DocVectors cand = vectorize(candidates[e], df, log_n);
    double total = 0.0;
    for (const auto& r : references[e]) {
      const DocVectors ref = vectorize(r, df, log_n);
      double per_n = 0.0;
      for (std::size_t n = 0; n < kCiderN; ++n) per_n += similarity(cand, ref, n);
      total += per_n / static_cast<double>(kCiderN);
    }
    result.per_example.push_back(10.0 * total / static_cast<double>(references[e].size()));
  }
  double sum = 0.0;
  for (double s : result.per_example) sum += s;
  result.score = sum / static_cast<double>(result.per_example.size());
  return result;
}

}  // namespace textcond

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace textcond {

using Sentence = std::vector<std::string>;

/// Corpus BLEU@1..max_n.
///
/// p_n = sum over examples of clipped n-gram matches / sum of candidate
/// n-gram counts, where a candidate n-gram's count is clipped to its largest
/// count in any single reference (p_n = 0 when the candidates have no
/// n-grams). BLEU@n = BP * exp(mean_{m<=n} log p_m), and 0 when any p_m is 0.
/// BP = exp(1 - r / c) if c < r, else 1; c is the total candidate length and
/// r the sum over examples of the reference length closest to the candidate
/// length (the shorter one on ties). BP = 0 when c = 0.
std::vector<double> bleu(std::span<const Sentence> candidates,
                         std::span<const std::vector<Sentence>> references, std::size_t max_n = 4);

struct CiderResult {
  double score = 0.0;              // mean of per_example
  std::vector<double> per_example;
};

/// CIDEr-D with n = 1..4, sigma = 6 and the factor 10:
///
///   g_n(s)[w] = tf(w in s) * (log N - log max(1, df(w)))
///   df(w)     = number of examples whose reference set contains w
///   sim_n     = sum_w min(g_n(c)[w], g_n(r)[w]) * g_n(r)[w] / (|g_n(c)| |g_n(r)|)
///               * exp(-(len(c) - len(r))^2 / (2 sigma^2))
///   CIDEr-D   = 10 / |refs| * sum_r mean_n sim_n
///
/// with N the number of examples. When both weighted vectors of an order
/// vanish (every n-gram occurs in every example's references, e.g. a
/// one-example corpus) the cosine is taken as 1 if the candidate and reference
/// have identical non-empty n-gram counts and 0 otherwise.
CiderResult cider(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references);

}  // namespace textcond

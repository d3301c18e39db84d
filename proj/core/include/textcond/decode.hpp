#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "textcond/model.hpp"

namespace textcond {

struct DecodeConfig {
  std::size_t beam_size = 1;
  std::size_t max_length = 20;  // generated tokens, STOP included
  GuidanceMode mode;

  void validate() const;
};

struct BeamHypothesis {
  std::vector<TokenId> token_ids;  // starts with START
  double logprob = 0.0;
  LstmState state;
  bool finished = false;           // ended with STOP
};

struct Decoded {
  std::vector<TokenId> token_ids;  // START ... (STOP, or truncated at max_length)
  double logprob = 0.0;
  bool finished = false;
};

/// Appends the most probable token (lowest id on ties) until STOP or
/// max_length tokens. START is never proposed as a next token.
Decoded greedy_decode(const ModelParams& params, std::span<const Scalar> raw, const DecodeConfig& config);

/// Length-unnormalized beam search. Each step expands every live hypothesis
/// by every token except START, keeps the beam_size best by cumulative
/// log-probability (ties: lexicographically smaller token sequence first) and
/// retires the ones ending in STOP. Hypotheses still live after max_length
/// tokens are retired unfinished. Results are sorted best first.
std::vector<Decoded> beam_search(const ModelParams& params, std::span<const Scalar> raw,
                                 const DecodeConfig& config);

}  // namespace textcond

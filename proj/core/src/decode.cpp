#include "textcond/decode.hpp"

#include <algorithm>
#include <stdexcept>

namespace textcond {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw std::invalid_argument("DecodeConfig: beam_size must be >= 1");
  if (max_length < 1) throw std::invalid_argument("DecodeConfig: max_length must be >= 1");
  mode.validate();
}

Decoded greedy_decode(const ModelParams& params, std::span<const Scalar> raw, const DecodeConfig& config) {
  config.validate();
  const StepDecoder decoder(params, raw, config.mode);
  Decoded out;
  out.token_ids = {kStartId};
  LstmState state = LstmState::zeros(params.dims.hidden);
  for (std::size_t step = 0; step < config.max_length; ++step) {
    auto [next, logprobs] = decoder.advance(state, out.token_ids);
    state = std::move(next);
    TokenId best = kStartId + 1;
    for (TokenId k = best + 1; k < logprobs.size(); ++k) {
      if (logprobs[k] > logprobs[best]) best = k;
    }
    out.logprob = out.logprob + logprobs[best];
    out.token_ids.push_back(best);
    if (best == kStopId) {
      out.finished = true;
      break;
    }
  }
  return out;
}

namespace {

struct Candidate {
  std::size_t parent;
  TokenId token;
  double logprob;
};

bool better(const Decoded& a, const Decoded& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.token_ids < b.token_ids;
}

}  // namespace

std::vector<Decoded> beam_search(const ModelParams& params, std::span<const Scalar> raw,
                                 const DecodeConfig& config) {
  config.validate();
  const StepDecoder decoder(params, raw, config.mode);

  std::vector<BeamHypothesis> live(1);
  live[0].token_ids = {kStartId};
  live[0].state = LstmState::zeros(params.dims.hidden);
  std::vector<Decoded> pool;

  for (std::size_t step = 0; step < config.max_length && !live.empty(); ++step) {
    std::vector<LstmState> next_states;
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto [state, logprobs] = decoder.advance(live[h].state, live[h].token_ids);
      next_states.push_back(std::move(state));
      for (TokenId k = kStartId + 1; k < logprobs.size(); ++k) {
        candidates.push_back({h, k, live[h].logprob + logprobs[k]});
      }
    }

    // Live hypotheses are kept in rank order, so comparing (parent, token)
    // orders equal scores lexicographically by token sequence only when the
    // parents' sequences are ordered too; compare the sequences directly.
    auto less_seq = [&](const Candidate& a, const Candidate& b) {
      const auto& sa = live[a.parent].token_ids;
      const auto& sb = live[b.parent].token_ids;
      if (sa != sb) return sa < sb;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(config.beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [&](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        return less_seq(a, b);
                      });

    std::vector<BeamHypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      BeamHypothesis hyp;
      hyp.token_ids = live[c.parent].token_ids;
      hyp.token_ids.push_back(c.token);
      hyp.logprob = c.logprob;
      hyp.state = next_states[c.parent];
      hyp.finished = c.token == kStopId;
      if (hyp.finished) {
        pool.push_back({std::move(hyp.token_ids), hyp.logprob, true});
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
  }

  for (auto& hyp : live) pool.push_back({std::move(hyp.token_ids), hyp.logprob, false});
  std::sort(pool.begin(), pool.end(), better);
  return pool;
}

}  // namespace textcond

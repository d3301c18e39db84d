#include <benchmark/benchmark.h>

#include "textcond/dataset.hpp"
#include "textcond/decode.hpp"
#include "textcond/metrics.hpp"
#include "textcond/model.hpp"
#include "textcond/training.hpp"

using namespace textcond;

namespace {

ModelDims dims_for(std::size_t hidden) {
  ModelDims d;
  d.vocab = 200;
  d.embed = hidden;
  d.hidden = hidden;
  d.image_embed = hidden;
  d.raw = 64;
  return d;
}

std::vector<TokenId> caption(std::size_t len, std::size_t vocab) {
  std::vector<TokenId> ids{kStartId};
  for (std::size_t i = 0; i < len; ++i) ids.push_back(kNumReserved + (7 * i) % (vocab - kNumReserved));
  ids.push_back(kStopId);
  return ids;
}

void BM_ForwardBackward(benchmark::State& state) {
  const ModelDims d = dims_for(static_cast<std::size_t>(state.range(0)));
  const ModelParams p = init_params(d, ModelInit{}, 1);
  const Vector raw(d.raw, 0.1);
  const auto ids = caption(12, d.vocab);
  const GuidanceMode mode = GuidanceMode::sentence(TransferKind::kTanh);
  for (auto _ : state) {
    const ForwardTrace tr = forward_sequence(p, raw, ids, mode);
    ModelParams g = backward_sequence(p, tr, ids, mode);
    benchmark::DoNotOptimize(g.out_bias.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(ids.size() - 1));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_GlstmStep(benchmark::State& state) {
  const ModelDims d = dims_for(static_cast<std::size_t>(state.range(0)));
  const ModelParams p = init_params(d, ModelInit{}, 2);
  const Vector x(d.embed, 0.1), g(d.image_embed, 0.2);
  LstmState s = LstmState::zeros(d.hidden);
  const GuidanceTerms terms = guidance_terms(p, g);
  for (auto _ : state) {
    StepResult r = glstm_step(p, x, s, terms);
    benchmark::DoNotOptimize(r.state.m.data());
  }
}
BENCHMARK(BM_GlstmStep)->Arg(16)->Arg(64)->Arg(256);

void BM_BeamSearch(benchmark::State& state) {
  const ModelDims d = dims_for(64);
  const ModelParams p = init_params(d, ModelInit{}, 3);
  DecodeConfig cfg;
  cfg.beam_size = static_cast<std::size_t>(state.range(0));
  cfg.mode = GuidanceMode::sentence(TransferKind::kTanh);
  const Vector raw(d.raw, 0.1);
  for (auto _ : state) {
    auto out = beam_search(p, raw, cfg);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_TrainIteration(benchmark::State& state) {
  const Dataset data = synth_dataset(SynthSpec::standard());
  TrainConfig cfg;
  const GuidanceMode mode = GuidanceMode::sentence(TransferKind::kTanh);
  const ModelParams p = initial_params(data, cfg, mode);
  ModelParams grads = p.zeros_like();
  AdamState adam = AdamState::zeros_for(p);
  std::vector<std::size_t> batch(data.examples.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  ModelParams params = p;
  for (auto _ : state) {
    grads = params.zeros_like();
    batch_gradient(params, data, batch, mode, cfg.lambda, 1, grads);
    adam_step(params, grads, adam, cfg);
  }
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);

void BM_Cider(benchmark::State& state) {
  std::vector<Sentence> cands;
  std::vector<std::vector<Sentence>> refs;
  for (int i = 0; i < 200; ++i) {
    const std::string w = "w" + std::to_string(i % 37);
    cands.push_back({"a", w, "dog", "runs", "on", "grass"});
    refs.push_back({{"a", w, "dog", "is", "running"}, {"the", "dog", "runs", "on", w}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(cider(cands, refs).score);
}
BENCHMARK(BM_Cider)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

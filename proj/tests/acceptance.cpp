// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--expect-fail N]...
//
// Exits 0 when every failing criterion was listed with --expect-fail, so a
// known failure can be carried in ctest while still being printed as FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "test_util.hpp"
#include "textcond/analysis.hpp"
#include "textcond/cli.hpp"
#include "textcond/decode.hpp"
#include "textcond/gradcheck.hpp"
#include "textcond/metrics.hpp"
#include "textcond/reference.hpp"
#include "textcond/training.hpp"

using namespace textcond;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const TransferKind kTransfers[] = {TransferKind::kIdentity, TransferKind::kSigmoid, TransferKind::kTanh,
                                   TransferKind::kReLU, TransferKind::kSoftmax};

ModelDims tiny_dims() {
  ModelDims d;
  d.vocab = 9;
  d.hidden = 6;
  d.embed = 5;
  d.image_embed = 7;
  d.raw = 4;
  return d;
}

bool same_trace(const ForwardTrace& a, const ForwardTrace& b) {
  if (a.steps.size() != b.steps.size() || a.image != b.image) return false;
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    if (a.steps[t].guidance.g != b.steps[t].guidance.g || a.steps[t].cell.state != b.steps[t].cell.state ||
        a.steps[t].logits != b.steps[t].logits || a.steps[t].logprobs != b.steps[t].logprobs) {
      return false;
    }
  }
  return true;
}

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const GuidanceVariant variants[] = {GuidanceVariant::kTimeInvariant, GuidanceVariant::kNGram,
                                      GuidanceVariant::kNGram, GuidanceVariant::kSentence,
                                      GuidanceVariant::kFullTensor};
  const std::size_t ns[] = {1, 1, 3, 1, 1};
  bool pass = true;
  double worst = 0.0, worst_double = 0.0;
  for (std::size_t v = 0; v < 5; ++v) {
    for (auto t : kTransfers) {
      const GuidanceMode mode{variants[v], ns[v], t};
      const TinyProblem p = tiny_problem(mode);
      const auto r = gradient_check(p.params, p.raw, p.caption, mode, 1e-5, 1e-4, 1e-3);
      pass = pass && r.pass;
      worst = std::max(worst, r.max_rel_error);
      const auto rd = gradient_check(p.params, p.raw, p.caption, mode, 1e-5, 1e-4, 1e-3, 0, 1, FdPrecision::kDouble);
      worst_double = std::max(worst_double, rd.max_rel_error);
    }
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 120.0;
  return {pass, "25 mode/transfer pairs, max rel error " + fmt("%.2e", worst) +
                    " (long-double FD oracle; double FD gives " + fmt("%.2e", worst_double) + "), " +
                    fmt("%.1f", secs) + " s"};
}

Outcome special_cases() {
  const ModelDims d = tiny_dims();
  Rng rng(101);
  std::size_t checked = 0, equal = 0;
  for (int trial = 0; trial < 50; ++trial) {
    ModelParams p = testing::random_params(d, 5000 + trial);
    const Vector raw = testing::random_vector(rng, d.raw);
    const auto ids = testing::random_caption(rng, d.vocab, 1 + rng.below(10));
    for (auto t : kTransfers) {
      ++checked;
      equal += same_trace(forward_sequence(p, raw, ids, GuidanceMode::time_invariant(t)), forward_glstm(p, raw, ids, t));
    }
    p.cond = Matrix(d.image_embed, d.vocab, 1.0);
    for (auto t : kTransfers) {
      ++checked;
      equal += same_trace(forward_sequence(p, raw, ids, GuidanceMode::ngram(1, t)),
                          forward_sequence(p, raw, ids, GuidanceMode::time_invariant(t)));
    }
  }
  return {equal == checked, std::to_string(equal) + "/" + std::to_string(checked) + " traces bit-identical"};
}

Outcome diagonal_tensor() {
  const ModelDims d = tiny_dims();
  Rng rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    ModelParams p = testing::random_params(d, 6000 + trial, 0.5, true);
    auto& ft = *p.full_tensor;
    ft.weights.set_zero();
    ft.bias.assign(d.image_embed, 0.0);
    for (std::size_t i = 0; i < d.image_embed; ++i) {
      for (std::size_t k = 0; k < d.vocab; ++k) ft.at(i, i, k) = p.cond(i, k);
    }
    const Vector raw = testing::random_vector(rng, d.raw);
    const auto ids = testing::random_caption(rng, d.vocab, 1 + rng.below(10));
    const TransferKind t = kTransfers[trial % 5];
    const ForwardTrace a = forward_sequence(p, raw, ids, GuidanceMode::full_tensor(t));
    const ForwardTrace b = forward_sequence(p, raw, ids, GuidanceMode::ngram(1, t));
    for (std::size_t s = 0; s < a.steps.size(); ++s) {
      worst = std::max(worst, testing::max_abs_diff(a.steps[s].guidance.g, b.steps[s].guidance.g));
      worst = std::max(worst, testing::max_abs_diff(a.steps[s].logprobs, b.steps[s].logprobs));
    }
  }
  return {worst < 1e-12, "50 instances, max |diff| " + fmt("%.2e", worst)};
}

Outcome sentence_ngram() {
  const ModelDims d = tiny_dims();
  Rng rng(103);
  std::size_t ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const ModelParams p = testing::random_params(d, 7000 + trial);
    const Vector raw = testing::random_vector(rng, d.raw);
    const auto ids = testing::random_caption(rng, d.vocab, 1 + rng.below(10));
    const TransferKind t = kTransfers[trial % 5];
    const ForwardTrace s = forward_sequence(p, raw, ids, GuidanceMode::sentence(t));
    const ForwardTrace n1 = forward_sequence(p, raw, ids, GuidanceMode::ngram(1, t));
    const ForwardTrace nl = forward_sequence(p, raw, ids, GuidanceMode::ngram(ids.size() + rng.below(3), t));
    const bool first = s.steps[0].guidance.g == n1.steps[0].guidance.g &&
                       s.steps[0].logprobs == n1.steps[0].logprobs;
    ok += first && same_trace(nl, s);
  }
  return {ok == 50, std::to_string(ok) + "/50 captions bit-identical"};
}

struct OverfitRun {
  Dataset data;
  Checkpoint ck;
  double seconds = 0.0;
};

OverfitRun overfit_run() {
  OverfitRun run;
  run.data = synth_dataset(SynthSpec::standard());
  const auto t0 = Clock::now();
  run.ck = train(run.data, TrainConfig{}, GuidanceMode::sentence(TransferKind::kTanh));
  run.seconds = seconds_since(t0);
  return run;
}

Outcome overfitting(const OverfitRun& run) {
  const double token_loss = mean_token_loss(run.ck.params, run.data, run.ck.mode);
  DecodeConfig dc;
  dc.mode = run.ck.mode;
  std::size_t exact = 0;
  for (const auto& ex : run.data.examples) {
    exact += greedy_decode(run.ck.params, run.data.features.vector(ex.feature_id), dc).token_ids == ex.token_ids;
  }
  const double frac = static_cast<double>(exact) / run.data.examples.size();
  const bool pass = token_loss < 0.05 && frac >= 0.95 && run.seconds < 600.0;
  return {pass, "mean token loss " + fmt("%.2e", token_loss) + ", greedy exact " + std::to_string(exact) + "/" +
                    std::to_string(run.data.examples.size()) + ", training " + fmt("%.1f", run.seconds) + " s"};
}

double enumerate_best(const ModelParams& p, const Vector& raw, const GuidanceMode& mode, std::vector<TokenId>& best) {
  const std::vector<std::vector<TokenId>> all{
      {kStartId, kStopId}, {kStartId, kUnkId, kStopId}, {kStartId, kUnkId, kUnkId}};
  double best_lp = -INFINITY;
  for (const auto& seq : all) {
    const auto lp = ReferenceModel(p).logprobs(raw, seq, mode);
    long double total = 0.0L;
    for (std::size_t t = 0; t < lp.size(); ++t) total += lp[t][seq[t + 1]];
    if (static_cast<double>(total) > best_lp) {
      best_lp = static_cast<double>(total);
      best = seq;
    }
  }
  return best_lp;
}

Outcome decoding() {
  Rng rng(104);
  std::size_t greedy_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelDims d = tiny_dims();
    d.vocab = 4 + rng.below(6);
    const ModelParams p = testing::random_params(d, 8000 + trial, 1.0);
    const Vector raw = testing::random_vector(rng, d.raw);
    DecodeConfig dc;
    dc.max_length = 1 + rng.below(10);
    dc.mode = GuidanceMode::sentence(kTransfers[trial % 5]);
    const Decoded g = greedy_decode(p, raw, dc);
    const auto b = beam_search(p, raw, dc);
    greedy_ok += b.size() == 1 && b[0].token_ids == g.token_ids && b[0].logprob == g.logprob;
  }

  std::size_t enum_ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    ModelDims d = tiny_dims();
    d.vocab = 3;
    const ModelParams p = testing::random_params(d, 9000 + trial, 1.0);
    const Vector raw = testing::random_vector(rng, d.raw);
    DecodeConfig dc;
    dc.max_length = 2;
    dc.beam_size = 2;
    dc.mode = GuidanceMode::ngram(2, TransferKind::kTanh);
    std::vector<TokenId> best;
    const double lp = enumerate_best(p, raw, dc.mode, best);
    const auto b = beam_search(p, raw, dc);
    enum_ok += b[0].token_ids == best && std::abs(b[0].logprob - lp) < 1e-12;
  }

  std::size_t sized_ok = 0;
  for (std::size_t beam : {2u, 3u}) {
    const ModelParams p = testing::random_params(tiny_dims(), 9500 + beam, 1.0);
    DecodeConfig dc;
    dc.beam_size = beam;
    dc.mode = GuidanceMode::sentence(TransferKind::kTanh);
    const auto results = beam_search(p, Vector(4, 0.3), dc);
    bool ok = !results.empty() && results.size() <= beam;
    for (std::size_t i = 0; i < results.size(); ++i) {
      ok = ok && results[i].token_ids.front() == kStartId && results[i].token_ids.size() <= dc.max_length + 1;
      if (i > 0) ok = ok && results[i - 1].logprob >= results[i].logprob;
    }
    sized_ok += ok;
  }
  return {greedy_ok == 100 && enum_ok == 50 && sized_ok == 2,
          "beam-1 == greedy " + std::to_string(greedy_ok) + "/100, exhaustive V=3 " + std::to_string(enum_ok) +
              "/50, beams 2 and 3 " + std::to_string(sized_ok) + "/2"};
}

Outcome metric_oracles() {
  const std::vector<Sentence> self{tokenize("a red dog runs on the grass")};
  const std::vector<std::vector<Sentence>> self_ref{{tokenize("a red dog runs on the grass")}};
  const auto b_self = bleu(self, self_ref);
  const bool self_ok = b_self[0] == 1.0 && b_self[3] == 1.0;

  const std::vector<Sentence> short_c{tokenize("the cat sat")};
  const std::vector<std::vector<Sentence>> long_r{{tokenize("the cat sat down")}};
  const double bp_err = std::abs(bleu(short_c, long_r)[0] - std::exp(1.0 - 4.0 / 3.0));

  const std::vector<Sentence> one{tokenize("a red dog runs")};
  const std::vector<std::vector<Sentence>> one_ref{{tokenize("a red dog runs")}};
  const double c1 = cider(one, one_ref).score;

  // Frozen from tests/oracles/caption_metrics.py.
  const std::vector<Sentence> cands{tokenize("a red dog runs"), tokenize("a blue cat sits on the mat"),
                                    tokenize("the green car")};
  const std::vector<std::vector<Sentence>> refs{
      {tokenize("a red dog runs"), tokenize("a red dog is running fast")},
      {tokenize("a blue cat sits"), tokenize("the cat sits on a mat")},
      {tokenize("a green car parked"), tokenize("the green car is parked here"), tokenize("green car")}};
  const CiderResult c3 = cider(cands, refs);
  const double oracle[] = {6.700025467146878, 4.7043828938028325, 3.7139715226575625};
  double c3_err = std::abs(c3.score - 5.039459961202424);
  for (std::size_t i = 0; i < 3; ++i) c3_err = std::max(c3_err, std::abs(c3.per_example[i] - oracle[i]));

  const bool pass = self_ok && bp_err < 1e-12 && std::abs(c1 - 10.0) < 1e-12 && c3_err < 1e-10;
  return {pass, std::string("BLEU self ") + (self_ok ? "1.0" : "wrong") + ", BP error " + fmt("%.1e", bp_err) +
                    ", CIDEr-D 1-example " + fmt("%.12g", c1) + ", 3-example error " + fmt("%.1e", c3_err)};
}

Outcome attention_semantics(const OverfitRun& run) {
  std::vector<std::vector<std::string>> cats;
  for (const auto& c : SynthSpec::standard().categories) cats.push_back(c.words);
  const CategoryClustering cc = category_clustering(run.ck.params.cond, run.ck.vocab, cats);
  return {cc.fraction() >= 0.8, std::to_string(cc.clustered) + "/" + std::to_string(cc.words) +
                                    " category words clustered (need 80%)"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  testing::TempDir dir;
  std::ostringstream sink;
  const std::string manifest = (dir / "data" / "manifest.json").string();
  if (cli::run({"synth", "--output-dir", (dir / "data").string()}, sink, sink) != 0) return {false, "synth failed"};
  for (const char* name : {"a", "b"}) {
    const int code = cli::run({"train", "--manifest", manifest, "--output-dir", (dir / name).string(), "--seed", "7",
                               "--train.stage_iters", "[200,100,400]", "--train.log_every", "0"},
                              sink, sink);
    if (code != 0) return {false, "train failed"};
  }
  const bool ck = slurp(dir / "a" / "checkpoint.bin") == slurp(dir / "b" / "checkpoint.bin");
  const bool log = slurp(dir / "a" / "loss.csv") == slurp(dir / "b" / "loss.csv");
  return {ck && log, std::string("checkpoint ") + (ck ? "identical" : "differs") + ", loss log " +
                         (log ? "identical" : "differs") + " (" +
                         std::to_string(std::filesystem::file_size(dir / "a" / "checkpoint.bin")) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> expected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--expect-fail") == 0 && i + 1 < argc) {
      expected.insert(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--expect-fail N]...\n", argv[0]);
      return 1;
    }
  }

  int unexpected = 0;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("criterion %d: %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass && !expected.count(n)) ++unexpected;
    if (o.pass && expected.count(n)) std::printf("  note: criterion %d was expected to fail but passed\n", n);
  };

  report(1, "gradient fidelity", gradient_fidelity());
  report(2, "special-case equivalence", special_cases());
  report(3, "diagonal tensor vs masked guidance", diagonal_tensor());
  report(4, "sentence/ngram consistency", sentence_ngram());
  const OverfitRun run = overfit_run();
  report(5, "overfitting", overfitting(run));
  report(6, "decoding", decoding());
  report(7, "metric oracles", metric_oracles());
  report(8, "attention semantics", attention_semantics(run));
  report(9, "determinism", determinism());
  return unexpected == 0 ? 0 : 1;
}

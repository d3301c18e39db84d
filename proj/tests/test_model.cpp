#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "textcond/gradcheck.hpp"
#include "textcond/model.hpp"
#include "textcond/reference.hpp"

using namespace textcond;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.vocab = 9;
  d.embed = 5;
  d.hidden = 6;
  d.image_embed = 7;
  d.raw = 4;
  return d;
}

const TransferKind kAllTransfers[] = {TransferKind::kIdentity, TransferKind::kSigmoid, TransferKind::kTanh,
                                      TransferKind::kReLU, TransferKind::kSoftmax};

Vector onehot(std::size_t n, std::size_t k) {
  Vector v(n, 0.0);
  v[k] = 1.0;
  return v;
}

void check_same_trace(const ForwardTrace& a, const ForwardTrace& b) {
  REQUIRE(a.steps.size() == b.steps.size());
  CHECK(a.image == b.image);
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].guidance.g == b.steps[t].guidance.g);
    CHECK(a.steps[t].cell.state == b.steps[t].cell.state);
    CHECK(a.steps[t].cell.pre == b.steps[t].cell.pre);
    CHECK(a.steps[t].logits == b.steps[t].logits);
    CHECK(a.steps[t].logprobs == b.steps[t].logprobs);
  }
}

// Scalar-loop step written from the cell equations, for comparison with glstm_step.
LstmState loop_step(const ModelParams& p, const Vector& x, const LstmState& prev, const Vector& g) {
  const std::size_t H = p.dims.hidden;
  double act[4][16];
  for (std::size_t q = 0; q < 4; ++q) {
    const GateParams& gp = p.gates[q];
    for (std::size_t h = 0; h < H; ++h) {
      double s = gp.b[h];
      for (std::size_t e = 0; e < x.size(); ++e) s += gp.wx(h, e) * x[e];
      for (std::size_t k = 0; k < H; ++k) s += gp.wm(h, k) * prev.m[k];
      for (std::size_t k = 0; k < g.size(); ++k) s += gp.wq(h, k) * g[k];
      act[q][h] = q == kCellGate ? std::tanh(s) : 1.0 / (1.0 + std::exp(-s));
    }
  }
  LstmState out = LstmState::zeros(H);
  for (std::size_t h = 0; h < H; ++h) {
    out.c[h] = act[kForgetGate][h] * prev.c[h] + act[kInputGate][h] * act[kCellGate][h];
    out.m[h] = act[kOutputGate][h] * out.c[h];
  }
  return out;
}

}  // namespace

TEST_CASE("embed_word") {
  const ModelDims d = small_dims();
  ModelParams p = ModelParams::zeros(d);
  CHECK(embed_word(p, 4) == Vector(d.embed, 0.0));
  for (std::size_t j = 0; j < d.embed; ++j) p.word_embed(j, j) = 1.0;
  CHECK(embed_word(p, 2) == onehot(d.embed, 2));

  const ModelParams r = testing::random_params(d, 3);
  CHECK(embed_word(r, 3) == affine(r.word_embed, onehot(d.vocab, 3), Vector(d.embed, 0.0)));
  CHECK_THROWS_AS(embed_word(r, d.vocab), std::invalid_argument);
}

TEST_CASE("embed_image") {
  ModelDims d = small_dims();
  d.image_embed = d.raw;
  ModelParams p = ModelParams::zeros(d);
  for (std::size_t j = 0; j < d.raw; ++j) p.image_embed(j, j) = 1.0;
  const Vector raw{0.5, -1.0, 2.0, 3.5};
  CHECK(embed_image(p, raw) == raw);
  p.image_bias = {1, 2, 3, 4};
  CHECK(embed_image(p, Vector(d.raw, 0.0)) == p.image_bias);

  const ModelParams r = testing::random_params(small_dims(), 5);
  Rng rng(6);
  const Vector x = testing::random_vector(rng, 4);
  Vector expect(7);
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += r.image_embed(i, j) * x[j];
    expect[i] = s + r.image_bias[i];
  }
  CHECK(testing::max_abs_diff(embed_image(r, x), expect) < 1e-12);
  CHECK_THROWS_AS(embed_image(r, Vector(3)), std::invalid_argument);
}

TEST_CASE("history_vector") {
  const std::size_t V = 9;
  const std::vector<TokenId> start{kStartId};
  CHECK(history_vector(start, GuidanceMode::ngram(1, TransferKind::kTanh), V) == onehot(V, kStartId));

  const std::vector<TokenId> two{kStartId, 5};
  Vector half(V, 0.0);
  half[kStartId] = 0.5;
  half[5] = 0.5;
  CHECK(history_vector(two, GuidanceMode::sentence(TransferKind::kTanh), V) == half);
  CHECK(history_vector(two, GuidanceMode::time_invariant(TransferKind::kTanh), V).empty());

  const std::vector<TokenId> five{kStartId, 3, 4, 3, 7};
  Vector brute(V, 0.0);
  for (std::size_t i = 2; i < 5; ++i) brute[five[i]] += 1.0 / 3.0;
  const Vector h3 = history_vector(five, GuidanceMode::ngram(3, TransferKind::kTanh), V);
  CHECK(testing::max_abs_diff(h3, brute) < 1e-15);

  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ids = testing::random_caption(rng, V, 1 + rng.below(10));
    const std::span<const TokenId> hist(ids.data(), ids.size() - 1);
    for (const auto& mode : {GuidanceMode::ngram(1 + rng.below(4), TransferKind::kTanh),
                             GuidanceMode::sentence(TransferKind::kTanh)}) {
      double sum = 0.0;
      for (double x : history_vector(hist, mode, V)) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("guidance") {
  const ModelDims d = small_dims();
  Rng rng(9);
  ModelParams p = testing::random_params(d, 10);
  const Vector image = testing::random_vector(rng, d.image_embed);

  // All-ones W_c: the conditioned feature is the image feature itself.
  p.cond = Matrix(d.image_embed, d.vocab, 1.0);
  const std::vector<TokenId> hist{kStartId, 4, 6};
  for (const auto& mode : {GuidanceMode::ngram(1, TransferKind::kIdentity), GuidanceMode::ngram(2, TransferKind::kIdentity),
                           GuidanceMode::sentence(TransferKind::kIdentity)}) {
    CHECK(guidance(p, image, history_vector(hist, mode, d.vocab), mode) == image);
  }

  const ModelParams r = testing::random_params(d, 11);
  const Vector h = onehot(d.vocab, 3);
  CHECK(guidance(r, Vector(d.image_embed, 0.0), h, GuidanceMode::sentence(TransferKind::kTanh)) ==
        Vector(d.image_embed, 0.0));

  const Vector g = guidance(r, image, h, GuidanceMode::ngram(1, TransferKind::kIdentity));
  for (std::size_t i = 0; i < d.image_embed; ++i) CHECK(g[i] == image[i] * r.cond(i, 3));

  const Vector ti = guidance(r, image, {}, GuidanceMode::time_invariant(TransferKind::kTanh));
  CHECK(ti == transfer_apply(TransferKind::kTanh, image));

  CHECK_THROWS_AS(guidance(r, Vector(3), h, GuidanceMode::sentence(TransferKind::kTanh)), std::invalid_argument);
  CHECK_THROWS_AS(guidance(r, image, Vector(4), GuidanceMode::sentence(TransferKind::kTanh)), std::invalid_argument);
}

TEST_CASE("guidance_full_tensor") {
  const std::size_t D = 4, V = 5;
  FullTensorParams ft = FullTensorParams::zeros(D, V);
  Rng rng(12);
  const Vector image = testing::random_vector(rng, D);
  CHECK(guidance_full_tensor(ft, image, onehot(V, 2), TransferKind::kIdentity) == Vector(D, 0.0));

  // Hand case: D = 2, V = 2, I = [1, 2], S = onehot(1).
  FullTensorParams hand = FullTensorParams::zeros(2, 2);
  hand.at(0, 0, 0) = 3.0;
  hand.at(0, 0, 1) = 0.5;
  hand.at(0, 1, 0) = 7.0;
  hand.at(0, 1, 1) = -1.0;
  hand.at(1, 0, 0) = -4.0;
  hand.at(1, 0, 1) = 2.0;
  hand.at(1, 1, 0) = 9.0;
  hand.at(1, 1, 1) = 0.25;
  hand.bias = {0.1, -0.2};
  const Vector g = guidance_full_tensor(hand, Vector{1.0, 2.0}, onehot(2, 1), TransferKind::kIdentity);
  // g0 = 0.5*1 - 1*2 + 0.1 = -1.4, g1 = 2*1 + 0.25*2 - 0.2 = 2.3
  CHECK(g[0] == doctest::Approx(-1.4).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(2.3).epsilon(1e-15));

  CHECK_THROWS_AS(guidance_full_tensor(ft, Vector(3), onehot(V, 0), TransferKind::kTanh), std::invalid_argument);
  CHECK_THROWS_AS(guidance_full_tensor(ft, image, Vector(2), TransferKind::kTanh), std::invalid_argument);
  CHECK_THROWS_AS(FullTensorParams::zeros(1000, 1000), std::invalid_argument);
}

TEST_CASE("diagonal full tensor equals the masked guidance") {
  const ModelDims d = small_dims();
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams p = testing::random_params(d, 100 + trial, 0.5, true);
    auto& ft = *p.full_tensor;
    ft.weights.set_zero();
    ft.bias.assign(d.image_embed, 0.0);
    for (std::size_t i = 0; i < d.image_embed; ++i) {
      for (std::size_t k = 0; k < d.vocab; ++k) ft.at(i, i, k) = p.cond(i, k);
    }
    const Vector image = testing::random_vector(rng, d.image_embed);
    const Vector h = onehot(d.vocab, rng.below(d.vocab));
    for (auto t : kAllTransfers) {
      const Vector a = guidance_full_tensor(ft, image, h, t);
      const Vector b = guidance(p, image, h, GuidanceMode::ngram(1, t));
      CHECK(testing::max_abs_diff(a, b) < 1e-12);
    }
  }
}

TEST_CASE("glstm_step") {
  const ModelDims d = small_dims();
  const ModelParams zero = ModelParams::zeros(d);
  LstmState prev = LstmState::zeros(d.hidden);
  for (std::size_t h = 0; h < d.hidden; ++h) prev.c[h] = static_cast<double>(h) - 2.5;
  const StepResult r = glstm_step(zero, Vector(d.embed, 0.3), prev, Vector(d.image_embed, 0.7));
  for (std::size_t h = 0; h < d.hidden; ++h) {
    CHECK(r.input_gate[h] == 0.5);
    CHECK(r.forget_gate[h] == 0.5);
    CHECK(r.output_gate[h] == 0.5);
    CHECK(r.candidate[h] == 0.0);
    CHECK(r.state.c[h] == 0.5 * prev.c[h]);
    CHECK(r.state.m[h] == 0.25 * prev.c[h]);
  }

  ModelDims d4 = d;
  d4.hidden = 4;
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = testing::random_params(d4, 200 + trial);
    const Vector x = testing::random_vector(rng, d4.embed);
    const Vector g = testing::random_vector(rng, d4.image_embed);
    LstmState s{testing::random_vector(rng, 4), testing::random_vector(rng, 4)};
    const StepResult got = glstm_step(p, x, s, g);
    const LstmState want = loop_step(p, x, s, g);
    CHECK(testing::max_abs_diff(got.state.c, want.c) < 1e-12);
    CHECK(testing::max_abs_diff(got.state.m, want.m) < 1e-12);
    // Precomputed guidance terms give the same bits.
    CHECK(glstm_step(p, x, s, guidance_terms(p, g)).state == got.state);
  }
  CHECK_THROWS_AS(glstm_step(zero, Vector(2), prev, Vector(d.image_embed)), std::invalid_argument);
  CHECK_THROWS_AS(glstm_step(zero, Vector(d.embed), LstmState::zeros(2), Vector(d.image_embed)),
                  std::invalid_argument);
}

TEST_CASE("forward_sequence basics") {
  const ModelDims d = small_dims();
  const ModelParams p = testing::random_params(d, 15);
  Rng rng(16);
  const Vector raw = testing::random_vector(rng, d.raw);
  const std::vector<TokenId> ids{kStartId, kStopId};
  const ForwardTrace tr = forward_sequence(p, raw, ids, GuidanceMode::sentence(TransferKind::kTanh));
  REQUIRE(tr.steps.size() == 1);
  double total = 0.0;
  for (double lp : tr.steps[0].logprobs) total += std::exp(lp);
  CHECK(std::abs(total - 1.0) < 1e-12);

  const GuidanceMode mode = GuidanceMode::sentence(TransferKind::kTanh);
  CHECK_THROWS_AS(forward_sequence(p, raw, std::vector<TokenId>{kStartId}, mode), std::invalid_argument);
  CHECK_THROWS_AS(forward_sequence(p, raw, std::vector<TokenId>{3, kStopId}, mode), std::invalid_argument);
  CHECK_THROWS_AS(forward_sequence(p, raw, std::vector<TokenId>{kStartId, kStartId, kStopId}, mode),
                  std::invalid_argument);
  CHECK_THROWS_AS(forward_sequence(p, raw, std::vector<TokenId>{kStartId, 42, kStopId}, mode),
                  std::invalid_argument);
}

TEST_CASE("forward_sequence matches the whole-graph reference") {
  const ModelDims d = small_dims();
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const ModelParams p = testing::random_params(d, 300 + trial, 0.3, true);
    const Vector raw = testing::random_vector(rng, d.raw);
    const auto ids = testing::random_caption(rng, d.vocab, 3);
    const ReferenceModel ref(p);
    for (const auto& mode : {GuidanceMode::time_invariant(TransferKind::kSigmoid),
                             GuidanceMode::ngram(2, TransferKind::kTanh), GuidanceMode::sentence(TransferKind::kSoftmax),
                             GuidanceMode::full_tensor(TransferKind::kReLU)}) {
      const ForwardTrace tr = forward_sequence(p, raw, ids, mode);
      const auto want = ref.logprobs(raw, ids, mode);
      REQUIRE(want.size() == tr.steps.size());
      for (std::size_t t = 0; t < want.size(); ++t) {
        for (std::size_t v = 0; v < d.vocab; ++v) {
          CHECK(std::abs(std::exp(tr.steps[t].logprobs[v]) - std::exp(static_cast<double>(want[t][v]))) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("activation ranges along a trace") {
  const ModelDims d = small_dims();
  Rng rng(18);
  const ModelParams p = testing::random_params(d, 19, 0.5);
  const auto ids = testing::random_caption(rng, d.vocab, 12);
  const ForwardTrace tr = forward_sequence(p, testing::random_vector(rng, d.raw), ids,
                                           GuidanceMode::sentence(TransferKind::kReLU));
  for (const auto& s : tr.steps) {
    for (std::size_t h = 0; h < d.hidden; ++h) {
      CHECK((s.cell.input_gate[h] > 0.0 && s.cell.input_gate[h] < 1.0));
      CHECK((s.cell.forget_gate[h] > 0.0 && s.cell.forget_gate[h] < 1.0));
      CHECK((s.cell.output_gate[h] > 0.0 && s.cell.output_gate[h] < 1.0));
      CHECK((s.cell.candidate[h] > -1.0 && s.cell.candidate[h] < 1.0));
    }
  }
}

TEST_CASE("special cases reproduce each other bit-exactly") {
  const ModelDims d = small_dims();
  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p = testing::random_params(d, 400 + trial);
    const Vector raw = testing::random_vector(rng, d.raw);
    const auto ids = testing::random_caption(rng, d.vocab, 1 + rng.below(8));
    for (auto t : kAllTransfers) {
      // Constant guidance: the per-step path equals the time-invariant cell.
      check_same_trace(forward_sequence(p, raw, ids, GuidanceMode::time_invariant(t)),
                       forward_glstm(p, raw, ids, t));

      // Sentence and NGram(1) see the same history [START] at the first step.
      const ForwardTrace s = forward_sequence(p, raw, ids, GuidanceMode::sentence(t));
      const ForwardTrace n1 = forward_sequence(p, raw, ids, GuidanceMode::ngram(1, t));
      CHECK(s.steps[0].guidance.g == n1.steps[0].guidance.g);
      CHECK(s.steps[0].logprobs == n1.steps[0].logprobs);

      // A window at least as long as the caption is the whole history.
      check_same_trace(forward_sequence(p, raw, ids, GuidanceMode::ngram(ids.size() + rng.below(3), t)), s);
    }

    // All-ones W_c with Identity: the mask is exactly one and every masked mode
    // reproduces the time-invariant trace.
    p.cond = Matrix(d.image_embed, d.vocab, 1.0);
    for (auto t : kAllTransfers) {
      const ForwardTrace base = forward_sequence(p, raw, ids, GuidanceMode::time_invariant(t));
      check_same_trace(forward_sequence(p, raw, ids, GuidanceMode::ngram(1, t)), base);
    }
    for (const auto& mode : {GuidanceMode::ngram(3, TransferKind::kIdentity), GuidanceMode::sentence(TransferKind::kIdentity)}) {
      const ForwardTrace tr = forward_sequence(p, raw, ids, mode);
      for (const auto& s : tr.steps) CHECK(s.guidance.pre == tr.image);
    }
  }
}

TEST_CASE("backward: degenerate certainty gives zero gradients") {
  const ModelDims d = small_dims();
  ModelParams p = testing::random_params(d, 21);
  p.out_proj.set_zero();
  p.out_bias.assign(d.vocab, 0.0);
  p.out_bias[kStopId] = 1000.0;
  const std::vector<TokenId> ids{kStartId, kStopId};
  const GuidanceMode mode = GuidanceMode::sentence(TransferKind::kTanh);
  Rng rng(22);
  const Vector raw = testing::random_vector(rng, d.raw);
  const ForwardTrace tr = forward_sequence(p, raw, ids, mode);
  CHECK(tr.nll() == 0.0);
  const ModelParams g = backward_sequence(p, tr, ids, mode);
  for (const auto& t : g.tensors()) {
    for (double x : t.values) CHECK(x == 0.0);
  }
}

TEST_CASE("backward: severed guidance path leaves W_c without gradient") {
  const ModelDims d = small_dims();
  ModelParams p = testing::random_params(d, 23);
  for (auto& gate : p.gates) gate.wq.set_zero();
  Rng rng(24);
  const Vector raw = testing::random_vector(rng, d.raw);
  const auto ids = testing::random_caption(rng, d.vocab, 6);
  for (const auto& mode : {GuidanceMode::ngram(2, TransferKind::kTanh), GuidanceMode::sentence(TransferKind::kSoftmax)}) {
    const ModelParams g = backward_sequence(p, forward_sequence(p, raw, ids, mode), ids, mode);
    for (double x : g.cond.data) CHECK(x == 0.0);
    for (double x : g.image_embed.data) CHECK(x == 0.0);
  }
}

TEST_CASE("backward: argument checks") {
  const ModelDims d = small_dims();
  const ModelParams p = testing::random_params(d, 25);
  const std::vector<TokenId> ids{kStartId, 3, 4, kStopId};
  const Vector raw(d.raw, 0.1);
  const ForwardTrace tr = forward_sequence(p, raw, ids, GuidanceMode::sentence(TransferKind::kTanh));
  CHECK_THROWS_AS(backward_sequence(p, tr, ids, GuidanceMode::ngram(2, TransferKind::kTanh)), std::invalid_argument);
  const std::vector<TokenId> other{kStartId, 3, 5, kStopId};
  CHECK_THROWS_AS(backward_sequence(p, tr, other, tr.mode), std::invalid_argument);
  const std::vector<TokenId> shorter{kStartId, 3, kStopId};
  CHECK_THROWS_AS(backward_sequence(p, tr, shorter, tr.mode), std::invalid_argument);
}

TEST_CASE("gradients agree with finite differences on the tiny model") {
  for (const auto& mode : {GuidanceMode::time_invariant(TransferKind::kTanh), GuidanceMode::ngram(1, TransferKind::kSigmoid),
                           GuidanceMode::ngram(3, TransferKind::kReLU), GuidanceMode::sentence(TransferKind::kSoftmax),
                           GuidanceMode::full_tensor(TransferKind::kIdentity)}) {
    const TinyProblem tp = tiny_problem(mode);
    const GradCheckReport r = gradient_check(tp.params, tp.raw, tp.caption, mode, 1e-5, 1e-4, 1e-3);
    INFO(mode.name(), " max rel error ", r.max_rel_error);
    CHECK(r.pass);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.find("W_c")->checked == tp.params.cond.data.size());
  }
}

TEST_CASE("parameter layout") {
  const ModelDims d = small_dims();
  ModelParams p = ModelParams::zeros(d, true);
  const auto ts = p.tensors();
  REQUIRE(ts.size() == 24);
  CHECK(ts[0].name == "W_e");
  CHECK(ts[1].name == "W_c");
  CHECK(ts[2].name == "W_img");
  CHECK(ts[3].name == "b_img");
  CHECK(ts[4].name == "W_ix");
  CHECK(ts[19].name == "b_c");
  CHECK(ts[20].name == "W_d");
  CHECK(ts[23].name == "b3");
  std::size_t total = 0;
  for (const auto& t : ts) total += t.values.size();
  CHECK(total == p.parameter_count());
  CHECK_NOTHROW(p.validate());
  p.out_bias.pop_back();
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("init_params is deterministic") {
  const ModelDims d = small_dims();
  const ModelInit init;
  CHECK(init_params(d, init, 4) == init_params(d, init, 4));
  CHECK(init_params(d, init, 4) != init_params(d, init, 5));
  ModelParams p = init_params(d, init, 4);
  reset_cond(p, 1.0, 0.0, 9);
  CHECK(p.cond.data == Vector(d.image_embed * d.vocab, 1.0));
}

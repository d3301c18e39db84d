#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "textcond/numerics.hpp"
#include "textcond/vocab.hpp"

namespace textcond {

struct ModelDims {
  std::size_t vocab = 0;        // V
  std::size_t embed = 0;        // word embedding size
  std::size_t hidden = 0;       // H
  std::size_t image_embed = 0;  // size of I, the mask and g_t
  std::size_t raw = 0;          // size of the precomputed image feature

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

enum class GuidanceVariant { kTimeInvariant, kNGram, kSentence, kFullTensor };

/// How the guidance vector g_t is built from the image and the words
/// generated so far.
///   kTimeInvariant: g = transfer(I), identical at every step.
///   kNGram:         g_t = transfer(I * (W_c h_t)), h_t = mean one-hot of the
///                   last n history tokens. The mask is evaluated as
///                   W_c h_t / sum(h_t) so that rounding in h_t cannot move an
///                   all-ones W_c away from a mask of exactly 1.
///   kSentence:      as kNGram with the whole history.
///   kFullTensor:    g_t^i = transfer(sum_jk W3_ijk I^j h_t^k + b^i), with h_t
///                   the n-gram history (n = 1 by default).
struct GuidanceMode {
  GuidanceVariant variant = GuidanceVariant::kSentence;
  std::size_t n = 1;
  TransferKind transfer = TransferKind::kTanh;

  void validate() const;
  bool uses_history() const { return variant != GuidanceVariant::kTimeInvariant; }
  std::string name() const;

  static GuidanceMode time_invariant(TransferKind t) { return {GuidanceVariant::kTimeInvariant, 1, t}; }
  static GuidanceMode ngram(std::size_t n, TransferKind t) { return {GuidanceVariant::kNGram, n, t}; }
  static GuidanceMode sentence(TransferKind t) { return {GuidanceVariant::kSentence, 1, t}; }
  static GuidanceMode full_tensor(TransferKind t, std::size_t n = 1) { return {GuidanceVariant::kFullTensor, n, t}; }

  friend bool operator==(const GuidanceMode&, const GuidanceMode&) = default;
};

std::string_view variant_name(GuidanceVariant v);
/// Accepts "time_invariant", "ngram", "sentence", "full_tensor".
GuidanceVariant parse_variant(std::string_view name);

/// Largest D_img * D_img * V the full-tensor reference path accepts.
inline constexpr std::size_t kMaxFullTensorEntries = 10'000'000;

/// Weights of the fully coupled image/text guidance. Entry (i, j, k) is stored
/// at weights(i, j * vocab + k).
struct FullTensorParams {
  Matrix weights;
  Vector bias;
  std::size_t vocab = 0;

  static FullTensorParams zeros(std::size_t image_embed, std::size_t vocab);
  Scalar at(std::size_t i, std::size_t j, std::size_t k) const { return weights(i, j * vocab + k); }
  Scalar& at(std::size_t i, std::size_t j, std::size_t k) { return weights(i, j * vocab + k); }

  friend bool operator==(const FullTensorParams&, const FullTensorParams&) = default;
};

enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCellGate = 3 };
inline constexpr std::size_t kNumGates = 4;

/// Weights feeding one gate: word input, previous hidden state, guidance.
struct GateParams {
  Matrix wx;  // H x embed
  Matrix wm;  // H x H
  Matrix wq;  // H x image_embed
  Vector b;   // H

  friend bool operator==(const GateParams&, const GateParams&) = default;
};

enum class ParamGroup {
  kLanguage,  // word embedding, gates, output projection
  kImage,     // W_img, b_img (stands in for the CNN)
  kCond,      // W_c
  kTensor,    // full-tensor guidance
};

struct TensorRef {
  std::string_view name;
  ParamGroup group;
  std::span<Scalar> values;
};

struct ConstTensorRef {
  std::string_view name;
  ParamGroup group;
  std::span<const Scalar> values;
};

/// Every learnable tensor. Gradients use the same type.
struct ModelParams {
  ModelDims dims;
  Matrix word_embed;   // W_e: embed x V
  Matrix cond;         // W_c: image_embed x V
  Matrix image_embed;  // W_img: image_embed x raw
  Vector image_bias;   // b_img
  std::array<GateParams, kNumGates> gates;
  Matrix out_proj;     // W_d: V x H
  Vector out_bias;     // b_d
  std::optional<FullTensorParams> full_tensor;

  /// All-zero parameters; the full tensor is allocated when requested.
  static ModelParams zeros(const ModelDims& dims, bool with_full_tensor = false);
  ModelParams zeros_like() const;

  /// Tensors in the fixed order used by checkpoints and reports:
  /// W_e, W_c, W_img, b_img, then W_ix W_im W_iq b_i, W_fx ..., W_ox ...,
  /// W_cx ..., then W_d, b_d, and W3, b3 when the full tensor is present.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;

  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Initialization scales. W_e ~ N(0, 0.01^2) and W_c ~ N(1, 0.001^2) follow the
/// text-conditional setup; `cond_stddev = 0` gives the all-ones W_c.
struct ModelInit {
  double word_embed_stddev = 0.01;
  double weight_stddev = 0.08;
  /// 0 selects 1/sqrt(raw).
  double image_embed_stddev = 0.0;
  double cond_mean = 1.0;
  double cond_stddev = 0.001;
  double tensor_stddev = 0.01;
};

/// Tensors are drawn in the order of ModelParams::tensors() from one Rng(seed).
/// Biases start at zero.
ModelParams init_params(const ModelDims& dims, const ModelInit& init, std::uint64_t seed,
                        bool with_full_tensor = false);

/// Draws a fresh W_c ~ N(mean, stddev^2).
void reset_cond(ModelParams& params, double mean, double stddev, std::uint64_t seed);

struct LstmState {
  Vector c;
  Vector m;

  static LstmState zeros(std::size_t hidden) { return {Vector(hidden, 0.0), Vector(hidden, 0.0)}; }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

/// Column `word` of W_e.
Vector embed_word(const ModelParams& params, TokenId word);
/// I = W_img raw + b_img.
Vector embed_image(const ModelParams& params, std::span<const Scalar> raw);

/// Mean of the one-hot vectors of the last min(n, len) history tokens
/// (the whole history for kSentence). TimeInvariant returns an empty vector.
Vector history_vector(std::span<const TokenId> history, const GuidanceMode& mode, std::size_t vocab);

struct GuidanceResult {
  Vector mask;  // W_c h (masked modes only)
  Vector pre;   // argument of the transfer function
  Vector g;
};

/// Guidance for the time-invariant and masked modes (and the full tensor,
/// which it forwards to guidance_full_tensor).
GuidanceResult guidance_detail(const ModelParams& params, std::span<const Scalar> image,
                               std::span<const Scalar> hist, const GuidanceMode& mode);
Vector guidance(const ModelParams& params, std::span<const Scalar> image,
                std::span<const Scalar> hist, const GuidanceMode& mode);
Vector guidance_full_tensor(const FullTensorParams& ft, std::span<const Scalar> image,
                            std::span<const Scalar> text, TransferKind transfer);

/// Per-gate guidance contributions W_*q g, computed once when g is constant.
using GuidanceTerms = std::array<Vector, kNumGates>;
GuidanceTerms guidance_terms(const ModelParams& params, std::span<const Scalar> g);

struct StepResult {
  LstmState state;
  std::array<Vector, kNumGates> pre;  // gate pre-activations
  Vector input_gate;
  Vector forget_gate;
  Vector output_gate;
  Vector candidate;                   // tanh(pre[kCellGate])
};

/// One td-gLSTM step:
///   i, f, o = sigmoid(W_*x x + W_*m m_prev + W_*q g + b_*)
///   c = f * c_prev + i * tanh(W_cx x + W_cm m_prev + W_cq g + b_c)
///   m = o * c
StepResult glstm_step(const ModelParams& params, std::span<const Scalar> x, const LstmState& prev,
                      std::span<const Scalar> g);
/// The same step with the guidance contributions supplied precomputed.
StepResult glstm_step(const ModelParams& params, std::span<const Scalar> x, const LstmState& prev,
                      const GuidanceTerms& terms);

struct StepTrace {
  TokenId input = 0;
  TokenId target = 0;
  Vector x;
  Vector hist;
  GuidanceResult guidance;
  StepResult cell;
  Vector logits;
  Vector logprobs;
};

struct ForwardTrace {
  GuidanceMode mode;
  Vector raw;
  Vector image;  // I
  std::vector<StepTrace> steps;

  /// -sum_t logprobs_t[target_t]
  Scalar nll() const;
};

/// Teacher-forced pass over START w_1 ... w_{N-1} STOP from the zero state.
/// Step t reads token_ids[t-1] and predicts token_ids[t].
ForwardTrace forward_sequence(const ModelParams& params, std::span<const Scalar> raw,
                              std::span<const TokenId> token_ids, const GuidanceMode& mode);

/// Time-invariant gLSTM pass: g = transfer(I) and its gate contributions are
/// computed once and reused at every step.
ForwardTrace forward_glstm(const ModelParams& params, std::span<const Scalar> raw,
                           std::span<const TokenId> token_ids, TransferKind transfer);

/// Gradient of trace.nll() with respect to every parameter, added into
/// `grads` scaled by `scale`. Histories are constants; nothing flows into them.
void accumulate_gradients(const ModelParams& params, const ForwardTrace& trace,
                          std::span<const TokenId> token_ids, ModelParams& grads, Scalar scale = 1.0);

ModelParams backward_sequence(const ModelParams& params, const ForwardTrace& trace,
                              std::span<const TokenId> token_ids, const GuidanceMode& mode);

/// Incremental decoder used by greedy and beam search. Uses the same
/// arithmetic as forward_sequence.
class StepDecoder {
 public:
  StepDecoder(const ModelParams& params, std::span<const Scalar> raw, const GuidanceMode& mode);

  const Vector& image() const { return image_; }

  /// Advances from `state` having generated `history` (which starts with
  /// START); returns the new state and log-probabilities of the next token.
  std::pair<LstmState, Vector> advance(const LstmState& state, std::span<const TokenId> history) const;

 private:
  const ModelParams* params_;
  GuidanceMode mode_;
  Vector image_;
};

}  // namespace textcond

#include "textcond/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace textcond {

namespace {

Scalar history_total(std::span<const Scalar> hist) {
  Scalar total = 0.0;
  for (Scalar x : hist) total += x;
  return total;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

constexpr std::array<std::array<std::string_view, 4>, kNumGates> kGateNames = {{
    {"W_ix", "W_im", "W_iq", "b_i"},
    {"W_fx", "W_fm", "W_fq", "b_f"},
    {"W_ox", "W_om", "W_oq", "b_o"},
    {"W_cx", "W_cm", "W_cq", "b_c"},
}};

template <typename Params, typename Ref, typename Fn>
std::vector<Ref> collect(Params& p, Fn&& make) {
  std::vector<Ref> out;
  out.push_back(make("W_e", ParamGroup::kLanguage, p.word_embed.data));
  out.push_back(make("W_c", ParamGroup::kCond, p.cond.data));
  out.push_back(make("W_img", ParamGroup::kImage, p.image_embed.data));
  out.push_back(make("b_img", ParamGroup::kImage, p.image_bias));
  for (std::size_t g = 0; g < kNumGates; ++g) {
    out.push_back(make(kGateNames[g][0], ParamGroup::kLanguage, p.gates[g].wx.data));
    out.push_back(make(kGateNames[g][1], ParamGroup::kLanguage, p.gates[g].wm.data));
    out.push_back(make(kGateNames[g][2], ParamGroup::kLanguage, p.gates[g].wq.data));
    out.push_back(make(kGateNames[g][3], ParamGroup::kLanguage, p.gates[g].b));
  }
  out.push_back(make("W_d", ParamGroup::kLanguage, p.out_proj.data));
  out.push_back(make("b_d", ParamGroup::kLanguage, p.out_bias));
  if (p.full_tensor) {
    out.push_back(make("W3", ParamGroup::kTensor, p.full_tensor->weights.data));
    out.push_back(make("b3", ParamGroup::kTensor, p.full_tensor->bias));
  }
  return out;
}

void check_matrix(const Matrix& m, std::size_t rows, std::size_t cols, std::string_view name) {
  require(m.rows == rows && m.cols == cols && m.data.size() == rows * cols,
          std::string(name) + ": shape mismatch");
}

void check_vector(const Vector& v, std::size_t len, std::string_view name) {
  require(v.size() == len, std::string(name) + ": length mismatch");
}

Vector softmax_from_logprobs(std::span<const Scalar> logprobs) {
  Vector p(logprobs.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logprobs[i]);
  return p;
}

}  // namespace

void ModelDims::validate() const {
  require(vocab >= kNumReserved, "ModelDims: vocab must be >= 3");
  require(embed > 0 && hidden > 0 && image_embed > 0 && raw > 0, "ModelDims: all dims must be positive");
}

void GuidanceMode::validate() const {
  if (variant == GuidanceVariant::kNGram || variant == GuidanceVariant::kFullTensor) {
    require(n >= 1, "GuidanceMode: n must be >= 1");
  }
}

std::string GuidanceMode::name() const {
  std::string out(variant_name(variant));
  if (variant == GuidanceVariant::kNGram || (variant == GuidanceVariant::kFullTensor && n != 1)) {
    out += "(" + std::to_string(n) + ")";
  }
  out += "/";
  out += transfer_name(transfer);
  return out;
}

std::string_view variant_name(GuidanceVariant v) {
  switch (v) {
    case GuidanceVariant::kTimeInvariant: return "time_invariant";
    case GuidanceVariant::kNGram: return "ngram";
    case GuidanceVariant::kSentence: return "sentence";
    case GuidanceVariant::kFullTensor: return "full_tensor";
  }
  return "unknown";
}

GuidanceVariant parse_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "time_invariant") return GuidanceVariant::kTimeInvariant;
  if (lower == "ngram") return GuidanceVariant::kNGram;
  if (lower == "sentence") return GuidanceVariant::kSentence;
  if (lower == "full_tensor") return GuidanceVariant::kFullTensor;
  throw std::invalid_argument("unknown guidance variant: " + std::string(name));
}

FullTensorParams FullTensorParams::zeros(std::size_t image_embed, std::size_t vocab) {
  require(image_embed * image_embed * vocab <= kMaxFullTensorEntries,
          "full-tensor guidance is limited to image_embed^2 * vocab <= 1e7 entries");
  return {Matrix(image_embed, image_embed * vocab), Vector(image_embed, 0.0), vocab};
}

ModelParams ModelParams::zeros(const ModelDims& d, bool with_full_tensor) {
  d.validate();
  ModelParams p;
  p.dims = d;
  p.word_embed = Matrix(d.embed, d.vocab);
  p.cond = Matrix(d.image_embed, d.vocab);
  p.image_embed = Matrix(d.image_embed, d.raw);
  p.image_bias = Vector(d.image_embed, 0.0);
  for (auto& g : p.gates) {
    g.wx = Matrix(d.hidden, d.embed);
    g.wm = Matrix(d.hidden, d.hidden);
    g.wq = Matrix(d.hidden, d.image_embed);
    g.b = Vector(d.hidden, 0.0);
  }
  p.out_proj = Matrix(d.vocab, d.hidden);
  p.out_bias = Vector(d.vocab, 0.0);
  if (with_full_tensor) p.full_tensor = FullTensorParams::zeros(d.image_embed, d.vocab);
  return p;
}

ModelParams ModelParams::zeros_like() const { return zeros(dims, full_tensor.has_value()); }

std::vector<TensorRef> ModelParams::tensors() {
  return collect<ModelParams, TensorRef>(*this, [](std::string_view n, ParamGroup g, auto& v) {
    return TensorRef{n, g, std::span<Scalar>(v)};
  });
}

std::vector<ConstTensorRef> ModelParams::tensors() const {
  return collect<const ModelParams, ConstTensorRef>(*this, [](std::string_view n, ParamGroup g, const auto& v) {
    return ConstTensorRef{n, g, std::span<const Scalar>(v)};
  });
}

void ModelParams::validate() const {
  dims.validate();
  const auto& d = dims;
  check_matrix(word_embed, d.embed, d.vocab, "W_e");
  check_matrix(cond, d.image_embed, d.vocab, "W_c");
  check_matrix(image_embed, d.image_embed, d.raw, "W_img");
  check_vector(image_bias, d.image_embed, "b_img");
  for (std::size_t g = 0; g < kNumGates; ++g) {
    check_matrix(gates[g].wx, d.hidden, d.embed, kGateNames[g][0]);
    check_matrix(gates[g].wm, d.hidden, d.hidden, kGateNames[g][1]);
    check_matrix(gates[g].wq, d.hidden, d.image_embed, kGateNames[g][2]);
    check_vector(gates[g].b, d.hidden, kGateNames[g][3]);
  }
  check_matrix(out_proj, d.vocab, d.hidden, "W_d");
  check_vector(out_bias, d.vocab, "b_d");
  if (full_tensor) {
    require(full_tensor->vocab == d.vocab, "W3: vocab mismatch");
    check_matrix(full_tensor->weights, d.image_embed, d.image_embed * d.vocab, "W3");
    check_vector(full_tensor->bias, d.image_embed, "b3");
  }
  for (const auto& t : tensors()) {
    if (!all_finite(t.values)) throw NumericError(std::string(t.name) + ": non-finite entry");
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors()) total += t.values.size();
  return total;
}

ModelParams init_params(const ModelDims& dims, const ModelInit& init, std::uint64_t seed,
                        bool with_full_tensor) {
  ModelParams p = ModelParams::zeros(dims, with_full_tensor);
  Rng rng(seed);
  const double img_std = init.image_embed_stddev > 0.0
                             ? init.image_embed_stddev
                             : 1.0 / std::sqrt(static_cast<double>(dims.raw));
  auto fill = [&rng](Matrix& m, double mean, double stddev) {
    m = gaussian_init(m.rows, m.cols, mean, stddev, rng);
  };
  fill(p.word_embed, 0.0, init.word_embed_stddev);
  fill(p.cond, init.cond_mean, init.cond_stddev);
  fill(p.image_embed, 0.0, img_std);
  for (auto& g : p.gates) {
    fill(g.wx, 0.0, init.weight_stddev);
    fill(g.wm, 0.0, init.weight_stddev);
    fill(g.wq, 0.0, init.weight_stddev);
  }
  fill(p.out_proj, 0.0, init.weight_stddev);
  if (p.full_tensor) fill(p.full_tensor->weights, 0.0, init.tensor_stddev);
  return p;
}

void reset_cond(ModelParams& params, double mean, double stddev, std::uint64_t seed) {
  params.cond = gaussian_init(params.cond.rows, params.cond.cols, mean, stddev, seed);
}

Vector embed_word(const ModelParams& params, TokenId word) {
  require(word < params.dims.vocab, "embed_word: word id out of range");
  return params.word_embed.column(word);
}

Vector embed_image(const ModelParams& params, std::span<const Scalar> raw) {
  require(raw.size() == params.dims.raw, "embed_image: raw feature dimension mismatch");
  return affine(params.image_embed, raw, params.image_bias);
}

Vector history_vector(std::span<const TokenId> history, const GuidanceMode& mode, std::size_t vocab) {
  if (!mode.uses_history()) return {};
  require(!history.empty(), "history_vector: empty history");
  std::size_t count = history.size();
  if (mode.variant != GuidanceVariant::kSentence) count = std::min(count, mode.n);

  Vector h(vocab, 0.0);
  for (std::size_t i = history.size() - count; i < history.size(); ++i) {
    require(history[i] < vocab, "history_vector: token id out of range");
    h[history[i]] += 1.0;
  }
  const Scalar denom = static_cast<Scalar>(count);
  for (auto& v : h) v /= denom;
  return h;
}

Vector guidance_full_tensor(const FullTensorParams& ft, std::span<const Scalar> image,
                            std::span<const Scalar> text, TransferKind transfer) {
  const std::size_t d = ft.bias.size();
  require(image.size() == d && ft.weights.rows == d, "guidance_full_tensor: image dimension mismatch");
  require(text.size() == ft.vocab && ft.weights.cols == d * ft.vocab,
          "guidance_full_tensor: text dimension mismatch");
  Vector pre(d);
  for (std::size_t i = 0; i < d; ++i) {
    Scalar acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const Scalar* w = ft.weights.data.data() + i * ft.weights.cols + j * ft.vocab;
      for (std::size_t k = 0; k < ft.vocab; ++k) {
        if (text[k] != 0.0) acc += w[k] * image[j] * text[k];
      }
    }
    pre[i] = acc + ft.bias[i];
  }
  return transfer_apply(transfer, pre);
}

GuidanceResult guidance_detail(const ModelParams& params, std::span<const Scalar> image,
                               std::span<const Scalar> hist, const GuidanceMode& mode) {
  require(image.size() == params.dims.image_embed, "guidance: image dimension mismatch");
  GuidanceResult r;
  switch (mode.variant) {
    case GuidanceVariant::kTimeInvariant:
      r.pre.assign(image.begin(), image.end());
      break;
    case GuidanceVariant::kNGram:
    case GuidanceVariant::kSentence:
      require(hist.size() == params.dims.vocab, "guidance: history dimension mismatch");
      r.mask = matvec(params.cond, hist);
      // hist sums to one in exact arithmetic; dividing by its rounded sum makes
      // an all-ones W_c give a mask of exactly 1.
      {
        const Scalar total = history_total(hist);
        require(total > 0.0, "guidance: history vector has no mass");
        for (auto& x : r.mask) x /= total;
      }
      r.pre = hadamard(image, r.mask);
      break;
    case GuidanceVariant::kFullTensor: {
      require(params.full_tensor.has_value(), "guidance: full-tensor parameters not allocated");
      require(hist.size() == params.dims.vocab, "guidance: history dimension mismatch");
      const auto& ft = *params.full_tensor;
      // Identity transfer leaves the pre-activation in g; reuse it.
      r.pre = guidance_full_tensor(ft, image, hist, TransferKind::kIdentity);
      break;
    }
  }
  r.g = transfer_apply(mode.transfer, r.pre);
  return r;
}

Vector guidance(const ModelParams& params, std::span<const Scalar> image,
                std::span<const Scalar> hist, const GuidanceMode& mode) {
  return guidance_detail(params, image, hist, mode).g;
}

GuidanceTerms guidance_terms(const ModelParams& params, std::span<const Scalar> g) {
  require(g.size() == params.dims.image_embed, "guidance_terms: guidance dimension mismatch");
  GuidanceTerms terms;
  for (std::size_t k = 0; k < kNumGates; ++k) terms[k] = matvec(params.gates[k].wq, g);
  return terms;
}

StepResult glstm_step(const ModelParams& params, std::span<const Scalar> x, const LstmState& prev,
                      const GuidanceTerms& terms) {
  const std::size_t h = params.dims.hidden;
  require(x.size() == params.dims.embed, "glstm_step: input dimension mismatch");
  require(prev.c.size() == h && prev.m.size() == h, "glstm_step: state dimension mismatch");

  StepResult r;
  for (std::size_t k = 0; k < kNumGates; ++k) {
    const auto& gp = params.gates[k];
    require(terms[k].size() == h, "glstm_step: guidance term dimension mismatch");
    Vector pre = matvec(gp.wx, x);
    const Vector rec = matvec(gp.wm, prev.m);
    for (std::size_t i = 0; i < h; ++i) pre[i] = ((pre[i] + rec[i]) + terms[k][i]) + gp.b[i];
    r.pre[k] = std::move(pre);
  }
  r.input_gate.resize(h);
  r.forget_gate.resize(h);
  r.output_gate.resize(h);
  r.candidate.resize(h);
  r.state.c.resize(h);
  r.state.m.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    r.input_gate[i] = sigmoid(r.pre[kInputGate][i]);
    r.forget_gate[i] = sigmoid(r.pre[kForgetGate][i]);
    r.output_gate[i] = sigmoid(r.pre[kOutputGate][i]);
    r.candidate[i] = std::tanh(r.pre[kCellGate][i]);
    r.state.c[i] = r.forget_gate[i] * prev.c[i] + r.input_gate[i] * r.candidate[i];
    r.state.m[i] = r.output_gate[i] * r.state.c[i];
  }
  return r;
}

StepResult glstm_step(const ModelParams& params, std::span<const Scalar> x, const LstmState& prev,
                      std::span<const Scalar> g) {
  return glstm_step(params, x, prev, guidance_terms(params, g));
}

Scalar ForwardTrace::nll() const {
  Scalar total = 0.0;
  for (const auto& s : steps) total -= s.logprobs[s.target];
  return total;
}

namespace {

void validate_tokens(const ModelParams& params, std::span<const TokenId> ids) {
  require(ids.size() >= 2, "forward_sequence: caption needs at least START and STOP");
  require(ids.front() == kStartId, "forward_sequence: caption must begin with START");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < params.dims.vocab, "forward_sequence: token id out of range");
    if (i > 0) require(ids[i] != kStartId, "forward_sequence: interior START");
  }
}

void finish_step(const ModelParams& params, StepTrace& st) {
  st.logits = affine(params.out_proj, st.cell.state.m, params.out_bias);
  st.logprobs = log_softmax(st.logits);
}

}  // namespace

ForwardTrace forward_sequence(const ModelParams& params, std::span<const Scalar> raw,
                              std::span<const TokenId> token_ids, const GuidanceMode& mode) {
  mode.validate();
  validate_tokens(params, token_ids);
  ForwardTrace trace;
  trace.mode = mode;
  trace.raw.assign(raw.begin(), raw.end());
  trace.image = embed_image(params, raw);

  LstmState state = LstmState::zeros(params.dims.hidden);
  for (std::size_t t = 1; t < token_ids.size(); ++t) {
    StepTrace st;
    st.input = token_ids[t - 1];
    st.target = token_ids[t];
    st.x = embed_word(params, st.input);
    st.hist = history_vector(token_ids.subspan(0, t), mode, params.dims.vocab);
    st.guidance = guidance_detail(params, trace.image, st.hist, mode);
    st.cell = glstm_step(params, st.x, state, st.guidance.g);
    finish_step(params, st);
    state = st.cell.state;
    trace.steps.push_back(std::move(st));
  }
  return trace;
}

ForwardTrace forward_glstm(const ModelParams& params, std::span<const Scalar> raw,
                           std::span<const TokenId> token_ids, TransferKind transfer) {
  const GuidanceMode mode = GuidanceMode::time_invariant(transfer);
  validate_tokens(params, token_ids);
  ForwardTrace trace;
  trace.mode = mode;
  trace.raw.assign(raw.begin(), raw.end());
  trace.image = embed_image(params, raw);

  const GuidanceResult fixed = guidance_detail(params, trace.image, {}, mode);
  const GuidanceTerms terms = guidance_terms(params, fixed.g);

  LstmState state = LstmState::zeros(params.dims.hidden);
  for (std::size_t t = 1; t < token_ids.size(); ++t) {
    StepTrace st;
    st.input = token_ids[t - 1];
    st.target = token_ids[t];
    st.x = embed_word(params, st.input);
    st.guidance = fixed;
    st.cell = glstm_step(params, st.x, state, terms);
    finish_step(params, st);
    state = st.cell.state;
    trace.steps.push_back(std::move(st));
  }
  return trace;
}

void accumulate_gradients(const ModelParams& params, const ForwardTrace& trace,
                          std::span<const TokenId> token_ids, ModelParams& grads, Scalar scale) {
  require(trace.steps.size() + 1 == token_ids.size(), "backward: trace length does not match caption");
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    require(trace.steps[t].input == token_ids[t] && trace.steps[t].target == token_ids[t + 1],
            "backward: trace was produced for a different caption");
  }
  require(grads.dims == params.dims && grads.full_tensor.has_value() == params.full_tensor.has_value(),
          "backward: gradient buffer shape mismatch");

  const std::size_t h = params.dims.hidden;
  const std::size_t d = params.dims.image_embed;
  const GuidanceMode& mode = trace.mode;

  Vector dm_next(h, 0.0);
  Vector dc_next(h, 0.0);
  Vector d_image(d, 0.0);
  const Vector zeros(h, 0.0);

  for (std::size_t t = trace.steps.size(); t-- > 0;) {
    const StepTrace& st = trace.steps[t];
    const Vector& c_prev = t > 0 ? trace.steps[t - 1].cell.state.c : zeros;
    const Vector& m_prev = t > 0 ? trace.steps[t - 1].cell.state.m : zeros;

    // Output layer: d(-log p_target)/d logits = softmax - onehot.
    Vector dlogits = softmax_from_logprobs(st.logprobs);
    dlogits[st.target] -= 1.0;
    for (auto& v : dlogits) v *= scale;
    add_outer(grads.out_proj, dlogits, st.cell.state.m);
    add_into(grads.out_bias, dlogits);

    Vector dm = dm_next;
    add_matvec_transposed(params.out_proj, dlogits, dm);

    const auto& cell = st.cell;
    Vector dc = dc_next;
    std::array<Vector, kNumGates> dpre;
    for (auto& v : dpre) v.assign(h, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const Scalar c = cell.state.c[i];
      const Scalar o = cell.output_gate[i];
      const Scalar in = cell.input_gate[i];
      const Scalar f = cell.forget_gate[i];
      const Scalar cand = cell.candidate[i];
      const Scalar d_o = dm[i] * c;
      dc[i] += dm[i] * o;
      dpre[kOutputGate][i] = d_o * o * (1.0 - o);
      dpre[kInputGate][i] = dc[i] * cand * in * (1.0 - in);
      dpre[kForgetGate][i] = dc[i] * c_prev[i] * f * (1.0 - f);
      dpre[kCellGate][i] = dc[i] * in * (1.0 - cand * cand);
      dc_next[i] = dc[i] * f;
    }

    Vector dx(params.dims.embed, 0.0);
    Vector dg(d, 0.0);
    std::fill(dm_next.begin(), dm_next.end(), 0.0);
    for (std::size_t k = 0; k < kNumGates; ++k) {
      const auto& gp = params.gates[k];
      auto& gg = grads.gates[k];
      add_outer(gg.wx, dpre[k], st.x);
      add_outer(gg.wm, dpre[k], m_prev);
      add_outer(gg.wq, dpre[k], st.guidance.g);
      add_into(gg.b, dpre[k]);
      add_matvec_transposed(gp.wx, dpre[k], dx);
      add_matvec_transposed(gp.wm, dpre[k], dm_next);
      add_matvec_transposed(gp.wq, dpre[k], dg);
    }

    // x_t is column `input` of W_e.
    for (std::size_t r = 0; r < params.dims.embed; ++r) grads.word_embed(r, st.input) += dx[r];

    // Guidance: g = transfer(pre).
    const Vector dpre_g = transfer_backward(mode.transfer, st.guidance.pre, st.guidance.g, dg);
    switch (mode.variant) {
      case GuidanceVariant::kTimeInvariant:
        add_into(d_image, dpre_g);
        break;
      case GuidanceVariant::kNGram:
      case GuidanceVariant::kSentence: {
        // pre = I * mask, mask = W_c hist / sum(hist).
        const Scalar total = history_total(st.hist);
        Vector dmask(d);
        for (std::size_t i = 0; i < d; ++i) {
          d_image[i] += dpre_g[i] * st.guidance.mask[i];
          dmask[i] = dpre_g[i] * trace.image[i] / total;
        }
        add_outer(grads.cond, dmask, st.hist);
        break;
      }
      case GuidanceVariant::kFullTensor: {
        const auto& ft = *params.full_tensor;
        auto& gft = *grads.full_tensor;
        add_into(gft.bias, dpre_g);
        for (std::size_t k = 0; k < ft.vocab; ++k) {
          const Scalar s = st.hist[k];
          if (s == 0.0) continue;
          for (std::size_t i = 0; i < d; ++i) {
            const Scalar di = dpre_g[i];
            for (std::size_t j = 0; j < d; ++j) {
              gft.at(i, j, k) += di * trace.image[j] * s;
              d_image[j] += di * ft.at(i, j, k) * s;
            }
          }
        }
        break;
      }
    }
  }

  // I = W_img raw + b_img.
  add_outer(grads.image_embed, d_image, trace.raw);
  add_into(grads.image_bias, d_image);
}

ModelParams backward_sequence(const ModelParams& params, const ForwardTrace& trace,
                              std::span<const TokenId> token_ids, const GuidanceMode& mode) {
  require(mode == trace.mode, "backward_sequence: mode differs from the forward pass");
  ModelParams grads = params.zeros_like();
  accumulate_gradients(params, trace, token_ids, grads, 1.0);
  return grads;
}

StepDecoder::StepDecoder(const ModelParams& params, std::span<const Scalar> raw, const GuidanceMode& mode)
    : params_(&params), mode_(mode), image_(embed_image(params, raw)) {
  mode.validate();
}

std::pair<LstmState, Vector> StepDecoder::advance(const LstmState& state,
                                                  std::span<const TokenId> history) const {
  require(!history.empty(), "StepDecoder::advance: empty history");
  const auto& params = *params_;
  StepTrace st;
  st.input = history.back();
  st.x = embed_word(params, st.input);
  st.hist = history_vector(history, mode_, params.dims.vocab);
  st.guidance = guidance_detail(params, image_, st.hist, mode_);
  st.cell = glstm_step(params, st.x, state, st.guidance.g);
  finish_step(params, st);
  return {std::move(st.cell.state), std::move(st.logprobs)};
}

}  // namespace textcond

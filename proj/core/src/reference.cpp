#include "textcond/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace textcond {

namespace {

using Real = ReferenceModel::Real;

Real logistic(Real x) { return 1.0L / (1.0L + std::exp(-x)); }

std::vector<Real> apply(TransferKind kind, std::vector<Real> v) {
  switch (kind) {
    case TransferKind::kIdentity:
      break;
    case TransferKind::kSigmoid:
      for (auto& x : v) x = logistic(x);
      break;
    case TransferKind::kTanh:
      for (auto& x : v) x = std::tanh(x);
      break;
    case TransferKind::kReLU:
      for (auto& x : v) x = std::max(x, 0.0L);
      break;
    case TransferKind::kSoftmax: {
      Real peak = v[0];
      for (Real x : v) peak = std::max(peak, x);
      Real z = 0.0L;
      for (auto& x : v) z += std::exp(x - peak);
      for (auto& x : v) x = std::exp(x - peak) / z;
      break;
    }
  }
  return v;
}

}  // namespace

ReferenceModel::ReferenceModel(const ModelParams& params) : dims_(params.dims), has_tensor_(params.full_tensor.has_value()) {
  for (const auto& t : params.tensors()) {
    names_.push_back(t.name);
    tensors_.emplace_back(t.values.begin(), t.values.end());
  }
}

const std::vector<Real>& ReferenceModel::get(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw std::invalid_argument("ReferenceModel: no tensor " + std::string(name));
}

std::vector<std::vector<Real>> ReferenceModel::logprobs(std::span<const Scalar> raw,
                                                        std::span<const TokenId> ids,
                                                        const GuidanceMode& mode) const {
  const std::size_t V = dims_.vocab, E = dims_.embed, H = dims_.hidden, D = dims_.image_embed, R = dims_.raw;
  const auto& We = get("W_e");
  const auto& Wc = get("W_c");
  const auto& Wimg = get("W_img");
  const auto& bimg = get("b_img");
  const auto& Wd = get("W_d");
  const auto& bd = get("b_d");
  const char gate_letters[4] = {'i', 'f', 'o', 'c'};

  std::vector<Real> image(D);
  for (std::size_t j = 0; j < D; ++j) {
    Real s = bimg[j];
    for (std::size_t r = 0; r < R; ++r) s += Wimg[j * R + r] * static_cast<Real>(raw[r]);
    image[j] = s;
  }

  std::vector<Real> c(H, 0.0L), m(H, 0.0L);
  std::vector<std::vector<Real>> out;
  for (std::size_t t = 1; t < ids.size(); ++t) {
    const TokenId word = ids[t - 1];
    std::vector<Real> x(E);
    for (std::size_t e = 0; e < E; ++e) x[e] = We[e * V + word];

    // History weights over the last `window` tokens.
    std::vector<Real> hist(V, 0.0L);
    std::size_t window = t;
    if (mode.variant == GuidanceVariant::kNGram || mode.variant == GuidanceVariant::kFullTensor) {
      window = std::min(t, mode.n);
    }
    for (std::size_t k = t - window; k < t; ++k) hist[ids[k]] += 1.0L / static_cast<Real>(window);

    std::vector<Real> pre(D);
    switch (mode.variant) {
      case GuidanceVariant::kTimeInvariant:
        pre = image;
        break;
      case GuidanceVariant::kNGram:
      case GuidanceVariant::kSentence:
        for (std::size_t i = 0; i < D; ++i) {
          Real mask = 0.0L;
          for (std::size_t k = 0; k < V; ++k) mask += Wc[i * V + k] * hist[k];
          pre[i] = image[i] * mask;
        }
        break;
      case GuidanceVariant::kFullTensor: {
        if (!has_tensor_) throw std::invalid_argument("ReferenceModel: no full tensor");
        const auto& W3 = get("W3");
        const auto& b3 = get("b3");
        for (std::size_t i = 0; i < D; ++i) {
          Real s = b3[i];
          for (std::size_t j = 0; j < D; ++j) {
            for (std::size_t k = 0; k < V; ++k) s += W3[(i * D + j) * V + k] * image[j] * hist[k];
          }
          pre[i] = s;
        }
        break;
      }
    }
    const std::vector<Real> g = apply(mode.transfer, pre);

    std::vector<std::vector<Real>> act(4, std::vector<Real>(H));
    for (std::size_t q = 0; q < 4; ++q) {
      const std::string l(1, gate_letters[q]);
      const auto& Wx = get("W_" + l + "x");
      const auto& Wm = get("W_" + l + "m");
      const auto& Wq = get("W_" + l + "q");
      const auto& b = get("b_" + l);
      for (std::size_t h = 0; h < H; ++h) {
        Real s = b[h];
        for (std::size_t e = 0; e < E; ++e) s += Wx[h * E + e] * x[e];
        for (std::size_t k = 0; k < H; ++k) s += Wm[h * H + k] * m[k];
        for (std::size_t k = 0; k < D; ++k) s += Wq[h * D + k] * g[k];
        act[q][h] = q == 3 ? std::tanh(s) : logistic(s);
      }
    }
    for (std::size_t h = 0; h < H; ++h) {
      c[h] = act[1][h] * c[h] + act[0][h] * act[3][h];
      m[h] = act[2][h] * c[h];
    }

    std::vector<Real> logits(V);
    Real peak = -INFINITY;
    for (std::size_t v = 0; v < V; ++v) {
      Real s = bd[v];
      for (std::size_t h = 0; h < H; ++h) s += Wd[v * H + h] * m[h];
      logits[v] = s;
      peak = std::max(peak, s);
    }
    Real z = 0.0L;
    for (Real s : logits) z += std::exp(s - peak);
    const Real log_z = peak + std::log(z);
    for (auto& s : logits) s -= log_z;
    out.push_back(std::move(logits));
  }
  return out;
}

Real ReferenceModel::loss(std::span<const Scalar> raw, std::span<const TokenId> ids, const GuidanceMode& mode,
                          Real lambda) const {
  const auto lp = logprobs(raw, ids, mode);
  Real total = 0.0L;
  for (std::size_t t = 0; t < lp.size(); ++t) total -= lp[t][ids[t + 1]];
  Real sq = 0.0L;
  for (Real w : get("W_img")) sq += w * w;
  return total + 0.5L * lambda * sq;
}

}  // namespace textcond

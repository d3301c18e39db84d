#include "textcond/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "textcond/reference.hpp"
#include "textcond/training.hpp"

namespace textcond {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

const GroupCheck* GradCheckReport::find(const std::string& name) const {
  for (const auto& g : groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    if (!g.pass) out.push_back(g.name);
  }
  return out;
}

namespace {

// `numeric(t, idx)` returns the central difference for one coordinate.
template <typename NumericFn>
GradCheckReport run_check(const std::vector<ConstTensorRef>& layout, const ModelParams& analytic,
                          std::size_t max_per_tensor, std::uint64_t seed, double tolerance,
                          NumericFn numeric) {
  const auto grad_tensors = analytic.tensors();
  if (grad_tensors.size() != layout.size()) {
    throw std::invalid_argument("check_gradients: analytic gradient has a different tensor layout");
  }
  Rng rng(seed);

  GradCheckReport report;
  for (std::size_t t = 0; t < layout.size(); ++t) {
    const auto grad = grad_tensors[t].values;
    if (grad.size() != layout[t].values.size()) {
      throw std::invalid_argument("check_gradients: shape mismatch in " + std::string(layout[t].name));
    }

    std::vector<std::size_t> coords(grad.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_per_tensor > 0 && coords.size() > max_per_tensor) {
      for (std::size_t i = 0; i < max_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(max_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    GroupCheck group;
    group.name = std::string(layout[t].name);
    for (std::size_t idx : coords) {
      const double err = relative_error(grad[idx], numeric(t, idx));
      group.max_rel_error = std::max(group.max_rel_error, err);
      group.max_abs_analytic = std::max(group.max_abs_analytic, std::abs(grad[idx]));
      ++group.checked;
    }
    group.pass = group.max_rel_error < tolerance;
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.pass = report.pass && group.pass;
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace

GradCheckReport check_gradients(const ModelParams& params, const ModelParams& analytic, const LossFn& loss,
                                double epsilon, double tolerance, std::size_t max_per_tensor,
                                std::uint64_t seed) {
  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  return run_check(params.tensors(), analytic, max_per_tensor, seed, tolerance,
                   [&](std::size_t t, std::size_t idx) {
                     auto values = probe_tensors[t].values;
                     const double saved = values[idx];
                     values[idx] = saved + epsilon;
                     const double up = loss(probe);
                     values[idx] = saved - epsilon;
                     const double down = loss(probe);
                     values[idx] = saved;
                     return (up - down) / (2.0 * epsilon);
                   });
}

GradCheckReport gradient_check(const ModelParams& params, std::span<const Scalar> raw,
                               std::span<const TokenId> token_ids, const GuidanceMode& mode,
                               double epsilon, double tolerance, double lambda,
                               std::size_t max_per_tensor, std::uint64_t seed, FdPrecision precision) {
  const ForwardTrace trace = forward_sequence(params, raw, token_ids, mode);
  ModelParams analytic = backward_sequence(params, trace, token_ids, mode);
  for (std::size_t i = 0; i < analytic.image_embed.data.size(); ++i) {
    analytic.image_embed.data[i] += lambda * params.image_embed.data[i];
  }
  const Vector raw_copy(raw.begin(), raw.end());
  const std::vector<TokenId> ids(token_ids.begin(), token_ids.end());

  if (precision == FdPrecision::kDouble) {
    const LossFn fn = [&](const ModelParams& p) {
      return loss(forward_sequence(p, raw_copy, ids, mode), lambda, p.image_embed);
    };
    return check_gradients(params, analytic, fn, epsilon, tolerance, max_per_tensor, seed);
  }
  return check_against_reference(params, analytic, raw_copy, ids, mode, epsilon, tolerance, lambda,
                                 max_per_tensor, seed);
}

GradCheckReport check_against_reference(const ModelParams& params, const ModelParams& analytic,
                                        std::span<const Scalar> raw, std::span<const TokenId> token_ids,
                                        const GuidanceMode& mode, double epsilon, double tolerance,
                                        double lambda, std::size_t max_per_tensor, std::uint64_t seed) {
  ReferenceModel ref(params);
  using Real = ReferenceModel::Real;
  const Real eps = epsilon;
  return run_check(params.tensors(), analytic, max_per_tensor, seed, tolerance,
                   [&](std::size_t t, std::size_t idx) {
                     Real& slot = ref.tensors()[t][idx];
                     const Real saved = slot;
                     slot = saved + eps;
                     const Real up = ref.loss(raw, token_ids, mode, lambda);
                     slot = saved - eps;
                     const Real down = ref.loss(raw, token_ids, mode, lambda);
                     slot = saved;
                     return static_cast<double>((up - down) / (2.0L * eps));
                   });
}

TinyProblem tiny_problem(const GuidanceMode& mode, std::uint64_t seed) {
  ModelDims dims;
  dims.vocab = 9;
  dims.hidden = 6;
  dims.embed = 5;
  dims.image_embed = 7;
  dims.raw = 4;

  ModelInit init;
  init.word_embed_stddev = 0.3;
  init.weight_stddev = 0.3;
  init.image_embed_stddev = 0.3;
  init.cond_mean = 1.0;
  init.cond_stddev = 0.3;
  init.tensor_stddev = 0.3;

  TinyProblem tp;
  tp.params = init_params(dims, init, seed, mode.variant == GuidanceVariant::kFullTensor);
  Rng rng(seed + 1000);
  auto jitter = [&rng](Vector& v) {
    for (auto& x : v) x = rng.gaussian(0.0, 0.1);
  };
  jitter(tp.params.image_bias);
  for (auto& g : tp.params.gates) jitter(g.b);
  jitter(tp.params.out_bias);
  if (tp.params.full_tensor) jitter(tp.params.full_tensor->bias);

  tp.raw.resize(dims.raw);
  for (auto& x : tp.raw) x = rng.gaussian();
  tp.caption = {kStartId, 3, 4, 5, 3, 6, 7, 8, kStopId};
  return tp;
}

}  // namespace textcond

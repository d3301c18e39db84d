#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "textcond/model.hpp"

namespace textcond {

struct GroupCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  double max_rel_error = 0.0;
  bool pass = true;

  const GroupCheck* find(const std::string& name) const;
  std::vector<std::string> failing() const;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

using LossFn = std::function<double(const ModelParams&)>;

/// Compares `analytic` with central differences (L(p + eps) - L(p - eps)) / 2eps
/// coordinate by coordinate. `max_per_tensor` == 0 checks every coordinate;
/// otherwise that many coordinates per tensor are sampled with Rng(seed).
GradCheckReport check_gradients(const ModelParams& params, const ModelParams& analytic, const LossFn& loss,
                                double epsilon, double tolerance, std::size_t max_per_tensor = 0,
                                std::uint64_t seed = 1);

/// How the perturbed losses are evaluated. kExtended runs ReferenceModel in
/// long double, so roundoff in L(p +- eps) stays well below the central
/// difference even for gradient entries near 1e-8. kDouble reuses
/// forward_sequence and is noisy for such entries at eps = 1e-5.
enum class FdPrecision { kExtended, kDouble };

/// Finite-difference check of backward_sequence on one example, loss being
/// the caption NLL plus (lambda / 2) ||W_img||^2.
GradCheckReport gradient_check(const ModelParams& params, std::span<const Scalar> raw,
                               std::span<const TokenId> token_ids, const GuidanceMode& mode,
                               double epsilon = 1e-5, double tolerance = 1e-4, double lambda = 0.0,
                               std::size_t max_per_tensor = 0, std::uint64_t seed = 1,
                               FdPrecision precision = FdPrecision::kExtended);

/// Compares caller-supplied gradients of the caption NLL plus
/// (lambda / 2) ||W_img||^2 with central differences of ReferenceModel.
GradCheckReport check_against_reference(const ModelParams& params, const ModelParams& analytic,
                                        std::span<const Scalar> raw, std::span<const TokenId> token_ids,
                                        const GuidanceMode& mode, double epsilon = 1e-5,
                                        double tolerance = 1e-4, double lambda = 0.0,
                                        std::size_t max_per_tensor = 0, std::uint64_t seed = 1);

/// The small verification model: V = 9, H = 6, embed = 5, image_embed = 7,
/// raw = 4, weights ~ N(0, 0.3^2), W_c ~ N(1, 0.3^2), non-zero biases, and a
/// caption START 3 4 5 3 6 7 8 STOP that repeats a word.
struct TinyProblem {
  ModelParams params;
  Vector raw;
  std::vector<TokenId> caption;
};
TinyProblem tiny_problem(const GuidanceMode& mode, std::uint64_t seed = 1);

}  // namespace textcond

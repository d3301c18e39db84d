#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "textcond/model.hpp"

namespace textcond {

/// Plain scalar-loop re-implementation of the captioner's forward pass in
/// extended precision (long double). It shares no code with model.cpp and is
/// the oracle behind the finite-difference gradient check and the forward
/// recomputation tests.
class ReferenceModel {
 public:
  using Real = long double;

  explicit ReferenceModel(const ModelParams& params);

  /// Tensors in ModelParams::tensors() order.
  std::vector<std::vector<Real>>& tensors() { return tensors_; }
  const std::vector<std::vector<Real>>& tensors() const { return tensors_; }

  /// Per-step log-probabilities of a teacher-forced pass.
  std::vector<std::vector<Real>> logprobs(std::span<const Scalar> raw, std::span<const TokenId> token_ids,
                                          const GuidanceMode& mode) const;
  /// Caption NLL plus (lambda / 2) ||W_img||^2.
  Real loss(std::span<const Scalar> raw, std::span<const TokenId> token_ids, const GuidanceMode& mode,
            Real lambda) const;

 private:
  const std::vector<Real>& get(std::string_view name) const;

  ModelDims dims_;
  bool has_tensor_ = false;
  std::vector<std::string_view> names_;
  std::vector<std::vector<Real>> tensors_;
};

}  // namespace textcond

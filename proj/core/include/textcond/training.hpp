#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textcond/dataset.hpp"
#include "textcond/model.hpp"

namespace textcond {

/// Hidden sizes chosen by the user; vocab and raw come from the dataset.
struct ModelShape {
  std::size_t embed = 16;
  std::size_t hidden = 32;
  std::size_t image_embed = 16;
};

enum class CondInit { kOnes, kGaussian };

/// Defaults: lambda = 1e-3, language-model rate 4e-4, image-embedding rate
/// 1e-5, Adam beta1 = 0.8, beta2 = 0.999. Stage lengths are sized for
/// desk-sized corpora, not the 100k/150k/150k of a full-scale run.
struct TrainConfig {
  double lambda = 1e-3;
  double lr_lm = 4e-4;
  double lr_img = 1e-5;
  double adam_beta1 = 0.8;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::array<std::size_t, 3> stage_iters = {600, 300, 2000};
  std::optional<double> grad_clip;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  ModelShape shape;
  ModelInit init;
  /// W_c at the start of stage 3: all ones, or N(init.cond_mean, init.cond_stddev^2).
  CondInit cond_init = CondInit::kGaussian;

  void validate() const;
};

/// Per-tensor Adam moments, in ModelParams::tensors() order. `steps` counts the
/// updates a tensor has received, so frozen tensors keep their own clock.
struct AdamSlot {
  Vector m;
  Vector v;
  std::uint64_t steps = 0;

  friend bool operator==(const AdamSlot&, const AdamSlot&) = default;
};

struct AdamState {
  std::vector<AdamSlot> slots;

  static AdamState zeros_for(const ModelParams& params);
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Which parameter groups an optimizer step may touch.
struct UpdateMask {
  bool language = true;
  bool image = true;
  bool cond = true;
  bool tensor = true;

  bool allows(ParamGroup g) const;
};

/// -sum_k logprob_k[target_k] + (lambda / 2) * ||W_img||_F^2
Scalar loss(std::span<const Vector> logprobs, std::span<const TokenId> targets, Scalar lambda,
            const Matrix& image_embed);
Scalar loss(const ForwardTrace& trace, Scalar lambda, const Matrix& image_embed);

/// Bias-corrected Adam update. Image-embedding tensors use lr_img, everything
/// else lr_lm. Tensors outside `mask` are left untouched, moments included.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& config, const UpdateMask& mask = {});

/// Mean over `batch` of per-example gradients of the regularized loss (the lambda term
/// included), reduced in ascending batch order. Returns the mean loss.
/// Workers (config.threads) evaluate examples in parallel; the reduction is
/// sequential, so results do not depend on the thread count.
Scalar batch_gradient(const ModelParams& params, const Dataset& data, std::span<const std::size_t> batch,
                      const GuidanceMode& mode, Scalar lambda, std::size_t threads, ModelParams& grads);

/// Sum of target negative log-likelihoods over every example divided by the
/// number of predicted tokens (no regularization).
Scalar mean_token_loss(const ModelParams& params, const Dataset& data, const GuidanceMode& mode);

struct LossRecord {
  std::size_t iteration = 0;  // 1-based, counted across stages
  int stage = 0;              // 1, 2 or 3
  double loss = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainingMeta {
  std::size_t iteration = 0;
  std::uint64_t seed = 0;
  std::vector<LossRecord> losses;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct Checkpoint {
  ModelParams params;
  GuidanceMode mode;
  Vocabulary vocab;
  std::optional<AdamState> optimizer;
  TrainingMeta meta;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Raised when the training loss stops being finite.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t iteration, const std::string& what)
      : NumericError(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Three-stage schedule:
///   1. time-invariant guidance, image embedding frozen, stage_iters[0] steps;
///   2. time-invariant guidance, image embedding trained at lr_img;
///   3. target `mode`, W_c re-initialized (cond_init), image embedding frozen,
///      optimizer state reset.
/// Stages 1-2 use the target's transfer function. Full-tensor targets start
/// stage 3 from W3_ijk = [i == j] W_c_ik so the first step matches the masked
/// model. Throws std::invalid_argument on an empty dataset and DivergenceError
/// on a non-finite loss.
Checkpoint train(const Dataset& data, const TrainConfig& config, const GuidanceMode& mode,
                 const ProgressFn& progress = {});

/// Initial parameters `train` starts from.
ModelParams initial_params(const Dataset& data, const TrainConfig& config, const GuidanceMode& mode);

}  // namespace textcond

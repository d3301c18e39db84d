#include "textcond/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace textcond {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Scalar frobenius_sq(const Matrix& m) {
  Scalar s = 0.0;
  for (Scalar v : m.data) s += v * v;
  return s;
}

void add_scaled(ModelParams& acc, const ModelParams& g) {
  auto dst = acc.tensors();
  const auto src = g.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    for (std::size_t i = 0; i < dst[t].values.size(); ++i) dst[t].values[i] += src[t].values[i];
  }
}

void set_zero(ModelParams& p) {
  for (auto& t : p.tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
}

/// Shuffled passes over the dataset, reshuffled each epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle();
  }

  std::vector<std::size_t> next(std::size_t size) {
    size = std::min(size, order_.size());
    std::vector<std::size_t> batch;
    batch.reserve(size);
    while (batch.size() < size) {
      if (cursor_ == order_.size()) shuffle();
      batch.push_back(order_[cursor_++]);
    }
    return batch;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t cursor_ = 0;
};

void clip_gradients(ModelParams& grads, double max_norm, const UpdateMask& mask) {
  double sq = 0.0;
  for (const auto& t : std::as_const(grads).tensors()) {
    if (!mask.allows(t.group)) continue;
    for (Scalar v : t.values) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double factor = max_norm / norm;
  for (auto& t : grads.tensors()) {
    if (!mask.allows(t.group)) continue;
    for (auto& v : t.values) v *= factor;
  }
}

}  // namespace

void TrainConfig::validate() const {
  require(lambda >= 0.0, "TrainConfig: lambda must be >= 0");
  require(lr_lm > 0.0 && lr_img > 0.0, "TrainConfig: learning rates must be positive");
  require(adam_beta1 > 0.0 && adam_beta1 < 1.0, "TrainConfig: adam_beta1 must be in (0, 1)");
  require(adam_beta2 > 0.0 && adam_beta2 < 1.0, "TrainConfig: adam_beta2 must be in (0, 1)");
  require(adam_eps > 0.0, "TrainConfig: adam_eps must be positive");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(threads >= 1, "TrainConfig: threads must be >= 1");
  require(!grad_clip || *grad_clip > 0.0, "TrainConfig: grad_clip must be positive");
  require(shape.embed > 0 && shape.hidden > 0 && shape.image_embed > 0, "TrainConfig: model sizes must be positive");
}

bool UpdateMask::allows(ParamGroup g) const {
  switch (g) {
    case ParamGroup::kLanguage: return language;
    case ParamGroup::kImage: return image;
    case ParamGroup::kCond: return cond;
    case ParamGroup::kTensor: return tensor;
  }
  return false;
}

AdamState AdamState::zeros_for(const ModelParams& params) {
  AdamState s;
  for (const auto& t : params.tensors()) {
    s.slots.push_back({Vector(t.values.size(), 0.0), Vector(t.values.size(), 0.0), 0});
  }
  return s;
}

Scalar loss(std::span<const Vector> logprobs, std::span<const TokenId> targets, Scalar lambda,
            const Matrix& image_embed) {
  require(logprobs.size() == targets.size(), "loss: one logprob row per target required");
  Scalar data = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    require(targets[k] < logprobs[k].size(), "loss: target id out of range");
    data -= logprobs[k][targets[k]];
  }
  return data + 0.5 * lambda * frobenius_sq(image_embed);
}

Scalar loss(const ForwardTrace& trace, Scalar lambda, const Matrix& image_embed) {
  return trace.nll() + 0.5 * lambda * frobenius_sq(image_embed);
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& config, const UpdateMask& mask) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  require(p.size() == g.size() && p.size() == state.slots.size(), "adam_step: tensor count mismatch");
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto& slot = state.slots[t];
    require(p[t].values.size() == g[t].values.size() && slot.m.size() == p[t].values.size() &&
                slot.v.size() == p[t].values.size(),
            "adam_step: shape mismatch in " + std::string(p[t].name));
    if (!mask.allows(p[t].group)) continue;
    const double lr = p[t].group == ParamGroup::kImage ? config.lr_img : config.lr_lm;
    ++slot.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.steps));
    for (std::size_t i = 0; i < p[t].values.size(); ++i) {
      const double gi = g[t].values[i];
      slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * gi;
      slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * gi * gi;
      const double m_hat = slot.m[i] / c1;
      const double v_hat = slot.v[i] / c2;
      p[t].values[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

Scalar batch_gradient(const ModelParams& params, const Dataset& data, std::span<const std::size_t> batch,
                      const GuidanceMode& mode, Scalar lambda, std::size_t threads, ModelParams& grads) {
  require(!batch.empty(), "batch_gradient: empty batch");
  const std::size_t n = batch.size();
  std::vector<ModelParams> per_example(n, params.zeros_like());
  std::vector<Scalar> nll(n, 0.0);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const auto& ex = data.examples.at(batch[b]);
      const Vector raw = data.features.vector(ex.feature_id);
      const ForwardTrace trace = forward_sequence(params, raw, ex.token_ids, mode);
      nll[b] = trace.nll();
      accumulate_gradients(params, trace, ex.token_ids, per_example[b], 1.0);
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  set_zero(grads);
  Scalar total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    add_scaled(grads, per_example[b]);
    total += nll[b];
  }
  const Scalar inv = 1.0 / static_cast<Scalar>(n);
  for (auto& t : grads.tensors()) {
    for (auto& v : t.values) v *= inv;
  }
  // d/dW_img of (lambda / 2) ||W_img||^2.
  for (std::size_t i = 0; i < grads.image_embed.data.size(); ++i) {
    grads.image_embed.data[i] += lambda * params.image_embed.data[i];
  }
  return total * inv + 0.5 * lambda * frobenius_sq(params.image_embed);
}

Scalar mean_token_loss(const ModelParams& params, const Dataset& data, const GuidanceMode& mode) {
  require(!data.examples.empty(), "mean_token_loss: empty dataset");
  Scalar total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data.examples) {
    const Vector raw = data.features.vector(ex.feature_id);
    const ForwardTrace trace = forward_sequence(params, raw, ex.token_ids, mode);
    total += trace.nll();
    tokens += trace.steps.size();
  }
  return total / static_cast<Scalar>(tokens);
}

ModelParams initial_params(const Dataset& data, const TrainConfig& config, const GuidanceMode& mode) {
  ModelDims dims;
  dims.vocab = data.vocab.size();
  dims.embed = config.shape.embed;
  dims.hidden = config.shape.hidden;
  dims.image_embed = config.shape.image_embed;
  dims.raw = data.features.dim();
  return init_params(dims, config.init, config.seed, mode.variant == GuidanceVariant::kFullTensor);
}

Checkpoint train(const Dataset& data, const TrainConfig& config, const GuidanceMode& mode,
                 const ProgressFn& progress) {
  if (data.examples.empty()) throw std::invalid_argument("empty dataset");
  config.validate();
  mode.validate();
  data.validate();

  Checkpoint ck;
  ck.mode = mode;
  ck.vocab = data.vocab;
  ck.params = initial_params(data, config, mode);
  ck.meta.seed = config.seed;
  ck.optimizer = AdamState::zeros_for(ck.params);

  // Independent streams for batching and the stage-3 re-initialization.
  Rng seeder(config.seed ^ 0x9E3779B97F4A7C15ULL);
  BatchSampler sampler(data.examples.size(), seeder.next_u64());
  const std::uint64_t cond_seed = seeder.next_u64();

  ModelParams grads = ck.params.zeros_like();
  const GuidanceMode warmup = GuidanceMode::time_invariant(mode.transfer);

  auto run_stage = [&](int stage, std::size_t iters, const GuidanceMode& stage_mode, const UpdateMask& mask) {
    for (std::size_t it = 0; it < iters; ++it) {
      const auto batch = sampler.next(config.batch_size);
      const Scalar value = batch_gradient(ck.params, data, batch, stage_mode, config.lambda, config.threads, grads);
      ++ck.meta.iteration;
      if (!std::isfinite(value)) {
        throw DivergenceError(ck.meta.iteration,
                              "non-finite loss at iteration " + std::to_string(ck.meta.iteration));
      }
      if (config.grad_clip) clip_gradients(grads, *config.grad_clip, mask);
      adam_step(ck.params, grads, *ck.optimizer, config, mask);
      const LossRecord rec{ck.meta.iteration, stage, value};
      ck.meta.losses.push_back(rec);
      if (progress) progress(rec);
    }
  };

  UpdateMask frozen_image;
  frozen_image.image = false;
  UpdateMask everything;

  run_stage(1, config.stage_iters[0], warmup, frozen_image);
  run_stage(2, config.stage_iters[1], warmup, everything);

  if (config.stage_iters[2] > 0) {
    if (mode.uses_history()) {
      const double stddev = config.cond_init == CondInit::kOnes ? 0.0 : config.init.cond_stddev;
      const double mean = config.cond_init == CondInit::kOnes ? 1.0 : config.init.cond_mean;
      reset_cond(ck.params, mean, stddev, cond_seed);
    }
    if (ck.params.full_tensor) {
      auto& ft = *ck.params.full_tensor;
      ft.weights.set_zero();
      std::fill(ft.bias.begin(), ft.bias.end(), 0.0);
      for (std::size_t i = 0; i < ft.bias.size(); ++i) {
        for (std::size_t k = 0; k < ft.vocab; ++k) ft.at(i, i, k) = ck.params.cond(i, k);
      }
    }
    ck.optimizer = AdamState::zeros_for(ck.params);
    run_stage(3, config.stage_iters[2], mode, frozen_image);
  }
  return ck;
}

}  // namespace textcond

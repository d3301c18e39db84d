#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "textcond/errors.hpp"

namespace textcond {

using Scalar = double;
using Vector = std::vector<Scalar>;

/// Dense row-major matrix. Element (r, c) lives at data[r * cols + c].
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Scalar> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Scalar fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  Scalar& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Scalar operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<Scalar> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Scalar> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  Vector column(std::size_t c) const;
  void set_zero();

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class TransferKind { kIdentity, kSigmoid, kTanh, kReLU, kSoftmax };

std::string_view transfer_name(TransferKind kind);
/// Accepts "identity", "sigmoid", "tanh", "relu", "softmax" (case-insensitive).
TransferKind parse_transfer(std::string_view name);

/// Applies the transfer function. Softmax is computed with max-subtraction.
/// Throws std::invalid_argument on empty input and NumericError on NaN/Inf.
Vector transfer_apply(TransferKind kind, std::span<const Scalar> v);

/// Vector-Jacobian product of the transfer at the point whose forward output is
/// `y` (and input `x`). Returns dL/dx given dL/dy.
Vector transfer_backward(TransferKind kind, std::span<const Scalar> x,
                         std::span<const Scalar> y, std::span<const Scalar> dy);

Scalar sigmoid(Scalar x);

/// y = W x + b, summed in ascending column order.
Vector affine(const Matrix& w, std::span<const Scalar> x, std::span<const Scalar> b);
/// y = W x.
Vector matvec(const Matrix& w, std::span<const Scalar> x);
/// y = W^T x.
Vector matvec_transposed(const Matrix& w, std::span<const Scalar> x);
/// acc += W^T x, without allocating.
void add_matvec_transposed(const Matrix& w, std::span<const Scalar> x, std::span<Scalar> acc);
/// g += a b^T.
void add_outer(Matrix& g, std::span<const Scalar> a, std::span<const Scalar> b);

Vector hadamard(std::span<const Scalar> a, std::span<const Scalar> b);
/// acc += a.
void add_into(std::span<Scalar> acc, std::span<const Scalar> a);

/// log(softmax(v)), stable.
Vector log_softmax(std::span<const Scalar> v);

bool all_finite(std::span<const Scalar> v);

/// Seedable generator used everywhere randomness is needed: std::mt19937_64
/// (whose output sequence is fixed by the C++ standard) with uniforms built
/// from the top 53 bits and normals from the Box-Muller transform. The pair
/// produced by one Box-Muller draw is consumed in order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal.
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// rows x cols matrix with entries mean + stddev * N(0, 1), drawn row-major
/// from Rng(seed). stddev == 0 gives the constant matrix `mean`.
Matrix gaussian_init(std::size_t rows, std::size_t cols, Scalar mean, Scalar stddev,
                     std::uint64_t seed);
/// Same, drawing from an existing generator.
Matrix gaussian_init(std::size_t rows, std::size_t cols, Scalar mean, Scalar stddev,
                     Rng& rng);

}  // namespace textcond

#include "textcond/numerics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace textcond {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Vector Matrix::column(std::size_t c) const {
  require(c < cols, "Matrix::column: index out of range");
  Vector out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = data[r * cols + c];
  return out;
}

void Matrix::set_zero() { std::fill(data.begin(), data.end(), 0.0); }

std::string_view transfer_name(TransferKind kind) {
  switch (kind) {
    case TransferKind::kIdentity: return "identity";
    case TransferKind::kSigmoid: return "sigmoid";
    case TransferKind::kTanh: return "tanh";
    case TransferKind::kReLU: return "relu";
    case TransferKind::kSoftmax: return "softmax";
  }
  return "unknown";
}

TransferKind parse_transfer(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "identity") return TransferKind::kIdentity;
  if (lower == "sigmoid") return TransferKind::kSigmoid;
  if (lower == "tanh") return TransferKind::kTanh;
  if (lower == "relu") return TransferKind::kReLU;
  if (lower == "softmax") return TransferKind::kSoftmax;
  throw std::invalid_argument("unknown transfer function: " + std::string(name));
}

Scalar sigmoid(Scalar x) {
  // Both branches avoid overflow of exp for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(std::span<const Scalar> v) {
  return std::all_of(v.begin(), v.end(), [](Scalar s) { return std::isfinite(s); });
}

Vector transfer_apply(TransferKind kind, std::span<const Scalar> v) {
  require(!v.empty(), "transfer_apply: empty vector");
  if (!all_finite(v)) throw NumericError("transfer_apply: non-finite input");

  Vector out(v.begin(), v.end());
  switch (kind) {
    case TransferKind::kIdentity:
      break;
    case TransferKind::kSigmoid:
      for (auto& s : out) s = sigmoid(s);
      break;
    case TransferKind::kTanh:
      for (auto& s : out) s = std::tanh(s);
      break;
    case TransferKind::kReLU:
      for (auto& s : out) s = s > 0.0 ? s : 0.0;
      break;
    case TransferKind::kSoftmax: {
      const Scalar peak = *std::max_element(out.begin(), out.end());
      Scalar total = 0.0;
      for (auto& s : out) {
        s = std::exp(s - peak);
        total += s;
      }
      for (auto& s : out) s /= total;
      break;
    }
  }
  return out;
}

Vector transfer_backward(TransferKind kind, std::span<const Scalar> x,
                         std::span<const Scalar> y, std::span<const Scalar> dy) {
  require(x.size() == y.size() && y.size() == dy.size(),
          "transfer_backward: length mismatch");
  Vector dx(dy.size());
  switch (kind) {
    case TransferKind::kIdentity:
      std::copy(dy.begin(), dy.end(), dx.begin());
      break;
    case TransferKind::kSigmoid:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      break;
    case TransferKind::kTanh:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
      break;
    case TransferKind::kReLU:
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      break;
    case TransferKind::kSoftmax: {
      Scalar dot = 0.0;
      for (std::size_t i = 0; i < dx.size(); ++i) dot += y[i] * dy[i];
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = y[i] * (dy[i] - dot);
      break;
    }
  }
  return dx;
}

Vector matvec(const Matrix& w, std::span<const Scalar> x) {
  require(w.cols == x.size(), "matvec: dimension mismatch");
  Vector y(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const Scalar* row = w.data.data() + r * w.cols;
    Scalar acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vector affine(const Matrix& w, std::span<const Scalar> x, std::span<const Scalar> b) {
  require(w.cols == x.size(), "affine: W.cols != x.len");
  require(w.rows == b.size(), "affine: b.len != W.rows");
  Vector y(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const Scalar* row = w.data.data() + r * w.cols;
    Scalar acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc + b[r];
  }
  return y;
}

Vector matvec_transposed(const Matrix& w, std::span<const Scalar> x) {
  Vector y(w.cols, 0.0);
  add_matvec_transposed(w, x, y);
  return y;
}

void add_matvec_transposed(const Matrix& w, std::span<const Scalar> x, std::span<Scalar> acc) {
  require(w.rows == x.size() && w.cols == acc.size(),
          "matvec_transposed: dimension mismatch");
  for (std::size_t r = 0; r < w.rows; ++r) {
    const Scalar xr = x[r];
    if (xr == 0.0) continue;
    const Scalar* row = w.data.data() + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) acc[c] += row[c] * xr;
  }
}

void add_outer(Matrix& g, std::span<const Scalar> a, std::span<const Scalar> b) {
  require(g.rows == a.size() && g.cols == b.size(), "add_outer: dimension mismatch");
  for (std::size_t r = 0; r < g.rows; ++r) {
    const Scalar ar = a[r];
    if (ar == 0.0) continue;
    Scalar* row = g.data.data() + r * g.cols;
    for (std::size_t c = 0; c < g.cols; ++c) row[c] += ar * b[c];
  }
}

Vector hadamard(std::span<const Scalar> a, std::span<const Scalar> b) {
  require(a.size() == b.size(), "hadamard: length mismatch");
  Vector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

void add_into(std::span<Scalar> acc, std::span<const Scalar> a) {
  require(acc.size() == a.size(), "add_into: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) acc[i] += a[i];
}

Vector log_softmax(std::span<const Scalar> v) {
  require(!v.empty(), "log_softmax: empty vector");
  if (!all_finite(v)) throw NumericError("log_softmax: non-finite input");
  const Scalar peak = *std::max_element(v.begin(), v.end());
  Scalar total = 0.0;
  for (Scalar s : v) total += std::exp(s - peak);
  const Scalar log_z = peak + std::log(total);
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - log_z;
  return out;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
  require(n > 0, "Rng::below: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return static_cast<std::size_t>(draw % bound);
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, Scalar mean, Scalar stddev,
                     Rng& rng) {
  require(stddev >= 0.0 && std::isfinite(stddev), "gaussian_init: stddev must be >= 0");
  require(std::isfinite(mean), "gaussian_init: mean must be finite");
  Matrix m(rows, cols, mean);
  if (stddev == 0.0) return m;
  for (auto& s : m.data) s = rng.gaussian(mean, stddev);
  return m;
}

Matrix gaussian_init(std::size_t rows, std::size_t cols, Scalar mean, Scalar stddev,
                     std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_init(rows, cols, mean, stddev, rng);
}

}  // namespace textcond

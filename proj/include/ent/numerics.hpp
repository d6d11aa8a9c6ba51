#pragma once

// Differentiable building blocks for the transducer models: log-domain
// reductions, dense layers with hand-written backward passes, the Adam
// optimizer, a splitmix64 random source and a finite-difference checker.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ent/errors.hpp"

namespace ent {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

template <typename Scalar>
inline constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

// ---------------------------------------------------------------------------
// Log-domain reductions
// ---------------------------------------------------------------------------

// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  if (a == kNegInf<Scalar>) return b;
  if (b == kNegInf<Scalar>) return a;
  const Scalar hi = a > b ? a : b;
  const Scalar lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::DenseBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  if (values.size() == 0) throw ArgumentError("logsumexp: empty input");
  if (values.derived().hasNaN()) throw NumericError("logsumexp: NaN input");
  const Scalar shift = values.maxCoeff();
  if (shift == kNegInf<Scalar>) return kNegInf<Scalar>;
  if (!std::isfinite(shift)) return shift;
  return shift + std::log((values.derived().array() - shift).exp().sum());
}

template <typename Scalar>
Scalar logsumexp(std::span<const Scalar> values) {
  return logsumexp(Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(
      values.data(), static_cast<Index>(values.size())));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw ArgumentError("log_softmax: empty input");
  if (!logits.allFinite()) throw NumericError("log_softmax: non-finite logit");
  const Scalar norm = logsumexp(logits);
  return (logits.reshaped().array() - norm).matrix();
}

// Row-wise log-softmax; each row of the result is a normalized log
// distribution.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> log_softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  using Result = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (logits.cols() == 0) throw ArgumentError("log_softmax_rows: no columns");
  if (!logits.allFinite()) throw NumericError("log_softmax_rows: non-finite logit");
  const auto row_max = logits.rowwise().maxCoeff().eval();
  Result shifted = logits.colwise() - row_max;
  const auto norm = shifted.array().exp().rowwise().sum().log().matrix().eval();
  shifted.colwise() -= norm;
  return shifted;
}

// Backward of a row-wise log-softmax: given the outputs and dL/d(outputs),
// returns dL/d(logits).
template <typename Derived, typename OtherDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> log_softmax_rows_backward(
    const Eigen::MatrixBase<Derived>& log_probs, const Eigen::MatrixBase<OtherDerived>& grad_out) {
  const auto total = grad_out.rowwise().sum().eval();
  return grad_out - (log_probs.array().exp().colwise() * total.array()).matrix();
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x))
                : std::exp(x) / (Scalar(1) + std::exp(x));
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

// splitmix64. Every random draw in the library goes through this type so
// that a run is reproducible from its seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Parameters and layers
// ---------------------------------------------------------------------------

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Index rows, Index cols)
      : name(std::move(name)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  // uniform(-k, k), k = 1/sqrt(fan_in)
  void init_uniform(Rng& rng, Index fan_in);

  std::string name;
  Matrix value;
  Matrix grad;
};

using ParameterList = std::vector<Parameter*>;

// y = x W^T + b, applied to every row of x.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out);

  Index in_dim() const { return weight.value.cols(); }
  Index out_dim() const { return weight.value.rows(); }

  void init(Rng& rng);
  Matrix forward(const Matrix& x) const;
  // Accumulates parameter gradients; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& grad_out);
  void append_parameters(ParameterList& out) { out.push_back(&weight); out.push_back(&bias); }

  Parameter weight;  // out x in
  Parameter bias;    // 1 x out
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Index count, Index dim);

  void init(Rng& rng);
  Matrix forward(std::span<const int> ids) const;
  void backward(std::span<const int> ids, const Matrix& grad_out);
  void append_parameters(ParameterList& out) { out.push_back(&table); }

  Parameter table;  // count x dim
};

// Fuses a grid of encoder and predictor states by addition and applies one
// linear layer: logits(t, u) = W (h_t + g_u) + b. Node (t, u) is row
// t * g.rows() + u of the result.
class AdditiveJoint {
 public:
  AdditiveJoint() = default;
  AdditiveJoint(const std::string& name, Index hidden, Index out) : linear_(name, hidden, out) {}

  void init(Rng& rng) { linear_.init(rng); }
  Index out_dim() const { return linear_.out_dim(); }

  Matrix forward(const Matrix& h, const Matrix& g) const;
  // Single node, used by incremental decoding.
  RowVector forward_node(const RowVector& h_t, const RowVector& g_u) const;
  // Accumulates parameter gradients and adds dL/dh, dL/dg into grad_h, grad_g.
  void backward(const Matrix& h, const Matrix& g, const Matrix& grad_logits, Matrix& grad_h,
                Matrix& grad_g);
  void append_parameters(ParameterList& out) { linear_.append_parameters(out); }

  Linear& linear() { return linear_; }
  const Linear& linear() const { return linear_; }

 private:
  Linear linear_;
};

struct LstmState {
  RowVector h;
  RowVector c;
};

struct LstmStepCache {
  RowVector x, h_prev, c_prev;
  RowVector i, f, g, o;  // gate activations
  RowVector c, tanh_c;
};

struct LstmStepGrads {
  RowVector x, h_prev, c_prev;
};

// Single-layer LSTM; gate order in the stacked weights is i, f, g, o.
class Lstm {
 public:
  Lstm() = default;
  Lstm(const std::string& name, Index in, Index hidden);

  Index in_dim() const { return w_input.value.cols(); }
  Index hidden_dim() const { return w_recurrent.value.cols(); }

  void init(Rng& rng);
  LstmState zero_state() const;

  LstmState step(const RowVector& x, const LstmState& state, LstmStepCache* cache = nullptr) const;
  LstmStepGrads step_backward(const LstmStepCache& cache, const RowVector& grad_h,
                              const RowVector& grad_c);

  // Runs from the zero state over the rows of x; returns T x hidden.
  Matrix forward_sequence(const Matrix& x, std::vector<LstmStepCache>* caches = nullptr) const;
  // Backpropagation through time; returns dL/dx.
  Matrix backward_sequence(const std::vector<LstmStepCache>& caches, const Matrix& grad_h);

  void append_parameters(ParameterList& out) {
    out.push_back(&w_input);
    out.push_back(&w_recurrent);
    out.push_back(&bias);
  }

  Parameter w_input;      // 4H x in
  Parameter w_recurrent;  // 4H x H
  Parameter bias;         // 1 x 4H
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;

  static AdamState for_parameters(const ParameterList& params, const AdamConfig& config);
};

// Bias-corrected Adam update; gradients are zeroed afterwards.
void adam_step(const ParameterList& params, AdamState& state);

double grad_norm(const ParameterList& params);
void zero_grads(const ParameterList& params);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Evaluates the loss at the current parameter values. When `with_grad` is
// true the function must also write analytic gradients into Parameter::grad
// (grads are zeroed by the caller beforehand).
using LossFunction = std::function<double(bool with_grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates = 0;
};

// Gradients smaller than this are compared in absolute terms.
inline constexpr double kGradCheckFloor = 1e-4;

double relative_error(double analytic, double numeric);

// Central differences (f(θ+eps) − f(θ−eps)) / (2 eps) for every coordinate
// of every parameter. Parameters are restored afterwards.
GradCheckResult grad_check(const LossFunction& loss, const ParameterList& params,
                           double eps = 1e-5);

}  // namespace ent

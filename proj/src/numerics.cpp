#include "ent/numerics.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

namespace ent {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t draw = next_u64();
  while (draw >= limit) draw = next_u64();
  return draw % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void Parameter::init_uniform(Rng& rng, Index fan_in) {
  const double k = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  for (Index r = 0; r < value.rows(); ++r) {
    for (Index c = 0; c < value.cols(); ++c) value(r, c) = rng.uniform(-k, k);
  }
  grad.setZero();
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(const std::string& name, Index in, Index out)
    : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {
  if (in < 1 || out < 1) throw ArgumentError("Linear " + name + ": dimensions must be positive");
}

void Linear::init(Rng& rng) {
  weight.init_uniform(rng, in_dim());
  bias.init_uniform(rng, in_dim());
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    std::ostringstream msg;
    msg << weight.name << ": expected " << in_dim() << " input columns, got " << x.cols();
    throw ArgumentError(msg.str());
  }
  Matrix y = x * weight.value.transpose();
  y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& grad_out) {
  weight.grad.noalias() += grad_out.transpose() * x;
  bias.grad += grad_out.colwise().sum();
  return grad_out * weight.value;
}

// --- Embedding --------------------------------------------------------------

Embedding::Embedding(const std::string& name, Index count, Index dim)
    : table(name + ".table", count, dim) {
  if (count < 1 || dim < 1) throw ArgumentError("Embedding " + name + ": dimensions must be positive");
}

void Embedding::init(Rng& rng) { table.init_uniform(rng, table.value.cols()); }

Matrix Embedding::forward(std::span<const int> ids) const {
  Matrix out(static_cast<Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) {
      throw ArgumentError(table.name + ": id " + std::to_string(ids[i]) + " out of range");
    }
    out.row(static_cast<Index>(i)) = table.value.row(ids[i]);
  }
  return out;
}

void Embedding::backward(std::span<const int> ids, const Matrix& grad_out) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    table.grad.row(ids[i]) += grad_out.row(static_cast<Index>(i));
  }
}

// --- AdditiveJoint ----------------------------------------------------------

Matrix AdditiveJoint::forward(const Matrix& h, const Matrix& g) const {
  if (h.cols() != linear_.in_dim() || g.cols() != linear_.in_dim()) {
    throw ArgumentError(linear_.weight.name + ": encoder/predictor width does not match joint input");
  }
  const Matrix from_h = h * linear_.weight.value.transpose();
  Matrix from_g = g * linear_.weight.value.transpose();
  from_g.rowwise() += linear_.bias.value.row(0);
  const Index states = g.rows();
  Matrix logits(h.rows() * states, linear_.out_dim());
  for (Index t = 0; t < h.rows(); ++t) {
    logits.middleRows(t * states, states) = from_g.rowwise() + from_h.row(t);
  }
  return logits;
}

RowVector AdditiveJoint::forward_node(const RowVector& h_t, const RowVector& g_u) const {
  return (h_t + g_u) * linear_.weight.value.transpose() + linear_.bias.value.row(0);
}

void AdditiveJoint::backward(const Matrix& h, const Matrix& g, const Matrix& grad_logits,
                             Matrix& grad_h, Matrix& grad_g) {
  const Index frames = h.rows();
  const Index states = g.rows();
  const Index out = linear_.out_dim();
  Matrix per_frame = Matrix::Zero(frames, out);
  Matrix per_state = Matrix::Zero(states, out);
  for (Index t = 0; t < frames; ++t) {
    const auto block = grad_logits.middleRows(t * states, states);
    per_frame.row(t) = block.colwise().sum();
    per_state += block;
  }
  Parameter& w = linear_.weight;
  w.grad.noalias() += per_frame.transpose() * h;
  w.grad.noalias() += per_state.transpose() * g;
  linear_.bias.grad += per_frame.colwise().sum();
  grad_h.noalias() += per_frame * w.value;
  grad_g.noalias() += per_state * w.value;
}

// --- Lstm -------------------------------------------------------------------

Lstm::Lstm(const std::string& name, Index in, Index hidden)
    : w_input(name + ".w_input", 4 * hidden, in),
      w_recurrent(name + ".w_recurrent", 4 * hidden, hidden),
      bias(name + ".bias", 1, 4 * hidden) {
  if (in < 1 || hidden < 1) throw ArgumentError("Lstm " + name + ": dimensions must be positive");
}

void Lstm::init(Rng& rng) {
  w_input.init_uniform(rng, in_dim());
  w_recurrent.init_uniform(rng, hidden_dim());
  bias.init_uniform(rng, hidden_dim());
}

LstmState Lstm::zero_state() const {
  return {RowVector::Zero(hidden_dim()), RowVector::Zero(hidden_dim())};
}

LstmState Lstm::step(const RowVector& x, const LstmState& state, LstmStepCache* cache) const {
  const Index hd = hidden_dim();
  if (x.size() != in_dim() || state.h.size() != hd || state.c.size() != hd) {
    throw ArgumentError(w_input.name + ": step dimension mismatch");
  }
  RowVector pre = x * w_input.value.transpose() + state.h * w_recurrent.value.transpose() +
                  bias.value.row(0);
  auto sig = [](double v) { return sigmoid(v); };
  const RowVector i = pre.segment(0, hd).unaryExpr(sig);
  const RowVector f = pre.segment(hd, hd).unaryExpr(sig);
  const RowVector g = pre.segment(2 * hd, hd).array().tanh().matrix();
  const RowVector o = pre.segment(3 * hd, hd).unaryExpr(sig);
  LstmState next;
  next.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
  const RowVector tanh_c = next.c.array().tanh().matrix();
  next.h = o.cwiseProduct(tanh_c);
  if (cache != nullptr) {
    *cache = {x, state.h, state.c, i, f, g, o, next.c, tanh_c};
  }
  return next;
}

LstmStepGrads Lstm::step_backward(const LstmStepCache& cache, const RowVector& grad_h,
                                  const RowVector& grad_c) {
  const Index hd = hidden_dim();
  const RowVector d_o = grad_h.cwiseProduct(cache.tanh_c);
  const RowVector d_c =
      grad_c + grad_h.cwiseProduct(cache.o).cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());
  const RowVector d_i = d_c.cwiseProduct(cache.g);
  const RowVector d_g = d_c.cwiseProduct(cache.i);
  const RowVector d_f = d_c.cwiseProduct(cache.c_prev);

  RowVector d_pre(4 * hd);
  d_pre.segment(0, hd) = d_i.array() * cache.i.array() * (1.0 - cache.i.array());
  d_pre.segment(hd, hd) = d_f.array() * cache.f.array() * (1.0 - cache.f.array());
  d_pre.segment(2 * hd, hd) = d_g.array() * (1.0 - cache.g.array().square());
  d_pre.segment(3 * hd, hd) = d_o.array() * cache.o.array() * (1.0 - cache.o.array());

  w_input.grad.noalias() += d_pre.transpose() * cache.x;
  w_recurrent.grad.noalias() += d_pre.transpose() * cache.h_prev;
  bias.grad += d_pre;

  return {d_pre * w_input.value, d_pre * w_recurrent.value, d_c.cwiseProduct(cache.f)};
}

Matrix Lstm::forward_sequence(const Matrix& x, std::vector<LstmStepCache>* caches) const {
  if (x.cols() != in_dim()) {
    throw ArgumentError(w_input.name + ": expected " + std::to_string(in_dim()) +
                        " input columns, got " + std::to_string(x.cols()));
  }
  Matrix out(x.rows(), hidden_dim());
  if (caches != nullptr) caches->assign(static_cast<std::size_t>(x.rows()), {});
  LstmState state = zero_state();
  for (Index t = 0; t < x.rows(); ++t) {
    state = step(x.row(t), state, caches ? &(*caches)[static_cast<std::size_t>(t)] : nullptr);
    out.row(t) = state.h;
  }
  return out;
}

Matrix Lstm::backward_sequence(const std::vector<LstmStepCache>& caches, const Matrix& grad_h) {
  const Index steps = static_cast<Index>(caches.size());
  Matrix grad_x(steps, in_dim());
  RowVector carry_h = RowVector::Zero(hidden_dim());
  RowVector carry_c = RowVector::Zero(hidden_dim());
  for (Index t = steps - 1; t >= 0; --t) {
    const LstmStepGrads grads =
        step_backward(caches[static_cast<std::size_t>(t)], grad_h.row(t) + carry_h, carry_c);
    grad_x.row(t) = grads.x;
    carry_h = grads.h_prev;
    carry_c = grads.c_prev;
  }
  return grad_x;
}

// --- Adam -------------------------------------------------------------------

AdamState AdamState::for_parameters(const ParameterList& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const Parameter* p : params) {
    state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  return state;
}

void adam_step(const ParameterList& params, AdamState& state) {
  if (state.first_moment.size() != params.size()) {
    throw ArgumentError("adam_step: optimizer state does not match parameter list");
  }
  const AdamConfig& cfg = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    p.value.array() -=
        cfg.lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + cfg.eps);
    p.zero_grad();
  }
}

double grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

// --- Gradient check ---------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult grad_check(const LossFunction& loss, const ParameterList& params, double eps) {
  zero_grads(params);
  const double base = loss(true);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);
  zero_grads(params);

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    for (Index k = 0; k < p.value.size(); ++k) {
      double& slot = p.value.data()[k];
      const double saved = slot;
      slot = saved + eps;
      const double plus = loss(false);
      slot = saved - eps;
      const double minus = loss(false);
      slot = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("grad_check: non-finite loss while perturbing " + p.name);
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i].data()[k];
      const double err = relative_error(a, numeric);
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = err;
        result.worst_parameter = p.name;
        result.worst_index = k;
        result.analytic_at_worst = a;
        result.numeric_at_worst = numeric;
      }
    }
  }
  return result;
}

}  // namespace ent

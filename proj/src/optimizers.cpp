#include "resetopt/optimizers.hpp"

#include <cmath>
#include <stdexcept>

namespace resetopt {

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::radam: return "radam";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  if (name == "radam") return OptimizerKind::radam;
  throw std::invalid_argument("unknown optimizer kind '" + name + "'");
}

void OptimHyper::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("optimizer alpha must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer epsilon must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer beta2 must lie in [0,1)");
  if (!(prox_coeff >= 0.0)) throw std::invalid_argument("prox_coeff must be >= 0");
}

OptimizerState fresh_state(const std::vector<std::size_t>& param_shape) {
  return {Tensor::zeros(param_shape), Tensor::zeros(param_shape), 0};
}

OptimizerState reset_state(const OptimizerState& state) { return fresh_state(state.m.shape()); }

namespace {

void check_step_inputs(const FlatParams& params, const Tensor& grad, const OptimizerState& state) {
  require_same_shape(params.values, grad, "gradient vs parameters");
  require_same_shape(params.values, state.m, "first moment vs parameters");
  require_same_shape(params.values, state.v, "second moment vs parameters");
  if (!grad.all_finite()) throw NonFiniteGradient("gradient contains NaN or Inf");
}

enum class Debias { on, off };
enum class Update { adaptive, rectified };

// Shared recurrence for Adam, its undebiased form, and RAdam. The stored
// state always keeps raw averages; debiasing touches working copies only.
StepResult moment_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                       const OptimHyper& h, Debias debias, Update update) {
  h.validate();
  check_step_inputs(params, grad, state);

  StepResult out{params, state, {}};
  out.state.i = state.i + 1;
  const double i = static_cast<double>(out.state.i);
  const double d1 = debias == Debias::on ? 1.0 - std::pow(h.beta1, i) : 1.0;
  const double d2 = debias == Debias::on ? 1.0 - std::pow(h.beta2, i) : 1.0;
  out.report.debias1 = d1;
  out.report.debias2 = d2;
  out.report.grad_norm = l2_norm(grad.values());

  double step_scale = h.alpha;
  bool adaptive = true;
  if (update == Update::rectified) {
    const double rho = radam_rho(h.beta2, out.state.i);
    out.report.rectifier_active = rho > h.radam_threshold;
    if (out.report.rectifier_active) {
      step_scale = h.alpha * radam_rectifier(h.beta2, out.state.i);
    } else {
      adaptive = false;
    }
  }

  auto p = out.params.values.values();
  auto m = out.state.m.values();
  auto v = out.state.v.values();
  const auto g = grad.values();
  for (std::size_t j = 0; j < p.size(); ++j) {
    m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
    v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
    const double m_hat = m[j] / d1;
    const double v_hat = v[j] / d2;
    if (adaptive) {
      p[j] = p[j] - step_scale * m_hat / (std::sqrt(v_hat) + h.epsilon);
    } else {
      p[j] = p[j] - step_scale * m_hat;
    }
  }
  return out;
}

}  // namespace

StepResult adam_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                     const OptimHyper& h) {
  return moment_step(params, grad, state, h, Debias::on, Update::adaptive);
}

StepResult adam_step_without_debias(const FlatParams& params, const Tensor& grad,
                                    const OptimizerState& state, const OptimHyper& h) {
  return moment_step(params, grad, state, h, Debias::off, Update::adaptive);
}

StepResult radam_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                      const OptimHyper& h) {
  return moment_step(params, grad, state, h, Debias::on, Update::rectified);
}

StepResult rmsprop_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                        const OptimHyper& h) {
  h.validate();
  check_step_inputs(params, grad, state);

  StepResult out{params, state, {}};
  out.state.i = state.i + 1;
  out.report.grad_norm = l2_norm(grad.values());

  auto p = out.params.values.values();
  auto v = out.state.v.values();
  const auto g = grad.values();
  for (std::size_t j = 0; j < p.size(); ++j) {
    v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
    p[j] = p[j] - h.alpha * g[j] / (std::sqrt(v[j]) + h.epsilon);
  }
  return out;
}

StepResult sgd_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                    const OptimHyper& h) {
  h.validate();
  check_step_inputs(params, grad, state);

  StepResult out{params, state, {}};
  out.state.i = state.i + 1;
  out.report.grad_norm = l2_norm(grad.values());
  auto p = out.params.values.values();
  const auto g = grad.values();
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = p[j] - h.alpha * g[j];
  return out;
}

StepResult optimizer_step(const FlatParams& params, const Tensor& grad,
                          const OptimizerState& state, const OptimHyper& h) {
  switch (h.kind) {
    case OptimizerKind::sgd: return sgd_step(params, grad, state, h);
    case OptimizerKind::adam: return adam_step(params, grad, state, h);
    case OptimizerKind::rmsprop: return rmsprop_step(params, grad, state, h);
    case OptimizerKind::radam: return radam_step(params, grad, state, h);
  }
  throw std::logic_error("unhandled optimizer kind");
}

Tensor apply_proximal(const Tensor& grad, const FlatParams& w, const FlatParams& theta,
                      double prox_coeff) {
  require_same_shape(grad, w.values, "gradient vs online parameters");
  require_same_shape(grad, theta.values, "gradient vs target parameters");
  if (!(prox_coeff >= 0.0)) throw std::invalid_argument("prox_coeff must be >= 0");
  if (prox_coeff == 0.0) return grad;
  Tensor out = grad;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += prox_coeff * (w.values[j] - theta.values[j]);
  return out;
}

double radam_rho_inf(double beta2) { return 2.0 / (1.0 - beta2) - 1.0; }

double radam_rho(double beta2, std::uint64_t i) {
  const double bi = std::pow(beta2, static_cast<double>(i));
  return radam_rho_inf(beta2) - 2.0 * static_cast<double>(i) * bi / (1.0 - bi);
}

double radam_rectifier(double beta2, std::uint64_t i) {
  const double rho_inf = radam_rho_inf(beta2);
  const double rho = radam_rho(beta2, i);
  return std::sqrt(((rho - 4.0) * (rho - 2.0) * rho_inf) / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho));
}

}  // namespace resetopt

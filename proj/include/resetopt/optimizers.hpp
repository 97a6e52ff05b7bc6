#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resetopt/mlp.hpp"
#include "resetopt/tensor.hpp"

namespace resetopt {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { sgd, adam, rmsprop, radam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimHyper {
  OptimizerKind kind = OptimizerKind::adam;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double prox_coeff = 0.0;        // 0 disables the proximal term
  double radam_threshold = 4.0;   // rectifier engages when rho_i exceeds this

  void validate() const;
};

// Raw (un-debiased) running averages and the step counter. This is the
// whole internal state a reset clears.
struct OptimizerState {
  Tensor m;
  Tensor v;
  std::uint64_t i = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct StepReport {
  double debias1 = 1.0;  // 1 - beta1^i for the post-increment i
  double debias2 = 1.0;  // 1 - beta2^i
  bool rectifier_active = false;
  double grad_norm = 0.0;
};

struct StepResult {
  FlatParams params;
  OptimizerState state;
  StepReport report;
};

OptimizerState fresh_state(const std::vector<std::size_t>& param_shape);
OptimizerState reset_state(const OptimizerState& state);

StepResult adam_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                     const OptimHyper& h);

// Adam with both debiasing divisions replaced by 1. Used to check the
// RMSProp reduction; rmsprop_step is the supported entry point.
StepResult adam_step_without_debias(const FlatParams& params, const Tensor& grad,
                                    const OptimizerState& state, const OptimHyper& h);

StepResult rmsprop_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                        const OptimHyper& h);
StepResult radam_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                      const OptimHyper& h);
StepResult sgd_step(const FlatParams& params, const Tensor& grad, const OptimizerState& state,
                    const OptimHyper& h);

// Dispatches on h.kind.
StepResult optimizer_step(const FlatParams& params, const Tensor& grad,
                          const OptimizerState& state, const OptimHyper& h);

// grad + prox_coeff * (w - theta)
Tensor apply_proximal(const Tensor& grad, const FlatParams& w, const FlatParams& theta,
                      double prox_coeff);

// rho_inf and rho_i of the rectified variant, exposed for tests and reports.
double radam_rho_inf(double beta2);
double radam_rho(double beta2, std::uint64_t i);
double radam_rectifier(double beta2, std::uint64_t i);

}  // namespace resetopt

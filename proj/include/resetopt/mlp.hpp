#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resetopt/tensor.hpp"
#include "resetopt/transition.hpp"

namespace resetopt {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Fully-connected Q-network: layer_widths = {input, hidden..., n_actions}.
// The activation applies to hidden layers; the output layer is linear.
struct MlpDef {
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  std::size_t input_width() const { return layer_widths.front(); }
  std::size_t output_width() const { return layer_widths.back(); }
  std::size_t layer_count() const { return layer_widths.size() - 1; }

  void validate() const;
};

// All weights and biases in one rank-1 tensor. Layout, layer by layer:
// the out x in weight matrix row-major (row = output unit), then the
// out-length bias vector.
struct FlatParams {
  Tensor values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const FlatParams&, const FlatParams&) = default;
};

std::size_t param_count(const MlpDef& def);

// Offset of the weight block and bias block of layer `layer` within FlatParams.
struct LayerOffsets {
  std::size_t weights;
  std::size_t biases;
  std::size_t fan_in;
  std::size_t fan_out;
};
LayerOffsets layer_offsets(const MlpDef& def, std::size_t layer);

FlatParams zero_params(const MlpDef& def);

// Glorot-uniform weights, zero biases. Deterministic in def.seed.
FlatParams init_params(const MlpDef& def);

Tensor forward(const MlpDef& def, const FlatParams& params, const Tensor& state_features);

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

// 0.5 * sum_j (targets[j] - q(inputs[j], actions[j]; w))^2 and its gradient in w.
LossGrad regression_loss_grad(const MlpDef& def, const FlatParams& w,
                              std::span<const Transition> batch, std::span<const double> targets);

// Squared TD loss with targets r + gamma * max_a' q(s', a'; theta) (r alone
// for terminal transitions). The gradient treats theta as constant.
LossGrad grad_td_loss(const MlpDef& def, const FlatParams& w, const FlatParams& theta,
                      std::span<const Transition> batch, double gamma);

double td_loss(const MlpDef& def, const FlatParams& w, const FlatParams& theta,
               std::span<const Transition> batch, double gamma);

// Central differences of td_loss in w, one coordinate at a time.
Tensor finite_diff_grad(const MlpDef& def, const FlatParams& w, const FlatParams& theta,
                        std::span<const Transition> batch, double gamma, double h);

}  // namespace resetopt

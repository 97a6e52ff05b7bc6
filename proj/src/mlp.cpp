#include "resetopt/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "resetopt/agent.hpp"

namespace resetopt {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

void MlpDef::validate() const {
  if (layer_widths.size() < 2) throw std::invalid_argument("MlpDef needs at least input and output widths");
  for (auto w : layer_widths) {
    if (w == 0) throw std::invalid_argument("MlpDef layer widths must be positive");
  }
}

std::size_t param_count(const MlpDef& def) {
  def.validate();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < def.layer_widths.size(); ++l) {
    n += def.layer_widths[l] * def.layer_widths[l + 1] + def.layer_widths[l + 1];
  }
  return n;
}

LayerOffsets layer_offsets(const MlpDef& def, std::size_t layer) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    offset += def.layer_widths[l] * def.layer_widths[l + 1] + def.layer_widths[l + 1];
  }
  const auto fan_in = def.layer_widths[layer];
  const auto fan_out = def.layer_widths[layer + 1];
  return {offset, offset + fan_in * fan_out, fan_in, fan_out};
}

FlatParams zero_params(const MlpDef& def) { return {Tensor::zeros({param_count(def)})}; }

FlatParams init_params(const MlpDef& def) {
  FlatParams p = zero_params(def);
  std::mt19937_64 rng(def.seed);
  for (std::size_t l = 0; l < def.layer_count(); ++l) {
    const auto off = layer_offsets(def, l);
    const double bound = std::sqrt(6.0 / static_cast<double>(off.fan_in + off.fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t j = 0; j < off.fan_in * off.fan_out; ++j) p.values[off.weights + j] = dist(rng);
  }
  return p;
}

namespace {

void check_params(const MlpDef& def, const FlatParams& params) {
  if (params.values.rank() != 1 || params.size() != param_count(def)) {
    throw DimensionError("parameter vector of length " + std::to_string(params.size()) +
                         " does not fit network with " + std::to_string(param_count(def)) +
                         " parameters");
  }
}

void check_features(const MlpDef& def, const Tensor& x) {
  if (x.size() != def.input_width()) {
    throw DimensionError("state features of length " + std::to_string(x.size()) +
                         " do not match input width " + std::to_string(def.input_width()));
  }
}

double activate(Activation a, double z) { return a == Activation::relu ? std::max(z, 0.0) : std::tanh(z); }

// Derivative expressed through the post-activation value.
double activation_slope(Activation a, double out) {
  return a == Activation::relu ? (out > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

// Activations of every layer: acts[0] is the input, acts.back() the q-values.
std::vector<std::vector<double>> forward_trace(const MlpDef& def, const FlatParams& params,
                                               std::span<const double> input) {
  std::vector<std::vector<double>> acts;
  acts.reserve(def.layer_widths.size());
  acts.emplace_back(input.begin(), input.end());
  const auto p = params.values.values();
  for (std::size_t l = 0; l < def.layer_count(); ++l) {
    const auto off = layer_offsets(def, l);
    const bool hidden = l + 1 < def.layer_count();
    const auto& in = acts.back();
    std::vector<double> out(off.fan_out);
    for (std::size_t o = 0; o < off.fan_out; ++o) {
      double z = p[off.biases + o];
      const double* row = &p[off.weights + o * off.fan_in];
      for (std::size_t i = 0; i < off.fan_in; ++i) z += row[i] * in[i];
      out[o] = hidden ? activate(def.activation, z) : z;
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

void check_batch(const MlpDef& def, std::span<const Transition> batch) {
  if (batch.empty()) throw std::invalid_argument("TD loss needs a nonempty batch");
  for (const auto& tr : batch) {
    check_features(def, tr.s);
    check_features(def, tr.s_next);
    if (tr.a >= def.output_width()) {
      throw DimensionError("action " + std::to_string(tr.a) + " out of range for " +
                           std::to_string(def.output_width()) + " outputs");
    }
  }
}

std::vector<double> batch_targets(const MlpDef& def, const FlatParams& theta,
                                  std::span<const Transition> batch, double gamma) {
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const auto& tr : batch) targets.push_back(bellman_target(def, theta, tr, gamma));
  return targets;
}

}  // namespace

Tensor forward(const MlpDef& def, const FlatParams& params, const Tensor& state_features) {
  def.validate();
  check_params(def, params);
  check_features(def, state_features);
  auto acts = forward_trace(def, params, state_features.values());
  return Tensor::vector(std::move(acts.back()));
}

LossGrad regression_loss_grad(const MlpDef& def, const FlatParams& w,
                              std::span<const Transition> batch, std::span<const double> targets) {
  def.validate();
  check_params(def, w);
  check_batch(def, batch);
  if (targets.size() != batch.size()) throw DimensionError("one target per transition required");

  LossGrad out{0.0, Tensor::zeros({w.size()})};
  auto g = out.grad.values();
  const auto p = w.values.values();
  const std::size_t L = def.layer_count();

  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto acts = forward_trace(def, w, batch[j].s.values());
    const double residual = acts.back()[batch[j].a] - targets[j];
    out.loss += 0.5 * residual * residual;

    std::vector<double> delta(def.output_width(), 0.0);
    delta[batch[j].a] = residual;
    for (std::size_t l = L; l-- > 0;) {
      const auto off = layer_offsets(def, l);
      const auto& in = acts[l];
      for (std::size_t o = 0; o < off.fan_out; ++o) {
        if (delta[o] == 0.0) continue;
        g[off.biases + o] += delta[o];
        double* row = &g[off.weights + o * off.fan_in];
        for (std::size_t i = 0; i < off.fan_in; ++i) row[i] += delta[o] * in[i];
      }
      if (l == 0) break;
      std::vector<double> prev(off.fan_in, 0.0);
      for (std::size_t o = 0; o < off.fan_out; ++o) {
        if (delta[o] == 0.0) continue;
        const double* row = &p[off.weights + o * off.fan_in];
        for (std::size_t i = 0; i < off.fan_in; ++i) prev[i] += row[i] * delta[o];
      }
      for (std::size_t i = 0; i < off.fan_in; ++i) prev[i] *= activation_slope(def.activation, in[i]);
      delta = std::move(prev);
    }
  }
  return out;
}

LossGrad grad_td_loss(const MlpDef& def, const FlatParams& w, const FlatParams& theta,
                      std::span<const Transition> batch, double gamma) {
  def.validate();
  check_params(def, theta);
  check_batch(def, batch);
  const auto targets = batch_targets(def, theta, batch, gamma);
  return regression_loss_grad(def, w, batch, targets);
}

double td_loss(const MlpDef& def, const FlatParams& w, const FlatParams& theta,
               std::span<const Transition> batch, double gamma) {
  def.validate();
  check_params(def, w);
  check_params(def, theta);
  check_batch(def, batch);
  double loss = 0.0;
  for (const auto& tr : batch) {
    const double residual = bellman_target(def, theta, tr, gamma) -
                            forward_trace(def, w, tr.s.values()).back()[tr.a];
    loss += 0.5 * residual * residual;
  }
  return loss;
}

Tensor finite_diff_grad(const MlpDef& def, const FlatParams& w, const FlatParams& theta,
                        std::span<const Transition> batch, double gamma, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  Tensor grad = Tensor::zeros({w.size()});
  FlatParams probe = w;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double original = w.values[j];
    probe.values[j] = original + h;
    const double up = td_loss(def, probe, theta, batch, gamma);
    probe.values[j] = original - h;
    const double down = td_loss(def, probe, theta, batch, gamma);
    probe.values[j] = original;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace resetopt

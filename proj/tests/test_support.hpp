#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "resetopt/mlp.hpp"
#include "resetopt/transition.hpp"

namespace resetopt::testing {

// max |a - b| / max(max|a|, max|b|, tiny)
inline double relative_max_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

struct GradInstance {
  MlpDef def;
  FlatParams w;
  FlatParams theta;
  std::vector<Transition> batch;
  double gamma = 0.9;
};

inline Tensor random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return Tensor::vector(std::move(v));
}

// True when some relu pre-activation of `x` lies within `margin` of the kink.
inline bool near_relu_kink(const MlpDef& def, const FlatParams& p, const Tensor& x, double margin) {
  if (def.activation != Activation::relu) return false;
  std::vector<double> in(x.data());
  for (std::size_t l = 0; l + 1 < def.layer_count(); ++l) {
    const auto off = layer_offsets(def, l);
    std::vector<double> out(off.fan_out);
    for (std::size_t o = 0; o < off.fan_out; ++o) {
      double z = p.values[off.biases + o];
      for (std::size_t i = 0; i < off.fan_in; ++i) z += p.values[off.weights + o * off.fan_in + i] * in[i];
      if (std::abs(z) < margin) return true;
      out[o] = std::max(z, 0.0);
    }
    in = std::move(out);
  }
  return false;
}

// Small random instances: widths up to [6, 8, 4] (zero or one hidden layer),
// batches of 1..16 with ~25% terminal transitions, random biases, relu or
// tanh. Instances whose w-network sits within 1e-3 of a relu kink are
// redrawn because central differences are meaningless there.
inline GradInstance random_grad_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> in_w(1, 6), hid_w(1, 8), out_w(1, 4), bsz(1, 16), depth(0, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    GradInstance g;
    g.def.layer_widths.push_back(in_w(rng));
    if (depth(rng)) g.def.layer_widths.push_back(hid_w(rng));
    g.def.layer_widths.push_back(out_w(rng));
    g.def.activation = unit(rng) < 0.5 ? Activation::relu : Activation::tanh;
    g.gamma = unit(rng) * 0.99;
    const auto n = param_count(g.def);
    g.w = {random_vector(n, rng)};
    g.theta = {random_vector(n, rng)};
    std::uniform_int_distribution<std::size_t> act(0, g.def.output_width() - 1);
    const auto size = bsz(rng);
    bool kink = false;
    for (std::size_t j = 0; j < size; ++j) {
      Transition t;
      t.s = random_vector(g.def.input_width(), rng);
      t.s_next = random_vector(g.def.input_width(), rng);
      t.a = act(rng);
      t.r = unit(rng) * 2.0 - 1.0;
      t.terminal = unit(rng) < 0.25;
      kink = kink || near_relu_kink(g.def, g.w, t.s, 1e-3);
      g.batch.push_back(std::move(t));
    }
    if (!kink) return g;
  }
}

}  // namespace resetopt::testing

#pragma once

#include <cstddef>

#include "resetopt/tensor.hpp"

namespace resetopt {

// One <s, a, r, s'> sample. `terminal` marks s' as terminal, in which case
// the regression target is r alone.
struct Transition {
  Tensor s;
  std::size_t a = 0;
  double r = 0.0;
  Tensor s_next;
  bool terminal = false;
};

}  // namespace resetopt

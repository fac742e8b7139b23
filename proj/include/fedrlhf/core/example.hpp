#pragma once

#include "fedrlhf/core/types.hpp"

#include <cstddef>

namespace fedrlhf {

// One preference record after position-effect elimination: `label` marks which
// of (y0, y1) is preferred. `source` identifies the raw pair it came from, so
// both orderings of one pair can be kept together.
struct SymmetrizedExample {
  VectorXd x;
  VectorXd y0;
  VectorXd y1;
  int label = 0;
  std::size_t source = 0;
};

}  // namespace fedrlhf

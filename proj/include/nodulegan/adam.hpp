#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nodulegan/tensor.hpp"

namespace ngan {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter list, in the same order.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Moment buffers are sized on the first call.
void adam_step(std::span<const Tensor> params, AdamState& state);

}  // namespace ngan

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodulegan/gradcheck.hpp"

namespace ngan {

struct OpGradReport {
  std::string op;
  int configs = 0;
  GradCheckResult result;
};

struct GradientSuiteReport {
  std::vector<OpGradReport> ops;

  bool ok() const;
  std::size_t checked() const;
  std::size_t retried() const;
  double max_rel_error() const;
};

/// Central-difference checks of every differentiable engine operation and of
/// the generator and discriminator objectives on tiny networks, each over
/// configs_per_op random configurations.
GradientSuiteReport run_gradient_suite(int configs_per_op = 20, std::uint64_t seed = 77, double tolerance = 1e-4);

}  // namespace ngan

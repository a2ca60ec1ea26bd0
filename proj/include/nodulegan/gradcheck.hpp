#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nodulegan/tensor.hpp"

namespace ngan {

struct GradCheckOptions {
  /// Central-difference step is rel_step * max(1, |value|).
  double rel_step = 1e-3;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so gradients that are zero
  /// up to roundoff compare on an absolute scale.
  double scale_floor = 1e-6;
  /// Entries checked per tensor; 0 checks all of them.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 1;
  /// Extra step multipliers tried on an entry that fails at the base step.
  /// The entry passes when any step agrees.
  std::vector<double> retry_step_factors;
};

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  /// Entries that failed at the base step and passed at a retry step.
  std::size_t retried = 0;
  double max_rel_error = 0.0;
  std::string worst;  // description of the worst entry

  bool ok() const { return failed == 0; }
  void merge(const GradCheckResult& other);
};

/// Compares the analytic gradient of loss_fn with respect to each input tensor
/// against central finite differences. loss_fn must rebuild the graph on each
/// call and be deterministic (reseed any dropout stream inside it).
GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn, std::span<Tensor> inputs,
                          const GradCheckOptions& options = {});

}  // namespace ngan

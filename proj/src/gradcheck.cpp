#include "nodulegan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "nodulegan/rng.hpp"

namespace ngan {

void GradCheckResult::merge(const GradCheckResult& other) {
  checked += other.checked;
  failed += other.failed;
  retried += other.retried;
  if (other.max_rel_error > max_rel_error) {
    max_rel_error = other.max_rel_error;
    worst = other.worst;
  }
}

GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn, std::span<Tensor> inputs,
                          const GradCheckOptions& options) {
  for (Tensor& t : inputs) t.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckResult result;
  RngStream rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_entries_per_tensor && idx.size() > options.max_entries_per_tensor) {
      // partial Fisher-Yates
      for (std::size_t i = 0; i < options.max_entries_per_tensor; ++i) {
        const std::size_t j = i + rng.next_u64() % (idx.size() - i);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(options.max_entries_per_tensor);
    }
    auto values = t.values();
    for (std::size_t i : idx) {
      const double saved = values[i];
      const double a = analytic[k][i];
      auto rel_error = [&](double factor, double& numeric) {
        const double h = factor * options.rel_step * std::max(1.0, std::abs(saved));
        values[i] = saved + h;
        const double up = loss_fn().item();
        values[i] = saved - h;
        const double down = loss_fn().item();
        values[i] = saved;
        numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(a), std::abs(numeric), options.scale_floor});
        return std::abs(a - numeric) / denom;
      };
      double numeric = 0;
      double rel = rel_error(1.0, numeric);
      if (rel > options.tolerance && !options.retry_step_factors.empty()) {
        for (double f : options.retry_step_factors) {
          double n2 = 0;
          const double r2 = rel_error(f, n2);
          if (r2 < rel) {
            rel = r2;
            numeric = n2;
          }
        }
        if (rel <= options.tolerance) ++result.retried;
      }
      ++result.checked;
      if (rel > options.tolerance) ++result.failed;
      if (rel > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        std::ostringstream os;
        os << "input " << k << " entry " << i << ": analytic " << a << " numeric " << numeric;
        result.worst = os.str();
      }
    }
  }
  return result;
}

}  // namespace ngan

#include "nodulegan/adam.hpp"

#include <cmath>

#include "nodulegan/error.hpp"

namespace ngan {

void adam_step(std::span<const Tensor> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != p.numel()) {
      throw ShapeError("adam_step: moment size " + std::to_string(m.size()) +
                       " does not match parameter " + shape_str(p.shape()));
    }
    auto w = p.values();
    const auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace ngan

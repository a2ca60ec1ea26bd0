#include "nodulegan/ops.hpp"

#include <cmath>

#include "nodulegan/error.hpp"

namespace ngan {

namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Accumulate into parent i only when it participates in differentiation.
std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

ConvProblem conv_problem(const Tensor& x, const Tensor& weight, const ConvGeometry& g,
                         const char* op) {
  if (x.rank() != 5 || weight.rank() != 5) {
    throw ShapeError(std::string(op) + ": expected 5-D input and weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  for (int a = 0; a < 3; ++a) {
    if (weight.dim(2 + a) != g.kernel[a]) {
      throw ShapeError(std::string(op) + ": weight " + shape_str(weight.shape()) +
                       " does not match kernel extents of the layer geometry");
    }
  }
  ConvProblem p;
  p.batch = x.dim(0);
  p.geom = g;
  return p;
}

template <typename F>
std::vector<double> map_values(std::span<const double> in, F f) {
  std::vector<double> out(in.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = f(in[i]);
  return out;
}

double stable_softplus(double v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  ConvProblem p = conv_problem(x, weight, g, "conv3d");
  p.in_ch = x.dim(1);
  p.out_ch = weight.dim(0);
  if (weight.dim(1) != p.in_ch) {
    throw ShapeError("conv3d: input " + shape_str(x.shape()) + " has " + std::to_string(p.in_ch) +
                     " channels but weight " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.numel() != static_cast<std::size_t>(p.out_ch)) {
    throw ShapeError("conv3d: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  for (int a = 0; a < 3; ++a) {
    p.in[a] = x.dim(2 + a);
    p.out[a] = g.conv_out(a, p.in[a]);
    if (p.out[a] <= 0) {
      throw ShapeError("conv3d: input " + shape_str(x.shape()) +
                       " too small for weight " + shape_str(weight.shape()) +
                       " with the given stride/padding");
    }
  }
  Shape out_shape{p.batch, p.out_ch, p.out[0], p.out[1], p.out[2]};
  std::vector<double> y(shape_numel(out_shape));
  kernels::conv_forward(p, x.values(), weight.values(), bias.values(), y);

  return Tensor::make_result(std::move(out_shape), std::move(y), {x, weight, bias},
                             [p, x, weight](Node& self) {
    const std::span<const double> dy = self.grad;
    if (auto* dx = parent_grad(self, 0)) kernels::conv_backward_input(p, dy, weight.values(), *dx);
    if (auto* dw = parent_grad(self, 1)) kernels::conv_backward_weight(p, x.values(), dy, *dw);
    if (auto* db = parent_grad(self, 2)) {
      const std::size_t ov = p.out_voxels();
      for (int b = 0; b < p.batch; ++b)
        for (int c = 0; c < p.out_ch; ++c) {
          const double* g = dy.data() + (std::size_t(b) * p.out_ch + c) * ov;
          double s = 0.0;
          for (std::size_t i = 0; i < ov; ++i) s += g[i];
          (*db)[c] += s;
        }
    }
  });
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        const ConvGeometry& g) {
  // Expressed as the adjoint of a convolution whose input is our output.
  ConvProblem p = conv_problem(x, weight, g, "conv_transpose3d");
  p.out_ch = x.dim(1);
  p.in_ch = weight.dim(1);
  if (weight.dim(0) != p.out_ch) {
    throw ShapeError("conv_transpose3d: input " + shape_str(x.shape()) + " has " +
                     std::to_string(p.out_ch) + " channels but weight " +
                     shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(0)));
  }
  if (bias.numel() != static_cast<std::size_t>(p.in_ch)) {
    throw ShapeError("conv_transpose3d: bias " + shape_str(bias.shape()) +
                     " does not match weight " + shape_str(weight.shape()));
  }
  for (int a = 0; a < 3; ++a) {
    p.out[a] = x.dim(2 + a);
    p.in[a] = g.transpose_out(a, p.out[a]);
    if (p.in[a] <= 0 || g.conv_out(a, p.in[a]) != p.out[a]) {
      throw ShapeError("conv_transpose3d: input " + shape_str(x.shape()) +
                       " incompatible with weight " + shape_str(weight.shape()) +
                       " and the given stride/padding");
    }
  }
  Shape out_shape{p.batch, p.in_ch, p.in[0], p.in[1], p.in[2]};
  std::vector<double> y(shape_numel(out_shape));
  const std::size_t iv = p.in_voxels();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = bias.values()[(i / iv) % p.in_ch];
  kernels::conv_backward_input(p, x.values(), weight.values(), y);

  return Tensor::make_result(std::move(out_shape), std::move(y), {x, weight, bias},
                             [p, x, weight](Node& self) {
    const std::span<const double> dy = self.grad;
    if (auto* dx = parent_grad(self, 0)) {
      std::vector<double> tmp(dx->size());
      kernels::conv_forward(p, dy, weight.values(), {}, tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) (*dx)[i] += tmp[i];
    }
    if (auto* dw = parent_grad(self, 1)) kernels::conv_backward_weight(p, dy, x.values(), *dw);
    if (auto* db = parent_grad(self, 2)) {
      const std::size_t iv = p.in_voxels();
      for (int b = 0; b < p.batch; ++b)
        for (int c = 0; c < p.in_ch; ++c) {
          const double* g = dy.data() + (std::size_t(b) * p.in_ch + c) * iv;
          double s = 0.0;
          for (std::size_t i = 0; i < iv; ++i) s += g[i];
          (*db)[c] += s;
        }
    }
  });
}

Tensor activation(const Tensor& x, Activation act) {
  std::vector<double> y;
  switch (act.kind) {
    case ActivationKind::leaky_relu: {
      const double s = act.slope;
      y = map_values(x.values(), [s](double v) { return v > 0 ? v : s * v; });
      break;
    }
    case ActivationKind::relu:
      y = map_values(x.values(), [](double v) { return v > 0 ? v : 0.0; });
      break;
    case ActivationKind::tanh:
      y = map_values(x.values(), [](double v) { return std::tanh(v); });
      break;
    case ActivationKind::sigmoid:
      y = map_values(x.values(), stable_sigmoid);
      break;
  }
  return Tensor::make_result(x.shape(), std::move(y), {x}, [act, x](Node& self) {
    auto* dx = parent_grad(self, 0);
    if (!dx) return;
    const auto xv = x.values();
    const auto& yv = self.values;
    const auto& g = self.grad;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.size());
    switch (act.kind) {
      case ActivationKind::leaky_relu:
        for (std::ptrdiff_t i = 0; i < n; ++i) (*dx)[i] += g[i] * (xv[i] > 0 ? 1.0 : act.slope);
        break;
      case ActivationKind::relu:
        for (std::ptrdiff_t i = 0; i < n; ++i) (*dx)[i] += xv[i] > 0 ? g[i] : 0.0;
        break;
      case ActivationKind::tanh:
        for (std::ptrdiff_t i = 0; i < n; ++i) (*dx)[i] += g[i] * (1.0 - yv[i] * yv[i]);
        break;
      case ActivationKind::sigmoid:
        for (std::ptrdiff_t i = 0; i < n; ++i) (*dx)[i] += g[i] * yv[i] * (1.0 - yv[i]);
        break;
    }
  });
}

Tensor softplus(const Tensor& x) {
  auto y = map_values(x.values(), stable_softplus);
  return Tensor::make_result(x.shape(), std::move(y), {x}, [x](Node& self) {
    auto* dx = parent_grad(self, 0);
    if (!dx) return;
    const auto xv = x.values();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      (*dx)[i] += self.grad[i] * stable_sigmoid(xv[i]);
  });
}

Tensor dropout(const Tensor& x, double rate, RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  const std::uint64_t key = rng.next_u64();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(mask.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    mask[i] = uniform_at(key, static_cast<std::uint64_t>(i)) < rate ? 0.0 : keep_scale;
  }
  std::vector<double> y(mask.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  return Tensor::make_result(x.shape(), std::move(y), {x}, [mask = std::move(mask)](Node& self) {
    auto* dx = parent_grad(self, 0);
    if (!dx) return;
    for (std::size_t i = 0; i < mask.size(); ++i) (*dx)[i] += self.grad[i] * mask[i];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  for (std::size_t i = 2; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    }
  }
  const int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t vox = a.numel() / (std::size_t(batch) * ca);
  Shape out_shape = a.shape();
  out_shape[1] = ca + cb;
  std::vector<double> y(shape_numel(out_shape));
  const std::size_t na = ca * vox, nb = cb * vox;
  for (int n = 0; n < batch; ++n) {
    std::copy_n(a.values().data() + n * na, na, y.data() + n * (na + nb));
    std::copy_n(b.values().data() + n * nb, nb, y.data() + n * (na + nb) + na);
  }
  return Tensor::make_result(std::move(out_shape), std::move(y), {a, b},
                             [batch, na, nb](Node& self) {
    auto* da = parent_grad(self, 0);
    auto* db = parent_grad(self, 1);
    for (int n = 0; n < batch; ++n) {
      const double* g = self.grad.data() + n * (na + nb);
      if (da)
        for (std::size_t i = 0; i < na; ++i) (*da)[n * na + i] += g[i];
      if (db)
        for (std::size_t i = 0; i < nb; ++i) (*db)[n * nb + i] += g[na + i];
    }
  });
}

namespace {

template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da_fn, DB db_fn) {
  require_same_shape(a, b, op);
  std::vector<double> y(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i], bv[i]);
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [a, b, da_fn, db_fn](Node& self) {
    const auto av = a.values(), bv = b.values();
    if (auto* da = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*da)[i] += self.grad[i] * da_fn(av[i], bv[i]);
    if (auto* db = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*db)[i] += self.grad[i] * db_fn(av[i], bv[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  auto y = map_values(a.values(), [s](double v) { return s * v; });
  return Tensor::make_result(a.shape(), std::move(y), {a}, [s](Node& self) {
    if (auto* da = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*da)[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  auto y = map_values(a.values(), [s](double v) { return v + s; });
  return Tensor::make_result(a.shape(), std::move(y), {a}, [](Node& self) {
    if (auto* da = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*da)[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return Tensor::make_result({1}, {s}, {x}, [](Node& self) {
    if (auto* dx = parent_grad(self, 0))
      for (double& g : *dx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor blend(const Tensor& inside, const Tensor& outside, const Tensor& mask) {
  require_same_shape(inside, outside, "blend");
  require_same_shape(inside, mask, "blend");
  std::vector<double> y(inside.numel());
  const auto iv = inside.values(), ov = outside.values(), mv = mask.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = mv[i] * iv[i] + (1.0 - mv[i]) * ov[i];
  return Tensor::make_result(inside.shape(), std::move(y), {inside, outside}, [mask](Node& self) {
    const auto mv = mask.values();
    if (auto* di = parent_grad(self, 0))
      for (std::size_t i = 0; i < mv.size(); ++i) (*di)[i] += mv[i] * self.grad[i];
    if (auto* dout = parent_grad(self, 1))
      for (std::size_t i = 0; i < mv.size(); ++i) (*dout)[i] += (1.0 - mv[i]) * self.grad[i];
  });
}

Tensor weighted_l1(const Tensor& pred, const Tensor& target, const Tensor& weights) {
  require_same_shape(pred, target, "weighted_l1");
  require_same_shape(pred, weights, "weighted_l1");
  const auto pv = pred.values(), tv = target.values(), wv = weights.values();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += wv[i] * std::abs(pv[i] - tv[i]);
  return Tensor::make_result({1}, {s}, {pred}, [pred, target, weights](Node& self) {
    auto* dp = parent_grad(self, 0);
    if (!dp) return;
    const auto pv = pred.values(), tv = target.values(), wv = weights.values();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = pv[i] - tv[i];
      (*dp)[i] += g * wv[i] * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    }
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  const auto zv = logits.values(), tv = targets.values();
  const double inv_n = 1.0 / static_cast<double>(zv.size());
  double s = 0.0;
  // t*softplus(-z) + (1-t)*softplus(z) = softplus(z) - t*z
  for (std::size_t i = 0; i < zv.size(); ++i) s += stable_softplus(zv[i]) - tv[i] * zv[i];
  return Tensor::make_result({1}, {s * inv_n}, {logits}, [logits, targets, inv_n](Node& self) {
    auto* dz = parent_grad(self, 0);
    if (!dz) return;
    const auto zv = logits.values(), tv = targets.values();
    const double g = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < zv.size(); ++i) (*dz)[i] += g * (stable_sigmoid(zv[i]) - tv[i]);
  });
}

}  // namespace ngan

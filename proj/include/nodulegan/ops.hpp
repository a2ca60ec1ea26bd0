#pragma once

#include <cstdint>

#include "nodulegan/kernels.hpp"
#include "nodulegan/rng.hpp"
#include "nodulegan/tensor.hpp"

namespace ngan {

// Differentiable operations. Spatial ops expect 5-D tensors (B, C, D, H, W);
// 2-D networks use D = 1 with planar geometries.

/// weight: (out_ch, in_ch, kd, kh, kw); bias: (out_ch).
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);
/// weight: (in_ch, out_ch, kd, kh, kw); bias: (out_ch).
Tensor conv_transpose3d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        const ConvGeometry& g);

enum class ActivationKind { leaky_relu, relu, tanh, sigmoid };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.2;  // leaky_relu only
};

Tensor activation(const Tensor& x, Activation act);
inline Tensor leaky_relu(const Tensor& x, double slope = 0.2) {
  return activation(x, {ActivationKind::leaky_relu, slope});
}
inline Tensor relu(const Tensor& x) { return activation(x, {ActivationKind::relu}); }
inline Tensor tanh(const Tensor& x) { return activation(x, {ActivationKind::tanh}); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, {ActivationKind::sigmoid}); }

/// log(1 + e^x), evaluated stably.
Tensor softplus(const Tensor& x);

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// 1/(1-rate). Draws one key from `rng`; the mask is a pure function of that key.
Tensor dropout(const Tensor& x, double rate, RngStream& rng);

/// Channel-wise concatenation of two (B, C, ...) tensors with equal other extents.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// mask * inside + (1 - mask) * outside, mask treated as a constant.
Tensor blend(const Tensor& inside, const Tensor& outside, const Tensor& mask);

/// sum(weights * |pred - target|); target and weights are constants.
Tensor weighted_l1(const Tensor& pred, const Tensor& target, const Tensor& weights);

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace ngan

#pragma once

#include <string>
#include <vector>

#include "nodulegan/kernels.hpp"
#include "nodulegan/ops.hpp"
#include "nodulegan/rng.hpp"
#include "nodulegan/tensor.hpp"

namespace ngan {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Ordered, named parameter collection of a network; the order is the
/// serialization order.
using ParamList = std::vector<NamedParam>;

void set_requires_grad(const ParamList& ps, bool flag);
std::vector<Tensor> tensors_of(const ParamList& ps);
void zero_grads(const ParamList& ps);

class Conv3dLayer {
 public:
  Conv3dLayer() = default;
  Conv3dLayer(int in_ch, int out_ch, ConvGeometry geometry);

  Tensor forward(const Tensor& x) const { return conv3d(x, weight, bias, geometry); }
  void init_normal(RngStream& rng, double sigma);
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight;  // (out_ch, in_ch, kd, kh, kw)
  Tensor bias;    // (out_ch)
  ConvGeometry geometry;
};

class ConvTranspose3dLayer {
 public:
  ConvTranspose3dLayer() = default;
  ConvTranspose3dLayer(int in_ch, int out_ch, ConvGeometry geometry);

  Tensor forward(const Tensor& x) const { return conv_transpose3d(x, weight, bias, geometry); }
  void init_normal(RngStream& rng, double sigma);
  void collect(const std::string& prefix, ParamList& out) const;

  Tensor weight;  // (in_ch, out_ch, kd, kh, kw)
  Tensor bias;    // (out_ch)
  ConvGeometry geometry;
};

}  // namespace ngan

#include "nodulegan/layers.hpp"

#include "nodulegan/error.hpp"

namespace ngan {

namespace {

void fill_normal(Tensor& t, RngStream& rng, double sigma) {
  for (double& v : t.values()) v = sigma * rng.normal();
}

void check_channels(int in_ch, int out_ch) {
  if (in_ch <= 0 || out_ch <= 0) {
    throw ConfigError("layer channel counts must be positive, got " + std::to_string(in_ch) +
                      " -> " + std::to_string(out_ch));
  }
}

}  // namespace

Conv3dLayer::Conv3dLayer(int in_ch, int out_ch, ConvGeometry g) : geometry(g) {
  check_channels(in_ch, out_ch);
  weight = Tensor::zeros({out_ch, in_ch, g.kernel[0], g.kernel[1], g.kernel[2]}, true);
  bias = Tensor::zeros({out_ch}, true);
}

void Conv3dLayer::init_normal(RngStream& rng, double sigma) {
  fill_normal(weight, rng, sigma);
  for (double& v : bias.values()) v = 0.0;
}

void Conv3dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ConvTranspose3dLayer::ConvTranspose3dLayer(int in_ch, int out_ch, ConvGeometry g) : geometry(g) {
  check_channels(in_ch, out_ch);
  weight = Tensor::zeros({in_ch, out_ch, g.kernel[0], g.kernel[1], g.kernel[2]}, true);
  bias = Tensor::zeros({out_ch}, true);
}

void ConvTranspose3dLayer::init_normal(RngStream& rng, double sigma) {
  fill_normal(weight, rng, sigma);
  for (double& v : bias.values()) v = 0.0;
}

void ConvTranspose3dLayer::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

void set_requires_grad(const ParamList& ps, bool flag) {
  for (const auto& p : ps) {
    Tensor t = p.tensor;
    t.set_requires_grad(flag);
  }
}

std::vector<Tensor> tensors_of(const ParamList& ps) {
  std::vector<Tensor> out;
  for (const auto& p : ps) out.push_back(p.tensor);
  return out;
}

void zero_grads(const ParamList& ps) {
  for (const auto& p : ps) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace ngan

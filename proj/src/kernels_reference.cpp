#include "nodulegan/kernels.hpp"

namespace ngan::kernels::reference {

namespace {

// Calls f(x_index, w_index, y_index) for every (input, kernel, output) triple
// that contributes to the convolution, in plain nested-loop order.
template <typename F>
void for_each_tap(const ConvProblem& p, F&& f) {
  const auto& g = p.geom;
  for (int b = 0; b < p.batch; ++b)
    for (int oc = 0; oc < p.out_ch; ++oc)
      for (int od = 0; od < p.out[0]; ++od)
        for (int oh = 0; oh < p.out[1]; ++oh)
          for (int ow = 0; ow < p.out[2]; ++ow) {
            const std::size_t yi =
                (((std::size_t(b) * p.out_ch + oc) * p.out[0] + od) * p.out[1] + oh) * p.out[2] + ow;
            for (int ic = 0; ic < p.in_ch; ++ic)
              for (int kd = 0; kd < g.kernel[0]; ++kd)
                for (int kh = 0; kh < g.kernel[1]; ++kh)
                  for (int kw = 0; kw < g.kernel[2]; ++kw) {
                    const int id = od * g.stride[0] + kd - g.padding[0];
                    const int ih = oh * g.stride[1] + kh - g.padding[1];
                    const int iw = ow * g.stride[2] + kw - g.padding[2];
                    if (id < 0 || ih < 0 || iw < 0 || id >= p.in[0] || ih >= p.in[1] ||
                        iw >= p.in[2])
                      continue;
                    const std::size_t xi =
                        (((std::size_t(b) * p.in_ch + ic) * p.in[0] + id) * p.in[1] + ih) *
                            p.in[2] + iw;
                    const std::size_t wi =
                        (((std::size_t(oc) * p.in_ch + ic) * g.kernel[0] + kd) * g.kernel[1] + kh) *
                            g.kernel[2] + kw;
                    f(xi, wi, yi);
                  }
          }
}

}  // namespace

void conv_forward(const ConvProblem& p, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y) {
  const std::size_t ov = p.out_voxels();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t oc = (i / ov) % p.out_ch;
    y[i] = bias.empty() ? 0.0 : bias[oc];
  }
  for_each_tap(p, [&](std::size_t xi, std::size_t wi, std::size_t yi) { y[yi] += x[xi] * w[wi]; });
}

void conv_backward_input(const ConvProblem& p, std::span<const double> dy,
                         std::span<const double> w, std::span<double> dx) {
  for_each_tap(p, [&](std::size_t xi, std::size_t wi, std::size_t yi) { dx[xi] += dy[yi] * w[wi]; });
}

void conv_backward_weight(const ConvProblem& p, std::span<const double> x,
                          std::span<const double> dy, std::span<double> dw) {
  for_each_tap(p, [&](std::size_t xi, std::size_t wi, std::size_t yi) { dw[wi] += dy[yi] * x[xi]; });
}

}  // namespace ngan::kernels::reference

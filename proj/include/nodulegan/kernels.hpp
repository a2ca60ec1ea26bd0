#pragma once

#include <array>
#include <span>

namespace ngan {

/// Kernel extent, stride and zero padding per spatial axis (depth, height, width).
struct ConvGeometry {
  std::array<int, 3> kernel{4, 4, 4};
  std::array<int, 3> stride{2, 2, 2};
  std::array<int, 3> padding{1, 1, 1};

  static ConvGeometry cubic(int k, int stride, int pad) {
    return {{k, k, k}, {stride, stride, stride}, {pad, pad, pad}};
  }
  /// 2D layer embedded in the 3D engine: depth extent 1, no depth stride/padding.
  static ConvGeometry planar(int k, int stride, int pad) {
    return {{1, k, k}, {1, stride, stride}, {0, pad, pad}};
  }

  /// floor((in + 2p - k) / s) + 1; non-positive when the window does not fit.
  int conv_out(int axis, int in) const {
    const int span = in + 2 * padding[axis] - kernel[axis];
    return span < 0 ? 0 : span / stride[axis] + 1;
  }
  /// (in - 1) s - 2p + k
  int transpose_out(int axis, int in) const {
    return (in - 1) * stride[axis] - 2 * padding[axis] + kernel[axis];
  }
};

/// Full problem size of a (non-transposed) convolution.
/// x: [batch, in_ch, in...], w: [out_ch, in_ch, kernel...], y: [batch, out_ch, out...]
struct ConvProblem {
  int batch = 1;
  int in_ch = 1;
  int out_ch = 1;
  std::array<int, 3> in{1, 1, 1};
  std::array<int, 3> out{1, 1, 1};
  ConvGeometry geom;

  std::size_t in_voxels() const { return std::size_t(in[0]) * in[1] * in[2]; }
  std::size_t out_voxels() const { return std::size_t(out[0]) * out[1] * out[2]; }
  std::size_t kernel_volume() const {
    return std::size_t(geom.kernel[0]) * geom.kernel[1] * geom.kernel[2];
  }
};

// The three convolution kernels. The transposed convolution is expressed
// through them: its forward pass is conv_backward_input and its backward
// passes are conv_forward / conv_backward_weight with roles swapped.
//
// Each output element is reduced sequentially inside one worker, so results do
// not depend on the number of OpenMP threads.
namespace kernels {

/// y = conv(x, w) + bias (bias may be empty). Overwrites y.
void conv_forward(const ConvProblem& p, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y);
/// dx += conv^T(dy, w)
void conv_backward_input(const ConvProblem& p, std::span<const double> dy,
                         std::span<const double> w, std::span<double> dx);
/// dw += correlation of x with dy
void conv_backward_weight(const ConvProblem& p, std::span<const double> x,
                          std::span<const double> dy, std::span<double> dw);

}  // namespace kernels

// Straight nested-loop versions, single threaded. Kept as the reference the
// parallel kernels are tested and benchmarked against.
namespace kernels::reference {

void conv_forward(const ConvProblem& p, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y);
void conv_backward_input(const ConvProblem& p, std::span<const double> dy,
                         std::span<const double> w, std::span<double> dx);
void conv_backward_weight(const ConvProblem& p, std::span<const double> x,
                          std::span<const double> dy, std::span<double> dw);

}  // namespace kernels::reference

/// Sets the worker count used by all parallel kernels (<= 0 keeps the default).
void set_num_threads(int n);
int num_threads();

}  // namespace ngan

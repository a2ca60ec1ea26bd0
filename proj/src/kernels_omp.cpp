#include <algorithm>
#include <vector>

#include <omp.h>

#include "nodulegan/kernels.hpp"

namespace ngan {

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

namespace kernels {

namespace {

// Output index range [lo, hi) along one axis for which o*stride + k - pad
// lands inside [0, in).
struct Range {
  int lo;
  int hi;
};

Range valid_range(int k, int stride, int pad, int in, int out) {
  int lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  const int last = in - 1 + pad - k;
  int hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out);
  return {lo, std::max(lo, hi)};
}

struct AxisTables {
  // valid output ranges per kernel tap, per axis
  std::vector<Range> d, h, w;
};

AxisTables make_tables(const ConvProblem& p) {
  AxisTables t;
  const auto& g = p.geom;
  for (int k = 0; k < g.kernel[0]; ++k)
    t.d.push_back(valid_range(k, g.stride[0], g.padding[0], p.in[0], p.out[0]));
  for (int k = 0; k < g.kernel[1]; ++k)
    t.h.push_back(valid_range(k, g.stride[1], g.padding[1], p.in[1], p.out[1]));
  for (int k = 0; k < g.kernel[2]; ++k)
    t.w.push_back(valid_range(k, g.stride[2], g.padding[2], p.in[2], p.out[2]));
  return t;
}

}  // namespace

void conv_forward(const ConvProblem& p, std::span<const double> x, std::span<const double> w,
                  std::span<const double> bias, std::span<double> y) {
  const auto& g = p.geom;
  const AxisTables t = make_tables(p);
  const std::size_t iv = p.in_voxels(), ov = p.out_voxels(), kv = p.kernel_volume();
  const std::size_t in_row = p.in[2], in_plane = std::size_t(p.in[1]) * p.in[2];
  const std::size_t out_row = p.out[2], out_plane = std::size_t(p.out[1]) * p.out[2];
  const int sd = g.stride[0], sh = g.stride[1], sw = g.stride[2];
  const int pairs = p.batch * p.out_ch;

#pragma omp parallel for schedule(static)
  for (int bo = 0; bo < pairs; ++bo) {
    const int b = bo / p.out_ch, oc = bo % p.out_ch;
    double* yp = y.data() + std::size_t(bo) * ov;
    std::fill(yp, yp + ov, bias.empty() ? 0.0 : bias[oc]);
    for (int ic = 0; ic < p.in_ch; ++ic) {
      const double* xp = x.data() + (std::size_t(b) * p.in_ch + ic) * iv;
      const double* wp = w.data() + (std::size_t(oc) * p.in_ch + ic) * kv;
      for (int kd = 0; kd < g.kernel[0]; ++kd) {
        for (int od = t.d[kd].lo; od < t.d[kd].hi; ++od) {
          const int id = od * sd + kd - g.padding[0];
          for (int kh = 0; kh < g.kernel[1]; ++kh) {
            for (int oh = t.h[kh].lo; oh < t.h[kh].hi; ++oh) {
              const int ih = oh * sh + kh - g.padding[1];
              const double* xr = xp + id * in_plane + ih * in_row;
              double* yr = yp + od * out_plane + oh * out_row;
              const double* wr = wp + (std::size_t(kd) * g.kernel[1] + kh) * g.kernel[2];
              for (int kw = 0; kw < g.kernel[2]; ++kw) {
                const double wv = wr[kw];
                const int off = kw - g.padding[2];
                const int lo = t.w[kw].lo, hi = t.w[kw].hi;
                if (sw == 1) {
                  for (int ow = lo; ow < hi; ++ow) yr[ow] += wv * xr[ow + off];
                } else {
                  for (int ow = lo; ow < hi; ++ow) yr[ow] += wv * xr[ow * sw + off];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const ConvProblem& p, std::span<const double> dy,
                         std::span<const double> w, std::span<double> dx) {
  const auto& g = p.geom;
  const AxisTables t = make_tables(p);
  const std::size_t iv = p.in_voxels(), ov = p.out_voxels(), kv = p.kernel_volume();
  const std::size_t in_row = p.in[2], in_plane = std::size_t(p.in[1]) * p.in[2];
  const std::size_t out_row = p.out[2], out_plane = std::size_t(p.out[1]) * p.out[2];
  const int sd = g.stride[0], sh = g.stride[1], sw = g.stride[2];
  const int pairs = p.batch * p.in_ch;

#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < pairs; ++bi) {
    const int b = bi / p.in_ch, ic = bi % p.in_ch;
    double* xp = dx.data() + std::size_t(bi) * iv;
    for (int oc = 0; oc < p.out_ch; ++oc) {
      const double* yp = dy.data() + (std::size_t(b) * p.out_ch + oc) * ov;
      const double* wp = w.data() + (std::size_t(oc) * p.in_ch + ic) * kv;
      for (int kd = 0; kd < g.kernel[0]; ++kd) {
        for (int od = t.d[kd].lo; od < t.d[kd].hi; ++od) {
          const int id = od * sd + kd - g.padding[0];
          for (int kh = 0; kh < g.kernel[1]; ++kh) {
            for (int oh = t.h[kh].lo; oh < t.h[kh].hi; ++oh) {
              const int ih = oh * sh + kh - g.padding[1];
              double* xr = xp + id * in_plane + ih * in_row;
              const double* yr = yp + od * out_plane + oh * out_row;
              const double* wr = wp + (std::size_t(kd) * g.kernel[1] + kh) * g.kernel[2];
              for (int kw = 0; kw < g.kernel[2]; ++kw) {
                const double wv = wr[kw];
                const int off = kw - g.padding[2];
                const int lo = t.w[kw].lo, hi = t.w[kw].hi;
                if (sw == 1) {
                  for (int ow = lo; ow < hi; ++ow) xr[ow + off] += wv * yr[ow];
                } else {
                  for (int ow = lo; ow < hi; ++ow) xr[ow * sw + off] += wv * yr[ow];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const ConvProblem& p, std::span<const double> x,
                          std::span<const double> dy, std::span<double> dw) {
  const auto& g = p.geom;
  const AxisTables t = make_tables(p);
  const std::size_t iv = p.in_voxels(), ov = p.out_voxels(), kv = p.kernel_volume();
  const std::size_t in_row = p.in[2], in_plane = std::size_t(p.in[1]) * p.in[2];
  const std::size_t out_row = p.out[2], out_plane = std::size_t(p.out[1]) * p.out[2];
  const int sd = g.stride[0], sh = g.stride[1], sw = g.stride[2];
  const int pairs = p.out_ch * p.in_ch;

#pragma omp parallel
  {
    std::vector<double> acc(kv);
#pragma omp for schedule(static)
    for (int oi = 0; oi < pairs; ++oi) {
      const int oc = oi / p.in_ch, ic = oi % p.in_ch;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int b = 0; b < p.batch; ++b) {
        const double* xp = x.data() + (std::size_t(b) * p.in_ch + ic) * iv;
        const double* yp = dy.data() + (std::size_t(b) * p.out_ch + oc) * ov;
        for (int kd = 0; kd < g.kernel[0]; ++kd) {
          for (int od = t.d[kd].lo; od < t.d[kd].hi; ++od) {
            const int id = od * sd + kd - g.padding[0];
            for (int kh = 0; kh < g.kernel[1]; ++kh) {
              for (int oh = t.h[kh].lo; oh < t.h[kh].hi; ++oh) {
                const int ih = oh * sh + kh - g.padding[1];
                const double* xr = xp + id * in_plane + ih * in_row;
                const double* yr = yp + od * out_plane + oh * out_row;
                double* ar = acc.data() + (std::size_t(kd) * g.kernel[1] + kh) * g.kernel[2];
                for (int kw = 0; kw < g.kernel[2]; ++kw) {
                  const int off = kw - g.padding[2];
                  const int lo = t.w[kw].lo, hi = t.w[kw].hi;
                  double s = 0.0;
                  if (sw == 1) {
                    for (int ow = lo; ow < hi; ++ow) s += yr[ow] * xr[ow + off];
                  } else {
                    for (int ow = lo; ow < hi; ++ow) s += yr[ow] * xr[ow * sw + off];
                  }
                  ar[kw] += s;
                }
              }
            }
          }
        }
      }
      double* wp = dw.data() + std::size_t(oi) * kv;
      for (std::size_t k = 0; k < kv; ++k) wp[k] += acc[k];
    }
  }
}

}  // namespace kernels
}  // namespace ngan

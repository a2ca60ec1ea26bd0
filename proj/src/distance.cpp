#include "nodulegan/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ngan {

BinaryMask surface_mask(const BinaryMask& m) {
  BinaryMask out = BinaryMask::empty(m.grid);
  const auto& d = m.grid.dims;
  auto bg = [&](int x, int y, int z) { return !d.contains(x, y, z) || !m.at(x, y, z); };
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (!m.at(x, y, z)) continue;
        if (bg(x - 1, y, z) || bg(x + 1, y, z) || bg(x, y - 1, z) || bg(x, y + 1, z) ||
            bg(x, y, z - 1) || bg(x, y, z + 1))
          out.at(x, y, z) = 1;
      }
  return out;
}

std::vector<Index3> surface_voxels(const BinaryMask& m) {
  const BinaryMask s = surface_mask(m);
  std::vector<Index3> pts;
  const auto& d = m.grid.dims;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (s.at(x, y, z)) pts.push_back({x, y, z});
  return pts;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// In-place 1D squared distance transform of f (stride-addressed) with squared
// lattice spacing w.
void edt_1d(double* f, std::size_t stride, int n, double w, std::vector<double>& fv,
            std::vector<int>& v, std::vector<double>& z) {
  for (int q = 0; q < n; ++q) fv[q] = f[q * stride];
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (fv[q] == kInf) continue;
    while (k >= 0) {
      const int p = v[k];
      const double s = ((fv[q] + w * q * q) - (fv[p] + w * double(p) * p)) / (2.0 * w * (q - p));
      if (s <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
    }
  }
  if (k < 0) return;  // no finite entries on this line
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    f[q * stride] = w * dq * dq + fv[v[k]];
  }
}

}  // namespace

std::vector<double> distance_transform_mm(const BinaryMask& features) {
  const auto& d = features.grid.dims;
  const auto& s = features.grid.spacing_mm;
  std::vector<double> f(d.count());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = features.data[i] ? 0.0 : kInf;

  const int longest = std::max({d.nx, d.ny, d.nz});
  const std::size_t sx = 1, sy = d.nx, sz = std::size_t(d.nx) * d.ny;
  // x lines
#pragma omp parallel
  {
    std::vector<double> fv(longest), zz(longest + 1);
    std::vector<int> v(longest);
#pragma omp for schedule(static)
    for (int zi = 0; zi < d.nz; ++zi)
      for (int y = 0; y < d.ny; ++y) edt_1d(&f[zi * sz + y * sy], sx, d.nx, s.x * s.x, fv, v, zz);
#pragma omp for schedule(static)
    for (int zi = 0; zi < d.nz; ++zi)
      for (int x = 0; x < d.nx; ++x) edt_1d(&f[zi * sz + x], sy, d.ny, s.y * s.y, fv, v, zz);
#pragma omp for schedule(static)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) edt_1d(&f[y * sy + x], sz, d.nz, s.z * s.z, fv, v, zz);
  }
  for (double& e : f) e = std::sqrt(e);
  return f;
}

}  // namespace ngan

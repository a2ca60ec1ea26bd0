#pragma once

// Shared test helpers: a scratch directory and brute-force geometry oracles
// that share no code with the library.

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "nodulegan/volume.hpp"

namespace testutil {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nodulegan_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

struct Pt {
  double x, y, z;
};

// 1-voxel centers in mm.
inline std::vector<Pt> foreground_mm(const ngan::BinaryMask& m) {
  std::vector<Pt> pts;
  const auto& d = m.grid.dims;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (m.data[(std::size_t(z) * d.ny + y) * d.nx + x])
          pts.push_back({x * m.grid.spacing_mm.x, y * m.grid.spacing_mm.y, z * m.grid.spacing_mm.z});
  return pts;
}

// Output voxel set iff some input 1-voxel lies within radius (voxel units).
inline ngan::BinaryMask brute_dilate(const ngan::BinaryMask& m, double radius) {
  ngan::BinaryMask out = m;
  const auto& d = m.grid.dims;
  std::vector<ngan::Index3> ones;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (m.at(x, y, z)) ones.push_back({x, y, z});
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        bool hit = false;
        for (const auto& o : ones) {
          const double dx = x - o.x, dy = y - o.y, dz = z - o.z;
          if (std::sqrt(dx * dx + dy * dy + dz * dz) <= radius + 1e-12) {
            hit = true;
            break;
          }
        }
        out.at(x, y, z) = hit;
      }
  return out;
}

// Surface as mask minus its 6-neighbourhood erosion (outside counts as 0).
inline ngan::BinaryMask erosion_difference(const ngan::BinaryMask& m) {
  const auto& d = m.grid.dims;
  auto get = [&](int x, int y, int z) -> int {
    if (x < 0 || y < 0 || z < 0 || x >= d.nx || y >= d.ny || z >= d.nz) return 0;
    return m.at(x, y, z);
  };
  ngan::BinaryMask out = m;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const int eroded = get(x, y, z) && get(x - 1, y, z) && get(x + 1, y, z) && get(x, y - 1, z) &&
                           get(x, y + 1, z) && get(x, y, z - 1) && get(x, y, z + 1);
        out.at(x, y, z) = get(x, y, z) - eroded;
      }
  return out;
}

// Distance from every voxel to the nearest 1-voxel, all pairs.
inline std::vector<double> brute_distance_mm(const ngan::BinaryMask& m) {
  const auto pts = foreground_mm(m);
  const auto& d = m.grid.dims;
  const auto& s = m.grid.spacing_mm;
  std::vector<double> out(d.count(), std::numeric_limits<double>::infinity());
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pts) {
          const double dx = x * s.x - p.x, dy = y * s.y - p.y, dz = z * s.z - p.z;
          best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
        out[(std::size_t(z) * d.ny + y) * d.nx + x] = best;
      }
  return out;
}

}  // namespace testutil

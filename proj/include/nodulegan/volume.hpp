#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nodulegan/rng.hpp"

namespace ngan {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

struct Index3 {
  int x = 0, y = 0, z = 0;
  friend bool operator==(const Index3&, const Index3&) = default;
};

struct Dims3 {
  int nx = 0, ny = 0, nz = 0;

  std::size_t count() const { return std::size_t(nx) * ny * nz; }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  std::size_t index(int x, int y, int z) const { return (std::size_t(z) * ny + y) * nx + x; }
  static Dims3 cube(int n) { return {n, n, n}; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Voxel lattice in physical space. Voxel (i,j,k) has its center at
/// origin + (i*sx, j*sy, k*sz).
struct Grid {
  Dims3 dims;
  Vec3 spacing_mm{1, 1, 1};
  Vec3 origin_mm{0, 0, 0};

  Vec3 to_mm(Vec3 voxel) const {
    return {origin_mm.x + voxel.x * spacing_mm.x, origin_mm.y + voxel.y * spacing_mm.y,
            origin_mm.z + voxel.z * spacing_mm.z};
  }
  Vec3 to_mm(Index3 v) const { return to_mm(Vec3{double(v.x), double(v.y), double(v.z)}); }
  Vec3 to_voxel(Vec3 mm) const {
    return {(mm.x - origin_mm.x) / spacing_mm.x, (mm.y - origin_mm.y) / spacing_mm.y,
            (mm.z - origin_mm.z) / spacing_mm.z};
  }
  /// Physical center of the voxel lattice.
  Vec3 center_mm() const {
    return to_mm(Vec3{(dims.nx - 1) / 2.0, (dims.ny - 1) / 2.0, (dims.nz - 1) / 2.0});
  }
  friend bool operator==(const Grid&, const Grid&) = default;
};

enum class IntensitySpace { hu, normalized };

/// Scalar CT-like volume, x-fastest storage.
struct Volume {
  Grid grid;
  std::vector<float> data;
  IntensitySpace space = IntensitySpace::hu;

  static Volume filled(const Grid& grid, float value, IntensitySpace space = IntensitySpace::hu);
  float& at(int x, int y, int z) { return data[grid.dims.index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[grid.dims.index(x, y, z)]; }
};

struct BinaryMask {
  Grid grid;
  std::vector<std::uint8_t> data;

  static BinaryMask empty(const Grid& grid);
  std::uint8_t& at(int x, int y, int z) { return data[grid.dims.index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return data[grid.dims.index(x, y, z)]; }
  std::size_t count() const;
};

/// Raises GeometryError unless both lattices agree exactly.
void require_same_grid(const Grid& a, const Grid& b, const char* op);

// ---- file format -----------------------------------------------------------
// A volume lives in two files: "<stem>.json" (sidecar) and "<stem>.raw"
// (little-endian scalars, x fastest). `path` may name either file or the stem.

void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);
void save_mask(const BinaryMask& m, const std::filesystem::path& path);
BinaryMask load_mask(const std::filesystem::path& path);

/// Sidecar path for a volume path given in any of the accepted forms.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

// ---- intensity ----------------------------------------------------------------

struct HuWindow {
  double lo = -1000.0;
  double hi = 400.0;
};

/// Affine map of [lo, hi] onto [-1, 1], clamped outside.
Volume normalize_hu(const Volume& v, HuWindow window = {});
/// Inverse affine map back to HU.
Volume denormalize_hu(const Volume& v, HuWindow window = {});

// ---- sampling -----------------------------------------------------------------

/// Trilinear sample at continuous voxel coordinates. Points outside the
/// lattice take `fill` when fill is set, otherwise the nearest edge value.
double sample_trilinear(const Volume& v, Vec3 voxel, std::optional<double> fill);

/// Cubic region of edge size_mm centered at center_mm, sampled at the source
/// spacing. Samples outside the source take `fill`.
Volume crop_voi(const Volume& v, Vec3 center_mm, double size_mm, double fill);
/// Same lattice as crop_voi would produce, without sampling.
Grid crop_grid(const Grid& source, Vec3 center_mm, double size_mm);

/// Trilinear resampling onto target dims; physical extent is preserved and
/// samples beyond the outermost voxel centers replicate the edge.
Volume resample_trilinear(const Volume& v, Dims3 target);

// ---- masks ----------------------------------------------------------------------

/// Voxels p with |p - center| <= diameter/2, in voxel units.
BinaryMask sphere_mask(const Grid& grid, Vec3 center_vox, double diameter_vox);
inline BinaryMask sphere_mask(Dims3 dims, Vec3 center_vox, double diameter_vox) {
  return sphere_mask(Grid{dims}, center_vox, diameter_vox);
}

/// Euclidean dilation by radius_vox (voxel units).
BinaryMask dilate(const BinaryMask& m, double radius_vox);

/// v where mask is 0, fill where mask is 1.
Volume erase(const Volume& v, const BinaryMask& m, double fill);

/// Voxelwise union of reader masks sharing one lattice.
BinaryMask merge_reader_masks(const std::vector<BinaryMask>& masks);

// ---- VOI training pairs -------------------------------------------------------

struct VoiOptions {
  int voi_edge = 64;
  /// Erasure sphere diameter in VOI voxels; 0 means voi_edge / 2.
  double sphere_diameter = 0;
  double dilation_radius = 4;
  double fill = -1.0;
  double min_nodule_mm = 5.0;
  HuWindow window;

  double diameter() const { return sphere_diameter > 0 ? sphere_diameter : voi_edge / 2.0; }
};

struct VoiMeta {
  std::string source_id;
  Vec3 center_mm;
  double crop_size_mm = 0;
  double scale_factor = 0;
};

struct VoiPair {
  Volume y;       // original VOI, normalized
  Volume x;       // y with the erasure sphere filled
  BinaryMask m;   // erasure sphere
  BinaryMask n;   // dilated sphere
  VoiMeta meta;
};

struct VoiOutcome {
  std::optional<VoiPair> pair;
  std::string skipped_reason;  // set when pair is empty
};

/// Largest physical bounding-box edge of the mask, in mm.
double max_dimension_mm(const BinaryMask& m);
/// Physical center of the mask's bounding box.
Vec3 bbox_center_mm(const BinaryMask& m);

/// Builds one erased-VOI training pair around the nodule. The crop edge is
/// scale times the nodule's largest dimension.
VoiOutcome make_voi_pair(const Volume& source_hu, const BinaryMask& nodule_mask, double scale,
                         const VoiOptions& options, const std::string& source_id = "");

/// Checks the VoiPair invariants; returns an empty string when they hold.
std::string validate_voi_pair(const VoiPair& p, double fill);

/// Independent uniform scales in [lo, hi].
std::vector<double> sample_scales(RngStream& rng, int count, double lo = 2.0, double hi = 2.5);

// ---- dataset manifest ---------------------------------------------------------

/// Writes every pair under dir plus dir/manifest.json listing
/// {y_path, x_path, m_path, n_path, meta}. Paths are relative to dir.
void save_voi_dataset(const std::vector<VoiPair>& pairs, const std::filesystem::path& dir);
std::vector<VoiPair> load_voi_dataset(const std::filesystem::path& manifest);

}  // namespace ngan

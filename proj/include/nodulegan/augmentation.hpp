#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nodulegan/cgan.hpp"
#include "nodulegan/phantom.hpp"
#include "nodulegan/volume.hpp"

namespace ngan {

struct InjectionSpec {
  int n_sites = 30;
  Interval boundary_distance_mm{8, 20};
  Interval voi_size_mm{32, 80};
  std::uint64_t seed = 1;
  std::string checkpoint;
  int max_attempts_per_site = 200;
};

void validate(const InjectionSpec& spec);

struct Site {
  Vec3 center_mm;
  double size_mm = 0;
};

/// Voxel box [lo, lo + dims) on the host lattice.
struct VoxelBox {
  Index3 lo;
  Dims3 dims;

  Index3 hi() const { return {lo.x + dims.nx, lo.y + dims.ny, lo.z + dims.nz}; }
  bool intersects(const VoxelBox& o) const;
  bool contains(int x, int y, int z) const;
};

/// Lattice box of a site, centered on the voxel nearest center_mm, with
/// round(size / spacing) voxels per axis. Not clipped.
VoxelBox site_box(const Grid& grid, const Site& site);
VoxelBox clip(const VoxelBox& b, const Dims3& dims);

struct SiteSampling {
  std::vector<Site> sites;
  std::string warning;  // set when fewer than n_sites could be placed
};

/// Exact Euclidean distance (mm) from each voxel center to the nearest lung
/// surface voxel.
std::vector<double> boundary_distance_mm(const BinaryMask& lung);

/// Rejection sampling over lung voxels whose boundary distance lies in the
/// spec window; boxes of accepted sites are pairwise disjoint.
SiteSampling sample_sites(const BinaryMask& lung, const InjectionSpec& spec, RngStream& rng);

struct InjectionRecord {
  Vec3 center_mm;
  double voi_size_mm = 0;
  VoxelBox bbox;  // clipped to the host
  std::size_t pasted_voxels = 0;
  std::vector<std::string> outputs;
};

struct Injection {
  Volume volume;
  InjectionRecord record;
};

/// Crop, normalize, resample to the generator's VOI, erase the central
/// sphere, synthesize, composite, and paste the sphere support back at native
/// resolution. Voxels outside the support are copied bit-for-bit.
Injection inject(const Volume& host_hu, const Site& site, const GeneratorNet& g, RngStream& rng,
                 const VoiOptions& voi = {});

struct AugmentResult {
  Volume volume;
  std::vector<InjectionRecord> records;
  std::string warning;
};

/// sample_sites followed by sequential injection.
AugmentResult augment_volume(const Volume& host_hu, const BinaryMask& lung, const InjectionSpec& spec,
                             const GeneratorNet& g, const VoiOptions& voi = {});

struct Slice {
  int z = 0;
  Volume image;      // nz = 1
  BinaryMask label;  // nz = 1
};

/// Union of the z-ranges of the records' boxes, ascending.
std::vector<int> record_slices(const std::vector<InjectionRecord>& records);
std::vector<Slice> collect_slices(const Volume& v, const std::vector<InjectionRecord>& records,
                                  const BinaryMask& lung);
Slice axial_slice(const Volume& v, const BinaryMask& lung, int z);

/// Writes each slice as "<stem>_zNNN_img" / "_mask" plus dir/<stem>_slices.json.
/// Returns the manifest path.
std::filesystem::path export_slices(const Volume& v, const std::vector<InjectionRecord>& records,
                                    const BinaryMask& lung, const std::filesystem::path& dir,
                                    const std::string& stem);

std::string records_json(const std::vector<InjectionRecord>& records);

}  // namespace ngan

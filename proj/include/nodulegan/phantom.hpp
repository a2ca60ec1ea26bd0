#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nodulegan/volume.hpp"

namespace ngan {

enum class NodulePlacement { interior, boundary };

struct Interval {
  double lo = 0;
  double hi = 0;
};

/// Parameters of a synthetic chest CT. Default HU values are test fixtures.
struct PhantomSpec {
  Dims3 dims{96, 96, 40};
  Vec3 spacing_mm{2.0, 2.0, 2.5};
  double air_hu = -1000;
  double body_hu = 40;
  double lung_hu = -850;
  double vessel_hu = 30;
  double nodule_hu = 20;
  double noise_sigma_hu = 20;
  /// Relative per-seed perturbation of lung semi-axes and centers.
  double lung_jitter = 0.1;
  int n_vessels = 12;
  Interval vessel_radius_mm{1.0, 2.5};
  int n_nodules = 2;
  NodulePlacement placement = NodulePlacement::interior;
  Interval nodule_diameter_mm{16, 24};
  /// Center-to-boundary distance window for boundary nodules.
  Interval boundary_distance_mm{8, 20};
  /// Minimum clearance of interior nodules from the lung boundary.
  double interior_margin_mm = 5;
  int max_retries = 500;
  std::uint64_t seed = 1;
};

/// Throws ConfigError naming the violated constraint.
void validate(const PhantomSpec& spec);

struct Sphere {
  Vec3 center_mm;
  double radius_mm = 0;
};

struct Ellipsoid {
  Vec3 center_mm;
  Vec3 semi_axes_mm;
  bool contains(Vec3 p) const;
};

struct NoduleShape {
  Vec3 center_mm;
  /// Every lobe lies inside the sphere of this radius around center_mm.
  double envelope_radius_mm = 0;
  std::vector<Sphere> lobes;
  /// Distance from the center voxel to the lung surface when placed.
  double boundary_distance_mm = 0;
  bool contains(Vec3 p) const;
};

struct VesselShape {
  Vec3 a_mm, b_mm;
  double radius_mm = 0;
  bool contains(Vec3 p) const;
};

struct Phantom {
  std::string id;
  Volume ct;  // HU
  BinaryMask lung;
  std::vector<BinaryMask> nodules;
  std::vector<NoduleShape> nodule_shapes;
  std::vector<VesselShape> vessels;
  Ellipsoid left_lung, right_lung;
  double body_semi_x_mm = 0, body_semi_y_mm = 0;
};

/// Deterministic synthetic CT: two ellipsoidal lungs in an elliptical body,
/// cylindrical vessels inside the lungs and lobulated nodules placed per the
/// spec. Masks are exact by construction; nodules are always inside the lung.
/// Throws PlacementError when nodules cannot be placed within max_retries.
Phantom generate_phantom(const PhantomSpec& spec);

/// Content identity of a spec, used to keep train and evaluation sets apart.
std::string phantom_id(const PhantomSpec& spec);

std::string to_string(NodulePlacement p);
NodulePlacement placement_from_string(const std::string& s);

/// Writes ct / lung / nodule files under dir with the given stem and returns
/// the manifest entry (JSON text) describing them.
std::string write_phantom(const Phantom& p, const std::filesystem::path& dir, const std::string& stem);

struct PhantomDatasetOptions {
  int n_pairs = 200;
  /// Crops per nodule, each with an independent scale in [2, 2.5].
  int scales_per_nodule = 3;
  /// Phantom seeds are first_seed, first_seed + 1, ...; placement alternates
  /// between interior and boundary unless mixed_placement is off.
  std::uint64_t first_seed = 1;
  bool mixed_placement = true;
  PhantomSpec base;
  VoiOptions voi;
};

/// Generates phantoms until n_pairs VOI pairs exist. Source ids are the
/// phantom ids, so disjoint seed ranges give disjoint sets.
std::vector<VoiPair> phantom_voi_pairs(const PhantomDatasetOptions& options);

}  // namespace ngan

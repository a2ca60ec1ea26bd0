#include "nodulegan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "nodulegan/distance.hpp"
#include "nodulegan/error.hpp"
#include "nodulegan/rng.hpp"

namespace ngan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double sq(double v) { return v * v; }

double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 random_direction(RngStream& rng) {
  for (;;) {
    Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double n = v.norm();
    if (n > 1e-3 && n <= 1.0) return v * (1.0 / n);
  }
}

json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

json spec_json(const PhantomSpec& s) {
  return {
      {"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
      {"spacing_mm", vec_json(s.spacing_mm)},
      {"air_hu", s.air_hu},
      {"body_hu", s.body_hu},
      {"lung_hu", s.lung_hu},
      {"vessel_hu", s.vessel_hu},
      {"nodule_hu", s.nodule_hu},
      {"noise_sigma_hu", s.noise_sigma_hu},
      {"lung_jitter", s.lung_jitter},
      {"n_vessels", s.n_vessels},
      {"vessel_radius_mm", {s.vessel_radius_mm.lo, s.vessel_radius_mm.hi}},
      {"n_nodules", s.n_nodules},
      {"placement", to_string(s.placement)},
      {"nodule_diameter_mm", {s.nodule_diameter_mm.lo, s.nodule_diameter_mm.hi}},
      {"boundary_distance_mm", {s.boundary_distance_mm.lo, s.boundary_distance_mm.hi}},
      {"interior_margin_mm", s.interior_margin_mm},
      {"max_retries", s.max_retries},
      {"seed", s.seed},
  };
}

// Radius window for boundary nodules: the radius equals the center distance.
Interval boundary_radius_window(const PhantomSpec& s) {
  return {std::max(s.boundary_distance_mm.lo, s.nodule_diameter_mm.lo / 2),
          std::min(s.boundary_distance_mm.hi, s.nodule_diameter_mm.hi / 2)};
}

}  // namespace

bool Ellipsoid::contains(Vec3 p) const {
  const Vec3 d = p - center_mm;
  return sq(d.x / semi_axes_mm.x) + sq(d.y / semi_axes_mm.y) + sq(d.z / semi_axes_mm.z) <= 1.0;
}

bool NoduleShape::contains(Vec3 p) const {
  for (const auto& l : lobes)
    if ((p - l.center_mm).norm() <= l.radius_mm + 1e-9) return true;
  return false;
}

bool VesselShape::contains(Vec3 p) const {
  const Vec3 ab = b_mm - a_mm;
  const double len2 = dot(ab, ab);
  double t = len2 > 0 ? dot(p - a_mm, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a_mm + ab * t)).norm() <= radius_mm;
}

std::string to_string(NodulePlacement p) {
  return p == NodulePlacement::interior ? "interior" : "boundary";
}

NodulePlacement placement_from_string(const std::string& s) {
  if (s == "interior") return NodulePlacement::interior;
  if (s == "boundary") return NodulePlacement::boundary;
  throw ConfigError("placement must be interior or boundary, got '" + s + "'");
}

void validate(const PhantomSpec& s) {
  if (s.dims.nx < 16 || s.dims.ny < 16 || s.dims.nz < 8)
    throw ConfigError("phantom dims must be at least 16x16x8");
  if (s.spacing_mm.x <= 0 || s.spacing_mm.y <= 0 || s.spacing_mm.z <= 0)
    throw ConfigError("phantom spacing must be positive");
  if (!(s.lung_hu < s.nodule_hu && s.nodule_hu <= s.body_hu))
    throw ConfigError("HU ordering lung_hu < nodule_hu <= body_hu violated");
  if (s.noise_sigma_hu < 0) throw ConfigError("noise_sigma_hu must be >= 0");
  if (!(s.lung_jitter >= 0 && s.lung_jitter <= 0.1)) throw ConfigError("lung_jitter must lie in [0, 0.1]");
  if (s.n_vessels < 0 || s.n_nodules < 0) throw ConfigError("object counts must be >= 0");
  if (s.vessel_radius_mm.lo <= 0 || s.vessel_radius_mm.hi < s.vessel_radius_mm.lo)
    throw ConfigError("vessel radius range invalid");
  if (s.nodule_diameter_mm.lo <= 0 || s.nodule_diameter_mm.hi < s.nodule_diameter_mm.lo)
    throw ConfigError("nodule diameter range invalid");
  if (s.max_retries < 1) throw ConfigError("max_retries must be >= 1");
  if (s.placement == NodulePlacement::boundary) {
    if (s.boundary_distance_mm.lo < 0 || s.boundary_distance_mm.hi <= s.boundary_distance_mm.lo)
      throw ConfigError("boundary distance window invalid");
    const Interval w = boundary_radius_window(s);
    if (w.hi < w.lo)
      throw ConfigError("boundary placement needs the nodule diameter range to overlap twice the boundary distance window");
  }
}

std::string phantom_id(const PhantomSpec& spec) {
  const std::string text = spec_json(spec).dump();
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (unsigned char c : text) h = hash64(h, c);
  char buf[32];
  std::snprintf(buf, sizeof buf, "ph-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  Phantom ph;
  ph.id = phantom_id(spec);
  const Grid grid{spec.dims, spec.spacing_mm, {0, 0, 0}};
  const auto& d = grid.dims;
  const Vec3 c = grid.center_mm();
  const Vec3 fov{d.nx * spec.spacing_mm.x, d.ny * spec.spacing_mm.y, d.nz * spec.spacing_mm.z};

  ph.body_semi_x_mm = 0.46 * fov.x;
  ph.body_semi_y_mm = 0.40 * fov.y;
  RngStream jrng = RngStream(spec.seed).fork(4);
  auto lung = [&](double side) {
    const double j = spec.lung_jitter;
    const Vec3 axes{0.17 * fov.x * jrng.uniform(1 - j, 1 + j), 0.29 * fov.y * jrng.uniform(1 - j, 1 + j),
                    0.45 * fov.z * jrng.uniform(1 - j, 1 + j)};
    const Vec3 shift{0.2 * j * fov.x * jrng.uniform(-1, 1), 0.2 * j * fov.y * jrng.uniform(-1, 1), 0};
    return Ellipsoid{c + Vec3{side * 0.22 * fov.x, -0.02 * fov.y, 0} + shift, axes};
  };
  ph.left_lung = lung(-1);
  ph.right_lung = lung(1);

  ph.ct = Volume::filled(grid, float(spec.air_hu));
  ph.lung = BinaryMask::empty(grid);
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const Vec3 p = grid.to_mm(Index3{x, y, z});
        if (sq((p.x - c.x) / ph.body_semi_x_mm) + sq((p.y - c.y) / ph.body_semi_y_mm) <= 1.0)
          ph.ct.at(x, y, z) = float(spec.body_hu);
        if (ph.left_lung.contains(p) || ph.right_lung.contains(p)) {
          ph.lung.at(x, y, z) = 1;
          ph.ct.at(x, y, z) = float(spec.lung_hu);
        }
      }
  if (ph.lung.count() == 0) throw PlacementError("phantom lattice contains no lung voxels");

  std::vector<Index3> lung_voxels;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (ph.lung.at(x, y, z)) lung_voxels.push_back({x, y, z});

  const RngStream root(spec.seed);

  RngStream vrng = root.fork(1);
  for (int i = 0; i < spec.n_vessels; ++i) {
    const Vec3 a = grid.to_mm(lung_voxels[vrng.uniform_int(0, int(lung_voxels.size()) - 1)]);
    const Vec3 u = random_direction(vrng);
    const double len = vrng.uniform(20, 60);
    const double r = vrng.uniform(spec.vessel_radius_mm.lo, spec.vessel_radius_mm.hi);
    ph.vessels.push_back({a, a + u * len, r});
  }
  for (const auto& v : ph.vessels)
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x)
          if (ph.lung.at(x, y, z) && v.contains(grid.to_mm(Index3{x, y, z})))
            ph.ct.at(x, y, z) = float(spec.vessel_hu);

  const std::vector<Index3> surface = surface_voxels(ph.lung);
  const std::vector<double> dist = distance_transform_mm(surface_mask(ph.lung));
  auto nearest_surface = [&](Vec3 p) {
    Vec3 best = p;
    double bd = 1e300;
    for (const auto& s : surface) {
      const Vec3 q = grid.to_mm(s);
      const double e = (q - p).norm();
      if (e < bd) bd = e, best = q;
    }
    return best;
  };

  RngStream nrng = root.fork(2);
  const Interval bw = boundary_radius_window(spec);
  for (int i = 0; i < spec.n_nodules; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      const Index3 cv = lung_voxels[nrng.uniform_int(0, int(lung_voxels.size()) - 1)];
      const Vec3 cmm = grid.to_mm(cv);
      const double dc = dist[d.index(cv.x, cv.y, cv.z)];
      double radius;
      if (spec.placement == NodulePlacement::interior) {
        radius = nrng.uniform(spec.nodule_diameter_mm.lo, spec.nodule_diameter_mm.hi) / 2;
        if (!(dc > radius + spec.interior_margin_mm)) continue;
      } else {
        if (!(dc > spec.boundary_distance_mm.lo && dc < spec.boundary_distance_mm.hi)) continue;
        if (dc < bw.lo || dc > bw.hi) continue;
        radius = dc;
      }
      bool clash = false;
      for (const auto& o : ph.nodule_shapes)
        if ((o.center_mm - cmm).norm() <= o.envelope_radius_mm + radius + 2.0) clash = true;
      if (clash) continue;

      NoduleShape shape;
      shape.center_mm = cmm;
      shape.envelope_radius_mm = radius;
      shape.boundary_distance_mm = dc;
      const int lobes = nrng.uniform_int(1, 3);
      if (lobes == 1) {
        shape.lobes.push_back({cmm, radius});
      } else {
        shape.lobes.push_back({cmm, 0.8 * radius});
        for (int k = 1; k < lobes; ++k) {
          Vec3 u = random_direction(nrng);
          if (k == 1 && spec.placement == NodulePlacement::boundary) {
            const Vec3 toward = nearest_surface(cmm) - cmm;
            u = toward * (1.0 / toward.norm());
          }
          const double r = nrng.uniform(0.35, 0.5) * radius;
          shape.lobes.push_back({cmm + u * (radius - r), r});
        }
      }
      ph.nodule_shapes.push_back(shape);
      placed = true;
    }
    if (!placed) {
      if (spec.placement == NodulePlacement::interior)
        throw PlacementError("no lung site keeps nodule " + std::to_string(i) + " at radius + " +
                             std::to_string(spec.interior_margin_mm) +
                             " mm from the lung boundary after " + std::to_string(spec.max_retries) +
                             " retries");
      throw PlacementError("no lung site with boundary distance in (" +
                           std::to_string(spec.boundary_distance_mm.lo) + ", " +
                           std::to_string(spec.boundary_distance_mm.hi) + ") mm for nodule " +
                           std::to_string(i) + " after " + std::to_string(spec.max_retries) + " retries");
    }
  }

  for (const auto& s : ph.nodule_shapes) {
    BinaryMask m = BinaryMask::empty(grid);
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x)
          if (ph.lung.at(x, y, z) && s.contains(grid.to_mm(Index3{x, y, z}))) {
            m.at(x, y, z) = 1;
            ph.ct.at(x, y, z) = float(spec.nodule_hu);
          }
    ph.nodules.push_back(std::move(m));
  }

  if (spec.noise_sigma_hu > 0) {
    RngStream noise = root.fork(3);
    for (float& v : ph.ct.data) v = float(v + spec.noise_sigma_hu * noise.normal());
  }
  return ph;
}

std::string write_phantom(const Phantom& p, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  save_volume(p.ct, dir / (stem + "_ct"));
  save_mask(p.lung, dir / (stem + "_lung"));
  json nodules = json::array();
  for (std::size_t i = 0; i < p.nodules.size(); ++i) {
    const std::string name = stem + "_nodule" + std::to_string(i);
    save_mask(p.nodules[i], dir / name);
    const auto& s = p.nodule_shapes[i];
    json lobes = json::array();
    for (const auto& l : s.lobes) lobes.push_back({{"center_mm", vec_json(l.center_mm)}, {"radius_mm", l.radius_mm}});
    nodules.push_back({{"mask", name + ".json"},
                       {"center_mm", vec_json(s.center_mm)},
                       {"diameter_mm", 2 * s.envelope_radius_mm},
                       {"boundary_distance_mm", s.boundary_distance_mm},
                       {"lobes", lobes}});
  }
  const json entry = {{"id", p.id}, {"ct", stem + "_ct.json"}, {"lung", stem + "_lung.json"}, {"nodules", nodules}};
  return entry.dump(2);
}

std::vector<VoiPair> phantom_voi_pairs(const PhantomDatasetOptions& o) {
  if (o.n_pairs < 1) throw ConfigError("n_pairs must be >= 1");
  if (o.scales_per_nodule < 1) throw ConfigError("scales_per_nodule must be >= 1");
  std::vector<VoiPair> pairs;
  for (std::uint64_t k = 0; int(pairs.size()) < o.n_pairs; ++k) {
    if (k > std::uint64_t(o.n_pairs) * 10) throw PlacementError("phantom dataset yields too few VOI pairs");
    PhantomSpec s = o.base;
    s.seed = o.first_seed + k;
    if (o.mixed_placement) s.placement = k % 2 ? NodulePlacement::boundary : NodulePlacement::interior;
    const Phantom ph = generate_phantom(s);
    RngStream rng = RngStream(s.seed).fork(0x5ca1e);
    for (std::size_t i = 0; i < ph.nodules.size() && int(pairs.size()) < o.n_pairs; ++i) {
      for (double scale : sample_scales(rng, o.scales_per_nodule)) {
        if (int(pairs.size()) >= o.n_pairs) break;
        VoiOutcome r = make_voi_pair(ph.ct, ph.nodules[i], scale, o.voi, ph.id);
        if (r.pair) pairs.push_back(std::move(*r.pair));
      }
    }
  }
  return pairs;
}

}  // namespace ngan

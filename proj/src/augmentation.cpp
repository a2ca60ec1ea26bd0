#include "nodulegan/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "nodulegan/distance.hpp"
#include "nodulegan/error.hpp"

namespace ngan {

using nlohmann::json;
namespace fs = std::filesystem;

void validate(const InjectionSpec& s) {
  if (s.n_sites < 1) throw ConfigError("injection n_sites must be >= 1");
  auto window = [](const Interval& i, const char* name) {
    if (!(i.lo > 0 && i.lo < i.hi))
      throw ConfigError(std::string(name) + " must satisfy 0 < lo < hi, got (" + std::to_string(i.lo) + ", " +
                        std::to_string(i.hi) + ")");
  };
  window(s.boundary_distance_mm, "boundary_distance_mm");
  window(s.voi_size_mm, "voi_size_mm");
  if (s.max_attempts_per_site < 1) throw ConfigError("max_attempts_per_site must be >= 1");
}

bool VoxelBox::intersects(const VoxelBox& o) const {
  const Index3 a = hi(), b = o.hi();
  return lo.x < b.x && o.lo.x < a.x && lo.y < b.y && o.lo.y < a.y && lo.z < b.z && o.lo.z < a.z;
}

bool VoxelBox::contains(int x, int y, int z) const {
  const Index3 h = hi();
  return x >= lo.x && y >= lo.y && z >= lo.z && x < h.x && y < h.y && z < h.z;
}

VoxelBox site_box(const Grid& grid, const Site& site) {
  if (!(site.size_mm > 0)) throw GeometryError("site size must be positive");
  const Vec3 c = grid.to_voxel(site.center_mm);
  auto axis = [&](double cv, double spacing, int& lo, int& n) {
    n = std::max(1, int(std::lround(site.size_mm / spacing)));
    lo = int(std::lround(cv)) - n / 2;
  };
  VoxelBox b;
  axis(c.x, grid.spacing_mm.x, b.lo.x, b.dims.nx);
  axis(c.y, grid.spacing_mm.y, b.lo.y, b.dims.ny);
  axis(c.z, grid.spacing_mm.z, b.lo.z, b.dims.nz);
  return b;
}

VoxelBox clip(const VoxelBox& b, const Dims3& d) {
  const Index3 h = b.hi();
  VoxelBox r;
  r.lo = {std::max(0, b.lo.x), std::max(0, b.lo.y), std::max(0, b.lo.z)};
  r.dims = {std::max(0, std::min(d.nx, h.x) - r.lo.x), std::max(0, std::min(d.ny, h.y) - r.lo.y),
            std::max(0, std::min(d.nz, h.z) - r.lo.z)};
  return r;
}

std::vector<double> boundary_distance_mm(const BinaryMask& lung) {
  return distance_transform_mm(surface_mask(lung));
}

SiteSampling sample_sites(const BinaryMask& lung, const InjectionSpec& spec, RngStream& rng) {
  validate(spec);
  if (lung.count() == 0) throw DataError("sample_sites: lung mask is empty");
  const std::vector<double> dist = boundary_distance_mm(lung);
  const auto& d = lung.grid.dims;
  std::vector<Index3> candidates;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        if (lung.data[i] && dist[i] >= spec.boundary_distance_mm.lo && dist[i] <= spec.boundary_distance_mm.hi)
          candidates.push_back({x, y, z});
      }
  SiteSampling out;
  if (candidates.empty()) {
    out.warning = "no lung voxel lies within the boundary distance window";
    return out;
  }
  std::vector<VoxelBox> boxes;
  const long budget = long(spec.n_sites) * spec.max_attempts_per_site;
  for (long attempt = 0; attempt < budget && int(out.sites.size()) < spec.n_sites; ++attempt) {
    const Index3 v = candidates[std::size_t(rng.uniform_int(0, int(candidates.size()) - 1))];
    const Site s{lung.grid.to_mm(v), rng.uniform(spec.voi_size_mm.lo, spec.voi_size_mm.hi)};
    const VoxelBox b = clip(site_box(lung.grid, s), d);
    if (std::any_of(boxes.begin(), boxes.end(), [&](const VoxelBox& o) { return o.intersects(b); })) continue;
    boxes.push_back(b);
    out.sites.push_back(s);
  }
  if (int(out.sites.size()) < spec.n_sites)
    out.warning = "placed " + std::to_string(out.sites.size()) + " of " + std::to_string(spec.n_sites) +
                  " sites after " + std::to_string(budget) + " attempts";
  return out;
}

Injection inject(const Volume& host, const Site& site, const GeneratorNet& g, RngStream& rng, const VoiOptions& voi) {
  if (host.space != IntensitySpace::hu) throw DataError("inject: host volume must be in HU");
  const auto& hd = host.grid.dims;
  const Vec3 cv = host.grid.to_voxel(site.center_mm);
  if (!hd.contains(int(std::lround(cv.x)), int(std::lround(cv.y)), int(std::lround(cv.z))))
    throw GeometryError("injection site center lies outside the volume");

  const VoxelBox box = site_box(host.grid, site);
  Volume crop = Volume::filled(Grid{box.dims, host.grid.spacing_mm, host.grid.to_mm(box.lo)}, float(voi.window.lo));
  for (int z = 0; z < box.dims.nz; ++z)
    for (int y = 0; y < box.dims.ny; ++y)
      for (int x = 0; x < box.dims.nx; ++x) {
        const int hx = box.lo.x + x, hy = box.lo.y + y, hz = box.lo.z + z;
        if (hd.contains(hx, hy, hz)) crop.at(x, y, z) = host.at(hx, hy, hz);
      }

  const int E = g.config().voi_edge;
  const double diameter = voi.sphere_diameter > 0 ? voi.sphere_diameter : E / 2.0;
  const double c = (E - 1) / 2.0;
  const Volume r = resample_trilinear(normalize_hu(crop, voi.window), Dims3::cube(E));
  const BinaryMask m = sphere_mask(r.grid, Vec3{c, c, c}, diameter);
  const Volume x = erase(r, m, voi.fill);
  const Volume comp = composite(x, generate(g, x, rng), m);
  const Volume back = resample_trilinear(denormalize_hu(comp, voi.window), box.dims);

  Injection out{host, {}};
  out.record.center_mm = site.center_mm;
  out.record.voi_size_mm = site.size_mm;
  Index3 lo{hd.nx, hd.ny, hd.nz}, hi{-1, -1, -1};
  const double r2 = diameter * diameter / 4.0;
  const double sx = double(E) / box.dims.nx, sy = double(E) / box.dims.ny, sz = double(E) / box.dims.nz;
  for (int z = 0; z < box.dims.nz; ++z)
    for (int y = 0; y < box.dims.ny; ++y)
      for (int x = 0; x < box.dims.nx; ++x) {
        const int hx = box.lo.x + x, hy = box.lo.y + y, hz = box.lo.z + z;
        if (!hd.contains(hx, hy, hz)) continue;
        const double ux = (x + 0.5) * sx - 0.5 - c, uy = (y + 0.5) * sy - 0.5 - c, uz = (z + 0.5) * sz - 0.5 - c;
        if (ux * ux + uy * uy + uz * uz > r2) continue;
        out.volume.at(hx, hy, hz) = back.at(x, y, z);
        ++out.record.pasted_voxels;
        lo = {std::min(lo.x, hx), std::min(lo.y, hy), std::min(lo.z, hz)};
        hi = {std::max(hi.x, hx), std::max(hi.y, hy), std::max(hi.z, hz)};
      }
  if (out.record.pasted_voxels == 0) throw GeometryError("injection site pastes no voxels");
  out.record.bbox = {lo, {hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1}};
  return out;
}

AugmentResult augment_volume(const Volume& host, const BinaryMask& lung, const InjectionSpec& spec,
                             const GeneratorNet& g, const VoiOptions& voi) {
  require_same_grid(host.grid, lung.grid, "augment_volume");
  RngStream rng(spec.seed);
  RngStream site_rng = rng.fork(1);
  const SiteSampling s = sample_sites(lung, spec, site_rng);
  AugmentResult out{host, {}, s.warning};
  for (std::size_t k = 0; k < s.sites.size(); ++k) {
    RngStream gen_rng = rng.fork(0x100 + k);
    Injection inj = inject(out.volume, s.sites[k], g, gen_rng, voi);
    out.volume = std::move(inj.volume);
    out.records.push_back(inj.record);
  }
  return out;
}

std::vector<int> record_slices(const std::vector<InjectionRecord>& records) {
  std::set<int> zs;
  for (const auto& r : records)
    for (int z = r.bbox.lo.z; z < r.bbox.hi().z; ++z) zs.insert(z);
  return {zs.begin(), zs.end()};
}

Slice axial_slice(const Volume& v, const BinaryMask& lung, int z) {
  require_same_grid(v.grid, lung.grid, "axial_slice");
  const auto& d = v.grid.dims;
  if (z < 0 || z >= d.nz) throw GeometryError("slice index " + std::to_string(z) + " outside the volume");
  const Grid g{{d.nx, d.ny, 1}, v.grid.spacing_mm, v.grid.to_mm(Index3{0, 0, z})};
  Slice s{z, Volume::filled(g, 0.0f, v.space), BinaryMask::empty(g)};
  const std::size_t plane = std::size_t(d.nx) * d.ny, off = plane * std::size_t(z);
  std::copy_n(v.data.begin() + off, plane, s.image.data.begin());
  std::copy_n(lung.data.begin() + off, plane, s.label.data.begin());
  return s;
}

std::vector<Slice> collect_slices(const Volume& v, const std::vector<InjectionRecord>& records,
                                  const BinaryMask& lung) {
  std::vector<Slice> out;
  for (int z : record_slices(records)) out.push_back(axial_slice(v, lung, z));
  return out;
}

fs::path export_slices(const Volume& v, const std::vector<InjectionRecord>& records, const BinaryMask& lung,
                       const fs::path& dir, const std::string& stem) {
  if (records.empty()) throw DataError("export_slices: no injection records");
  fs::create_directories(dir);
  json slices = json::array();
  for (const Slice& s : collect_slices(v, records, lung)) {
    char name[64];
    std::snprintf(name, sizeof name, "_z%03d", s.z);
    const std::string base = stem + name;
    save_volume(s.image, dir / (base + "_img"));
    save_mask(s.label, dir / (base + "_mask"));
    slices.push_back({{"z", s.z}, {"image", base + "_img.json"}, {"mask", base + "_mask.json"}});
  }
  const fs::path manifest = dir / (stem + "_slices.json");
  std::ofstream(manifest) << json{{"source", stem}, {"slices", slices}}.dump(2) << "\n";
  return manifest;
}

std::string records_json(const std::vector<InjectionRecord>& records) {
  json arr = json::array();
  for (const auto& r : records)
    arr.push_back({{"center_mm", {r.center_mm.x, r.center_mm.y, r.center_mm.z}},
                   {"voi_size_mm", r.voi_size_mm},
                   {"bbox_lo", {r.bbox.lo.x, r.bbox.lo.y, r.bbox.lo.z}},
                   {"bbox_dims", {r.bbox.dims.nx, r.bbox.dims.ny, r.bbox.dims.nz}},
                   {"pasted_voxels", r.pasted_voxels},
                   {"outputs", r.outputs}});
  return json{{"records", arr}}.dump(2);
}

}  // namespace ngan

#include "nodulegan/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nodulegan/error.hpp"

namespace ngan {

namespace fs = std::filesystem;
using nlohmann::json;

Volume Volume::filled(const Grid& grid, float value, IntensitySpace space) {
  return Volume{grid, std::vector<float>(grid.dims.count(), value), space};
}

BinaryMask BinaryMask::empty(const Grid& grid) {
  return BinaryMask{grid, std::vector<std::uint8_t>(grid.dims.count(), 0)};
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void require_same_grid(const Grid& a, const Grid& b, const char* op) {
  if (!(a == b)) {
    std::ostringstream os;
    os << op << ": geometry mismatch (" << a.dims.nx << "x" << a.dims.ny << "x" << a.dims.nz
       << " vs " << b.dims.nx << "x" << b.dims.ny << "x" << b.dims.nz << ", or spacing/origin differ)";
    throw GeometryError(os.str());
  }
}

// ---- file format -----------------------------------------------------------

namespace {

std::string_view space_name(IntensitySpace s) { return s == IntensitySpace::hu ? "hu" : "normalized"; }

fs::path stem_of(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".json" || p.extension() == ".raw") p.replace_extension();
  return p;
}

json vec_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

struct Sidecar {
  Grid grid;
  std::string dtype;
  IntensitySpace space = IntensitySpace::hu;
  fs::path raw;
};

void write_sidecar(const fs::path& path, const Grid& g, std::string_view dtype, IntensitySpace space) {
  const fs::path stem = stem_of(path);
  json j = {
      {"dims", {g.dims.nx, g.dims.ny, g.dims.nz}},
      {"spacing_mm", vec_json(g.spacing_mm)},
      {"origin_mm", vec_json(g.origin_mm)},
      {"dtype", dtype},
      {"order", "x-fastest"},
      {"intensity_space", space_name(space)},
      {"raw", stem.filename().string() + ".raw"},
  };
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::ofstream out(fs::path(stem).concat(".json"));
  if (!out) throw IoError("cannot write " + stem.string() + ".json");
  out << j.dump(2) << '\n';
}

Vec3 parse_vec(const json& j, const char* key, const fs::path& file) {
  if (!j.is_array() || j.size() != 3) {
    throw FormatError(file.string() + ": '" + key + "' must be an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Sidecar read_sidecar(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw IoError("cannot open sidecar " + side.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(side.string() + ": malformed JSON: " + e.what());
  }
  static const std::set<std::string> known{"dims", "spacing_mm", "origin_mm", "dtype",
                                           "order", "intensity_space", "raw"};
  if (!j.is_object()) throw FormatError(side.string() + ": sidecar must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw FormatError(side.string() + ": unknown sidecar key '" + k + "'");
  }
  for (const char* k : {"dims", "spacing_mm", "origin_mm", "dtype"}) {
    if (!j.contains(k)) throw FormatError(side.string() + ": missing key '" + k + "'");
  }
  Sidecar s;
  try {
    const auto& d = j["dims"];
    if (!d.is_array() || d.size() != 3) throw FormatError(side.string() + ": 'dims' must have 3 entries");
    s.grid.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    s.grid.spacing_mm = parse_vec(j["spacing_mm"], "spacing_mm", side);
    s.grid.origin_mm = parse_vec(j["origin_mm"], "origin_mm", side);
    s.dtype = j["dtype"].get<std::string>();
    if (j.contains("order") && j["order"].get<std::string>() != "x-fastest") {
      throw FormatError(side.string() + ": only order \"x-fastest\" is supported");
    }
    if (j.contains("intensity_space")) {
      const auto sp = j["intensity_space"].get<std::string>();
      if (sp == "hu") s.space = IntensitySpace::hu;
      else if (sp == "normalized") s.space = IntensitySpace::normalized;
      else throw FormatError(side.string() + ": unknown intensity_space '" + sp + "'");
    }
    s.raw = j.contains("raw") ? side.parent_path() / j["raw"].get<std::string>()
                              : fs::path(stem_of(side)).concat(".raw");
  } catch (const json::exception& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  const auto& dm = s.grid.dims;
  if (dm.nx <= 0 || dm.ny <= 0 || dm.nz <= 0) throw FormatError(side.string() + ": dims must be positive");
  const auto& sp = s.grid.spacing_mm;
  if (!(sp.x > 0 && sp.y > 0 && sp.z > 0)) throw FormatError(side.string() + ": spacing must be positive");
  if (s.dtype != "f32le" && s.dtype != "u8") {
    throw FormatError(side.string() + ": unsupported dtype '" + s.dtype + "'");
  }
  return s;
}

std::vector<char> read_raw(const Sidecar& s, std::size_t scalar_bytes) {
  std::ifstream in(s.raw, std::ios::binary);
  if (!in) throw IoError("cannot open raw file " + s.raw.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = s.grid.dims.count();
  if (bytes.size() != expected * scalar_bytes) {
    std::ostringstream os;
    os << s.raw.string() << ": sidecar declares " << s.grid.dims.nx << "x" << s.grid.dims.ny << "x"
       << s.grid.dims.nz << " = " << expected << " voxels but the raw file holds "
       << bytes.size() / double(scalar_bytes) << " voxels (" << bytes.size() << " bytes, expected "
       << expected * scalar_bytes << ")";
    throw FormatError(os.str());
  }
  return bytes;
}

void write_raw(const fs::path& path, const char* data, std::size_t bytes) {
  std::ofstream out(fs::path(stem_of(path)).concat(".raw"), std::ios::binary);
  if (!out) throw IoError("cannot write raw file for " + path.string());
  out.write(data, static_cast<std::streamsize>(bytes));
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

fs::path sidecar_path(const fs::path& path) { return fs::path(stem_of(path)).concat(".json"); }

void save_volume(const Volume& v, const fs::path& path) {
  if (v.data.size() != v.grid.dims.count()) {
    throw ShapeError("save_volume: data length does not match dims");
  }
  write_sidecar(path, v.grid, "f32le", v.space);
  std::vector<std::uint32_t> words(v.data.size());
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = to_le(std::bit_cast<std::uint32_t>(v.data[i]));
  write_raw(path, reinterpret_cast<const char*>(words.data()), words.size() * 4);
}

Volume load_volume(const fs::path& path) {
  const Sidecar s = read_sidecar(path);
  Volume v{s.grid, std::vector<float>(s.grid.dims.count()), s.space};
  if (s.dtype == "u8") {
    const auto bytes = read_raw(s, 1);
    for (std::size_t i = 0; i < bytes.size(); ++i) v.data[i] = static_cast<unsigned char>(bytes[i]);
    return v;
  }
  const auto bytes = read_raw(s, 4);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + 4 * i, 4);
    v.data[i] = std::bit_cast<float>(to_le(w));
  }
  return v;
}

void save_mask(const BinaryMask& m, const fs::path& path) {
  if (m.data.size() != m.grid.dims.count()) throw ShapeError("save_mask: data length does not match dims");
  write_sidecar(path, m.grid, "u8", IntensitySpace::hu);
  write_raw(path, reinterpret_cast<const char*>(m.data.data()), m.data.size());
}

BinaryMask load_mask(const fs::path& path) {
  const Sidecar s = read_sidecar(path);
  if (s.dtype != "u8") throw FormatError(sidecar_path(path).string() + ": masks must use dtype u8");
  const auto bytes = read_raw(s, 1);
  BinaryMask m{s.grid, std::vector<std::uint8_t>(bytes.size())};
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<std::uint8_t>(bytes[i]);
    if (b > 1) {
      throw FormatError(s.raw.string() + ": mask voxel " + std::to_string(i) + " has value " +
                        std::to_string(b) + ", expected 0 or 1");
    }
    m.data[i] = b;
  }
  return m;
}

// ---- intensity ----------------------------------------------------------------

Volume normalize_hu(const Volume& v, HuWindow w) {
  if (!(w.lo < w.hi)) throw ConfigError("HU window requires lo < hi");
  Volume out{v.grid, std::vector<float>(v.data.size()), IntensitySpace::normalized};
  const double span = w.hi - w.lo;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const double c = std::clamp(static_cast<double>(v.data[i]), w.lo, w.hi);
    out.data[i] = static_cast<float>(std::clamp(2.0 * (c - w.lo) / span - 1.0, -1.0, 1.0));
  }
  return out;
}

Volume denormalize_hu(const Volume& v, HuWindow w) {
  if (!(w.lo < w.hi)) throw ConfigError("HU window requires lo < hi");
  Volume out{v.grid, std::vector<float>(v.data.size()), IntensitySpace::hu};
  const double span = w.hi - w.lo;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    out.data[i] = static_cast<float>(w.lo + (static_cast<double>(v.data[i]) + 1.0) * 0.5 * span);
  }
  return out;
}

// ---- sampling -----------------------------------------------------------------

namespace {

double snap(double c) {
  const double r = std::round(c);
  return std::abs(c - r) < 1e-6 ? r : c;
}

// Lower lattice index and weight along one axis; c already within [0, n-1].
std::pair<int, double> axis_cell(double c, int n) {
  if (n == 1) return {0, 0.0};
  int i0 = static_cast<int>(std::floor(c));
  i0 = std::clamp(i0, 0, n - 2);
  return {i0, c - i0};
}

}  // namespace

double sample_trilinear(const Volume& v, Vec3 p, std::optional<double> fill) {
  const auto& d = v.grid.dims;
  double c[3] = {snap(p.x), snap(p.y), snap(p.z)};
  const int n[3] = {d.nx, d.ny, d.nz};
  for (int a = 0; a < 3; ++a) {
    if (c[a] < 0 || c[a] > n[a] - 1) {
      if (fill) return *fill;
      c[a] = std::clamp(c[a], 0.0, double(n[a] - 1));
    }
  }
  const auto [x0, tx] = axis_cell(c[0], d.nx);
  const auto [y0, ty] = axis_cell(c[1], d.ny);
  const auto [z0, tz] = axis_cell(c[2], d.nz);
  const int x1 = std::min(x0 + 1, d.nx - 1), y1 = std::min(y0 + 1, d.ny - 1),
            z1 = std::min(z0 + 1, d.nz - 1);
  auto at = [&](int x, int y, int z) { return static_cast<double>(v.at(x, y, z)); };
  const double c00 = at(x0, y0, z0) * (1 - tx) + at(x1, y0, z0) * tx;
  const double c10 = at(x0, y1, z0) * (1 - tx) + at(x1, y1, z0) * tx;
  const double c01 = at(x0, y0, z1) * (1 - tx) + at(x1, y0, z1) * tx;
  const double c11 = at(x0, y1, z1) * (1 - tx) + at(x1, y1, z1) * tx;
  const double c0 = c00 * (1 - ty) + c10 * ty;
  const double c1 = c01 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

Grid crop_grid(const Grid& source, Vec3 center_mm, double size_mm) {
  if (!(size_mm > 0)) throw GeometryError("crop size must be positive, got " + std::to_string(size_mm));
  const auto& s = source.spacing_mm;
  auto count = [size_mm](double spacing) {
    return std::max(1, static_cast<int>(std::lround(size_mm / spacing)));
  };
  Grid g;
  g.dims = {count(s.x), count(s.y), count(s.z)};
  g.spacing_mm = s;
  g.origin_mm = {center_mm.x - (g.dims.nx - 1) / 2.0 * s.x, center_mm.y - (g.dims.ny - 1) / 2.0 * s.y,
                 center_mm.z - (g.dims.nz - 1) / 2.0 * s.z};
  return g;
}

Volume crop_voi(const Volume& v, Vec3 center_mm, double size_mm, double fill) {
  const Grid g = crop_grid(v.grid, center_mm, size_mm);
  Volume out{g, std::vector<float>(g.dims.count()), v.space};
  const int nz = g.dims.nz;
#pragma omp parallel for schedule(static)
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < g.dims.ny; ++y)
      for (int x = 0; x < g.dims.nx; ++x) {
        const Vec3 p = v.grid.to_voxel(g.to_mm(Index3{x, y, z}));
        out.at(x, y, z) = static_cast<float>(sample_trilinear(v, p, fill));
      }
  return out;
}

Volume resample_trilinear(const Volume& v, Dims3 target) {
  if (target.nx <= 0 || target.ny <= 0 || target.nz <= 0) {
    throw GeometryError("resample target dims must be positive");
  }
  const auto& src = v.grid;
  const double rx = double(src.dims.nx) / target.nx, ry = double(src.dims.ny) / target.ny,
               rz = double(src.dims.nz) / target.nz;
  Grid g;
  g.dims = target;
  g.spacing_mm = {src.spacing_mm.x * rx, src.spacing_mm.y * ry, src.spacing_mm.z * rz};
  g.origin_mm = {src.origin_mm.x + src.spacing_mm.x * (0.5 * rx - 0.5),
                 src.origin_mm.y + src.spacing_mm.y * (0.5 * ry - 0.5),
                 src.origin_mm.z + src.spacing_mm.z * (0.5 * rz - 0.5)};
  Volume out{g, std::vector<float>(target.count()), v.space};
  const int nz = target.nz;
#pragma omp parallel for schedule(static)
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < target.ny; ++y)
      for (int x = 0; x < target.nx; ++x) {
        const Vec3 p{(x + 0.5) * rx - 0.5, (y + 0.5) * ry - 0.5, (z + 0.5) * rz - 0.5};
        out.at(x, y, z) = static_cast<float>(sample_trilinear(v, p, std::nullopt));
      }
  return out;
}

// ---- masks ----------------------------------------------------------------------

BinaryMask sphere_mask(const Grid& grid, Vec3 c, double diameter) {
  if (!(diameter > 0)) throw GeometryError("sphere diameter must be positive");
  BinaryMask m = BinaryMask::empty(grid);
  const double r2 = diameter * diameter / 4.0;
  const auto& d = grid.dims;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double dx = x - c.x, dy = y - c.y, dz = z - c.z;
        m.at(x, y, z) = dx * dx + dy * dy + dz * dz <= r2 ? 1 : 0;
      }
  return m;
}

BinaryMask dilate(const BinaryMask& m, double radius) {
  if (radius < 0) throw GeometryError("dilation radius must be non-negative");
  const int r = static_cast<int>(std::floor(radius));
  std::vector<Index3> ball;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy + dz * dz <= radius * radius) ball.push_back({dx, dy, dz});
  // nearest offsets first: most hits terminate early
  std::stable_sort(ball.begin(), ball.end(), [](Index3 a, Index3 b) {
    return a.x * a.x + a.y * a.y + a.z * a.z < b.x * b.x + b.y * b.y + b.z * b.z;
  });
  BinaryMask out = BinaryMask::empty(m.grid);
  const auto& d = m.grid.dims;
  const int nz = d.nz;
#pragma omp parallel for schedule(static)
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        for (const Index3& o : ball) {
          const int sx = x + o.x, sy = y + o.y, sz = z + o.z;
          if (d.contains(sx, sy, sz) && m.at(sx, sy, sz)) {
            out.at(x, y, z) = 1;
            break;
          }
        }
      }
  return out;
}

Volume erase(const Volume& v, const BinaryMask& m, double fill) {
  require_same_grid(v.grid, m.grid, "erase");
  Volume out = v;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (m.data[i]) out.data[i] = static_cast<float>(fill);
  return out;
}

BinaryMask merge_reader_masks(const std::vector<BinaryMask>& masks) {
  if (masks.empty()) throw DataError("merge_reader_masks: no masks given");
  BinaryMask out = masks.front();
  for (std::size_t k = 1; k < masks.size(); ++k) {
    require_same_grid(out.grid, masks[k].grid, "merge_reader_masks");
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] |= masks[k].data[i];
  }
  return out;
}

// ---- VOI training pairs -------------------------------------------------------

namespace {

struct Bbox {
  Index3 lo{INT32_MAX, INT32_MAX, INT32_MAX};
  Index3 hi{-1, -1, -1};
};

Bbox mask_bbox(const BinaryMask& m) {
  Bbox b;
  const auto& d = m.grid.dims;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (m.at(x, y, z)) {
          b.lo = {std::min(b.lo.x, x), std::min(b.lo.y, y), std::min(b.lo.z, z)};
          b.hi = {std::max(b.hi.x, x), std::max(b.hi.y, y), std::max(b.hi.z, z)};
        }
  if (b.hi.x < 0) throw DataError("nodule mask is empty");
  return b;
}

}  // namespace

double max_dimension_mm(const BinaryMask& m) {
  const Bbox b = mask_bbox(m);
  const auto& s = m.grid.spacing_mm;
  return std::max({(b.hi.x - b.lo.x + 1) * s.x, (b.hi.y - b.lo.y + 1) * s.y, (b.hi.z - b.lo.z + 1) * s.z});
}

Vec3 bbox_center_mm(const BinaryMask& m) {
  const Bbox b = mask_bbox(m);
  return m.grid.to_mm(Vec3{(b.lo.x + b.hi.x) / 2.0, (b.lo.y + b.hi.y) / 2.0, (b.lo.z + b.hi.z) / 2.0});
}

VoiOutcome make_voi_pair(const Volume& source, const BinaryMask& nodule, double scale,
                         const VoiOptions& opt, const std::string& source_id) {
  require_same_grid(source.grid, nodule.grid, "make_voi_pair");
  if (nodule.count() == 0) throw DataError("make_voi_pair: nodule mask is empty");
  if (source.space != IntensitySpace::hu) throw DataError("make_voi_pair: source must be in HU");
  const double max_dim = max_dimension_mm(nodule);
  if (max_dim < opt.min_nodule_mm) {
    std::ostringstream os;
    os << "nodule " << (source_id.empty() ? "" : source_id + " ") << "max dimension " << max_dim
       << " mm is below " << opt.min_nodule_mm << " mm";
    return {std::nullopt, os.str()};
  }
  const Vec3 center = bbox_center_mm(nodule);
  const double crop_size = scale * max_dim;
  const Volume crop = crop_voi(source, center, crop_size, opt.window.lo);
  const Volume y = normalize_hu(resample_trilinear(crop, Dims3::cube(opt.voi_edge)), opt.window);

  const double c = (opt.voi_edge - 1) / 2.0;
  BinaryMask m = sphere_mask(y.grid, Vec3{c, c, c}, opt.diameter());
  BinaryMask n = dilate(m, opt.dilation_radius);
  Volume x = erase(y, m, opt.fill);
  return {VoiPair{y, std::move(x), std::move(m), std::move(n), {source_id, center, crop_size, scale}}, {}};
}

std::string validate_voi_pair(const VoiPair& p, double fill) {
  if (!(p.y.grid.dims == p.x.grid.dims) || !(p.y.grid.dims == p.m.grid.dims) ||
      !(p.y.grid.dims == p.n.grid.dims))
    return "y, x, m, n dims differ";
  if (p.m.count() == 0) return "erasure mask is empty";
  for (std::size_t i = 0; i < p.y.data.size(); ++i) {
    if (!(p.y.data[i] >= -1.0f && p.y.data[i] <= 1.0f)) return "y leaves [-1, 1] at voxel " + std::to_string(i);
    if (p.m.data[i] > 1 || p.n.data[i] > 1) return "mask value outside {0,1} at voxel " + std::to_string(i);
    if (p.m.data[i] && !p.n.data[i]) return "m is not contained in n at voxel " + std::to_string(i);
    if (p.m.data[i] ? p.x.data[i] != static_cast<float>(fill) : p.x.data[i] != p.y.data[i])
      return "x differs from the erase(y, m) construction at voxel " + std::to_string(i);
  }
  return {};
}

std::vector<double> sample_scales(RngStream& rng, int count, double lo, double hi) {
  std::vector<double> s(count);
  for (double& v : s) v = rng.uniform(lo, hi);
  return s;
}

// ---- dataset manifest ---------------------------------------------------------

void save_voi_dataset(const std::vector<VoiPair>& pairs, const fs::path& dir) {
  fs::create_directories(dir);
  json list = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "pair_%05zu", i);
    const std::string s = stem;
    const auto& p = pairs[i];
    save_volume(p.y, dir / (s + "_y.json"));
    save_volume(p.x, dir / (s + "_x.json"));
    save_mask(p.m, dir / (s + "_m.json"));
    save_mask(p.n, dir / (s + "_n.json"));
    list.push_back({{"y_path", s + "_y.json"},
                    {"x_path", s + "_x.json"},
                    {"m_path", s + "_m.json"},
                    {"n_path", s + "_n.json"},
                    {"meta",
                     {{"source_id", p.meta.source_id},
                      {"center_mm", vec_json(p.meta.center_mm)},
                      {"crop_size_mm", p.meta.crop_size_mm},
                      {"scale_factor", p.meta.scale_factor}}}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << list.dump(2) << '\n';
}

std::vector<VoiPair> load_voi_dataset(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open dataset manifest " + manifest.string());
  json list;
  try {
    in >> list;
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (!list.is_array()) throw FormatError(manifest.string() + ": manifest must be a JSON list");
  const fs::path dir = manifest.parent_path();
  std::vector<VoiPair> pairs;
  try {
    for (const auto& e : list) {
      VoiPair p;
      p.y = load_volume(dir / e.at("y_path").get<std::string>());
      p.x = load_volume(dir / e.at("x_path").get<std::string>());
      p.m = load_mask(dir / e.at("m_path").get<std::string>());
      p.n = load_mask(dir / e.at("n_path").get<std::string>());
      const auto& meta = e.at("meta");
      p.meta.source_id = meta.value("source_id", "");
      p.meta.center_mm = parse_vec(meta.at("center_mm"), "center_mm", manifest);
      p.meta.crop_size_mm = meta.at("crop_size_mm").get<double>();
      p.meta.scale_factor = meta.at("scale_factor").get<double>();
      pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  return pairs;
}

}  // namespace ngan

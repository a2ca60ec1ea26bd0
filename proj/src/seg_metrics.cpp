#include "nodulegan/seg_metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nodulegan/distance.hpp"
#include "nodulegan/error.hpp"

namespace ngan {

using nlohmann::json;
namespace fs = std::filesystem;

double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a.grid, b.grid, "dice");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i] != 0;
    nb += b.data[i] != 0;
    inter += a.data[i] && b.data[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(inter) / double(na + nb);
}

std::vector<Vec3> surface_points_mm(const BinaryMask& m) {
  std::vector<Vec3> pts;
  for (const auto& v : surface_voxels(m)) pts.push_back(m.grid.to_mm(v));
  return pts;
}

namespace {

struct OneSided {
  double max = 0;
  double sum = 0;
  std::size_t count = 0;
};

// Distances from the surface voxels of `from` to the surface of `to`.
OneSided one_sided(const BinaryMask& from_surface, const BinaryMask& to_surface) {
  const std::vector<double> d = distance_transform_mm(to_surface);
  OneSided r;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!from_surface.data[i]) continue;
    r.max = std::max(r.max, d[i]);
    r.sum += d[i];
    ++r.count;
  }
  return r;
}

}  // namespace

SurfaceDistances surface_distances(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a.grid, b.grid, "surface distance");
  if (a.count() == 0 || b.count() == 0)
    throw UndefinedMetricError("surface distance undefined: " + std::string(a.count() == 0 ? "first" : "second") +
                               " mask is empty");
  const BinaryMask sa = surface_mask(a), sb = surface_mask(b);
  const OneSided ab = one_sided(sa, sb), ba = one_sided(sb, sa);
  return {std::max(ab.max, ba.max), (ab.sum + ba.sum) / double(ab.count + ba.count)};
}

double hausdorff_mm(const BinaryMask& a, const BinaryMask& b) { return surface_distances(a, b).hausdorff_mm; }

double asd_mm(const BinaryMask& a, const BinaryMask& b) { return surface_distances(a, b).asd_mm; }

BinaryMask crop_mask(const BinaryMask& m, Index3 lo, Dims3 dims) {
  const auto& d = m.grid.dims;
  if (lo.x < 0 || lo.y < 0 || lo.z < 0 || lo.x + dims.nx > d.nx || lo.y + dims.ny > d.ny || lo.z + dims.nz > d.nz)
    throw GeometryError("crop_mask: box exceeds the grid");
  Grid g{dims, m.grid.spacing_mm, m.grid.to_mm(lo)};
  BinaryMask out = BinaryMask::empty(g);
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x) out.at(x, y, z) = m.at(lo.x + x, lo.y + y, lo.z + z);
  return out;
}

std::pair<Index3, Dims3> voi_box(const Dims3& grid, Index3 c, int edge) {
  if (edge < 1) throw ConfigError("VOI edge must be >= 1");
  if (!grid.contains(c.x, c.y, c.z)) throw GeometryError("VOI center lies outside the volume");
  auto axis = [&](int center, int n, int& lo, int& len) {
    const int a = std::max(0, center - edge / 2);
    const int b = std::min(n, center - edge / 2 + edge);
    lo = a;
    len = b - a;
  };
  Index3 lo;
  Dims3 d;
  axis(c.x, grid.nx, lo.x, d.nx);
  axis(c.y, grid.ny, lo.y, d.ny);
  axis(c.z, grid.nz, lo.z, d.nz);
  return {lo, d};
}

MetricsReport evaluate_voi(const BinaryMask& pred, const BinaryMask& gt, Index3 center, int edge) {
  require_same_grid(pred.grid, gt.grid, "evaluate_voi");
  const auto [lo, dims] = voi_box(gt.grid.dims, center, edge);
  const BinaryMask p = crop_mask(pred, lo, dims), g = crop_mask(gt, lo, dims);
  if (g.count() == 0)
    throw DataError("evaluate_voi: ground truth is empty inside the VOI at (" + std::to_string(center.x) + "," +
                    std::to_string(center.y) + "," + std::to_string(center.z) + ")");
  MetricsReport r;
  r.voi_center = center;
  r.voi_edge_vox = edge;
  r.dice = dice(p, g);
  const SurfaceDistances s = surface_distances(p, g);
  r.hausdorff_mm = s.hausdorff_mm;
  r.asd_mm = s.asd_mm;
  return r;
}

std::vector<EvalCase> load_case_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case list " + path.string());
  std::vector<EvalCase> out;
  try {
    const json j = json::parse(in);
    for (const auto& c : j.at("cases")) {
      EvalCase e;
      e.id = c.at("id");
      e.pred = path.parent_path() / c.at("pred").get<std::string>();
      e.gt = path.parent_path() / c.at("gt").get<std::string>();
      const auto v = c.at("center_vox").get<std::vector<int>>();
      if (v.size() != 3) throw FormatError("case " + e.id + ": center_vox needs 3 entries");
      e.center = {v[0], v[1], v[2]};
      e.edge_vox = c.value("edge_vox", 64);
      for (const auto& [k, _] : c.items())
        if (k != "id" && k != "pred" && k != "gt" && k != "center_vox" && k != "edge_vox")
          throw FormatError("case list " + path.string() + ": unknown key '" + k + "'");
      out.push_back(e);
    }
  } catch (const json::exception& e) {
    throw FormatError("case list " + path.string() + ": " + e.what());
  }
  return out;
}

BatchReport summarize(std::vector<CaseResult> cases) {
  BatchReport r;
  r.cases = std::move(cases);
  if (r.cases.empty()) return r;
  r.worst.dice = 1;
  for (const auto& c : r.cases) {
    r.mean.dice += c.metrics.dice;
    r.mean.hausdorff_mm += c.metrics.hausdorff_mm;
    r.mean.asd_mm += c.metrics.asd_mm;
    r.worst.dice = std::min(r.worst.dice, c.metrics.dice);
    r.worst.hausdorff_mm = std::max(r.worst.hausdorff_mm, c.metrics.hausdorff_mm);
    r.worst.asd_mm = std::max(r.worst.asd_mm, c.metrics.asd_mm);
  }
  const double n = double(r.cases.size());
  r.mean.dice /= n;
  r.mean.hausdorff_mm /= n;
  r.mean.asd_mm /= n;
  return r;
}

BatchReport evaluate_cases(const std::vector<EvalCase>& cases) {
  std::vector<CaseResult> out;
  for (const auto& c : cases) {
    const BinaryMask pred = load_mask(c.pred), gt = load_mask(c.gt);
    out.push_back({c.id, evaluate_voi(pred, gt, c.center, c.edge_vox)});
  }
  return summarize(std::move(out));
}

namespace {

std::string row(const std::string& id, const MetricsReport& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g\n", id.c_str(), m.dice, m.hausdorff_mm, m.asd_mm);
  return buf;
}

json metrics_json(const MetricsReport& m) {
  return {{"dice", m.dice}, {"hausdorff_mm", m.hausdorff_mm}, {"asd_mm", m.asd_mm}};
}

}  // namespace

std::string report_csv(const BatchReport& r) {
  std::string s = "id,dice,hausdorff_mm,asd_mm\n";
  for (const auto& c : r.cases) s += row(c.id, c.metrics);
  s += row("mean", r.mean);
  s += row("worst", r.worst);
  return s;
}

std::string report_json(const BatchReport& r) {
  json cases = json::array();
  for (const auto& c : r.cases) {
    json j = metrics_json(c.metrics);
    j["id"] = c.id;
    j["center_vox"] = {c.metrics.voi_center.x, c.metrics.voi_center.y, c.metrics.voi_center.z};
    j["edge_vox"] = c.metrics.voi_edge_vox;
    cases.push_back(j);
  }
  return json{{"cases", cases}, {"mean", metrics_json(r.mean)}, {"worst", metrics_json(r.worst)}}.dump(2);
}

}  // namespace ngan

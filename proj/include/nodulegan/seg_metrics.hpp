#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nodulegan/volume.hpp"

namespace ngan {

struct MetricsReport {
  double dice = 0;
  double hausdorff_mm = 0;
  double asd_mm = 0;
  Index3 voi_center;
  int voi_edge_vox = 64;
};

/// 2|a∩b| / (|a|+|b|); 1 when both are empty. Grids must agree.
double dice(const BinaryMask& a, const BinaryMask& b);

/// Physical centers of the surface voxels (6-neighbourhood, outside counts as
/// background).
std::vector<Vec3> surface_points_mm(const BinaryMask& m);

struct SurfaceDistances {
  double hausdorff_mm = 0;
  double asd_mm = 0;
};

/// Both surface distances from one pair of distance transforms. Throws
/// UndefinedMetricError when either mask is empty.
SurfaceDistances surface_distances(const BinaryMask& a, const BinaryMask& b);
/// Exact symmetric Hausdorff distance between the two surfaces.
double hausdorff_mm(const BinaryMask& a, const BinaryMask& b);
/// (Σ_{p∈Sa} d(p,Sb) + Σ_{q∈Sb} d(q,Sa)) / (|Sa| + |Sb|).
double asd_mm(const BinaryMask& a, const BinaryMask& b);

/// Sub-lattice [lo, lo + dims) of m, which must lie inside m's grid.
BinaryMask crop_mask(const BinaryMask& m, Index3 lo, Dims3 dims);

/// Lattice box of edge_vox voxels centered on center, intersected with the
/// grid (clamped, never padded). Returns {lo, dims}.
std::pair<Index3, Dims3> voi_box(const Dims3& grid, Index3 center, int edge_vox);

/// Crops both masks to the nodule-centered VOI and computes the three
/// metrics. Throws DataError when the ground truth is empty inside the VOI.
MetricsReport evaluate_voi(const BinaryMask& pred, const BinaryMask& gt, Index3 center, int edge_vox = 64);

// ---- batch evaluation ---------------------------------------------------------

struct EvalCase {
  std::string id;
  std::filesystem::path pred;
  std::filesystem::path gt;
  Index3 center;
  int edge_vox = 64;
};

/// Case list JSON: {"cases": [{"id", "pred", "gt", "center_vox": [i,j,k], "edge_vox"?}]}.
/// Relative paths resolve against the list's directory.
std::vector<EvalCase> load_case_list(const std::filesystem::path& path);

struct CaseResult {
  std::string id;
  MetricsReport metrics;
};

struct BatchReport {
  std::vector<CaseResult> cases;
  MetricsReport mean;
  MetricsReport worst;  // min dice, max distances
};

BatchReport evaluate_cases(const std::vector<EvalCase>& cases);
BatchReport summarize(std::vector<CaseResult> cases);

/// CSV rows: id,dice,hausdorff_mm,asd_mm per case, then "mean" and "worst".
std::string report_csv(const BatchReport& r);
std::string report_json(const BatchReport& r);

}  // namespace ngan

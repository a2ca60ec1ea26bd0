#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "nodulegan/error.hpp"
#include "nodulegan/seg_metrics.hpp"
#include "test_util.hpp"

using namespace ngan;

namespace {

BinaryMask blobby_mask(const Grid& g, RngStream& rng) {
  // random union of boxes so surfaces have structure, plus salt noise
  BinaryMask m = BinaryMask::empty(g);
  const auto& d = g.dims;
  const int boxes = rng.uniform_int(1, 3);
  for (int b = 0; b < boxes; ++b) {
    const int x0 = rng.uniform_int(0, d.nx - 1), y0 = rng.uniform_int(0, d.ny - 1), z0 = rng.uniform_int(0, d.nz - 1);
    const int x1 = rng.uniform_int(x0, d.nx - 1), y1 = rng.uniform_int(y0, d.ny - 1), z1 = rng.uniform_int(z0, d.nz - 1);
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.at(x, y, z) = 1;
  }
  for (auto& v : m.data)
    if (rng.uniform() < 0.05) v = 1 - v;
  if (m.count() == 0) m.data[0] = 1;
  return m;
}

struct Brute {
  double hd, asd;
};

Brute brute_distances(const BinaryMask& a, const BinaryMask& b) {
  const auto sa = testutil::foreground_mm(testutil::erosion_difference(a));
  const auto sb = testutil::foreground_mm(testutil::erosion_difference(b));
  auto nearest = [](const testutil::Pt& p, const std::vector<testutil::Pt>& set) {
    double best = 1e300;
    for (const auto& q : set)
      best = std::min(best, std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z)));
    return best;
  };
  double hd = 0, sum = 0;
  for (const auto& p : sa) {
    const double d = nearest(p, sb);
    hd = std::max(hd, d);
    sum += d;
  }
  for (const auto& q : sb) {
    const double d = nearest(q, sa);
    hd = std::max(hd, d);
    sum += d;
  }
  return {hd, sum / double(sa.size() + sb.size())};
}

}  // namespace

TEST_CASE("dice") {
  const Grid g{Dims3::cube(9)};
  RngStream rng(1);
  const BinaryMask a = blobby_mask(g, rng);
  CHECK(dice(a, a) == 1.0);
  BinaryMask x = BinaryMask::empty(g), y = BinaryMask::empty(g);
  x.at(1, 1, 1) = 1;
  y.at(5, 5, 5) = 1;
  CHECK(dice(x, y) == 0.0);
  CHECK(dice(BinaryMask::empty(g), BinaryMask::empty(g)) == 1.0);
  CHECK_THROWS_AS(dice(a, BinaryMask::empty(Grid{Dims3::cube(8)})), GeometryError);
}

TEST_CASE("surface points") {
  const Grid g{Dims3::cube(5), {1, 2, 3}};
  BinaryMask one = BinaryMask::empty(g);
  one.at(2, 3, 1) = 1;
  const auto p = surface_points_mm(one);
  REQUIRE(p.size() == 1);
  CHECK(p[0] == Vec3{2, 6, 3});
  BinaryMask cube = BinaryMask::empty(g);
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x) cube.at(x, y, z) = 1;
  CHECK(surface_points_mm(cube).size() == 26);
}

TEST_CASE("analytic surface distances") {
  const Grid g{{8, 3, 3}};
  BinaryMask a = BinaryMask::empty(g), b = BinaryMask::empty(g);
  a.at(1, 1, 1) = 1;
  b.at(4, 1, 1) = 1;
  CHECK(hausdorff_mm(a, b) == 3.0);
  CHECK(hausdorff_mm(a, a) == 0.0);
  CHECK(asd_mm(a, a) == 0.0);

  // parallel plates 2 mm apart
  const Grid pg{{6, 6, 6}, {1, 1, 1}};
  BinaryMask p = BinaryMask::empty(pg), q = BinaryMask::empty(pg);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      p.at(x, y, 1) = 1;
      q.at(x, y, 3) = 1;
    }
  CHECK(asd_mm(p, q) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(hausdorff_mm(p, q) == 2.0);
  CHECK_THROWS_AS(hausdorff_mm(p, BinaryMask::empty(pg)), UndefinedMetricError);
  CHECK_THROWS_AS(asd_mm(BinaryMask::empty(pg), q), UndefinedMetricError);
}

TEST_CASE("metrics agree with all-pairs oracles on random masks") {
  RngStream rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Dims3 d{rng.uniform_int(2, 12), rng.uniform_int(2, 12), rng.uniform_int(1, 12)};
    const Grid g{d, {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 3.0)}};
    const BinaryMask a = blobby_mask(g, rng), b = blobby_mask(g, rng);

    std::size_t inter = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) inter += a.data[i] && b.data[i];
    CHECK(dice(a, b) == 2.0 * double(inter) / double(a.count() + b.count()));
    CHECK(dice(a, b) == dice(b, a));

    const Brute o = brute_distances(a, b);
    const SurfaceDistances s = surface_distances(a, b);
    CHECK(std::abs(s.hausdorff_mm - o.hd) < 1e-9);
    CHECK(std::abs(s.asd_mm - o.asd) < 1e-9);
    CHECK(s.asd_mm <= s.hausdorff_mm + 1e-12);
    const SurfaceDistances r = surface_distances(b, a);
    CHECK(std::abs(r.hausdorff_mm - s.hausdorff_mm) < 1e-12);
    CHECK(std::abs(r.asd_mm - s.asd_mm) < 1e-12);
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("evaluate_voi crops, clamps and diagnoses") {
  const Grid g{Dims3::cube(40)};
  BinaryMask gt = BinaryMask::empty(g), pred = BinaryMask::empty(g);
  for (int z = 15; z < 25; ++z)
    for (int y = 15; y < 25; ++y)
      for (int x = 15; x < 25; ++x) gt.at(x, y, z) = pred.at(x, y, z) = 1;
  // garbage outside the 16-voxel VOI around (20,20,20)
  pred.at(2, 2, 2) = 1;
  pred.at(37, 30, 1) = 1;
  const MetricsReport r = evaluate_voi(pred, gt, {20, 20, 20}, 16);
  CHECK(r.dice == 1.0);
  CHECK(r.hausdorff_mm == 0.0);
  CHECK(r.asd_mm == 0.0);
  CHECK(evaluate_voi(pred, gt, {20, 20, 20}, 64).hausdorff_mm > 0);

  auto [lo, dims] = voi_box(g.dims, {1, 38, 20}, 16);
  CHECK(lo == Index3{0, 30, 12});
  CHECK(dims == Dims3{9, 10, 16});

  CHECK_THROWS_AS(evaluate_voi(pred, gt, {3, 3, 30}, 8), DataError);
  CHECK_THROWS_AS(evaluate_voi(pred, gt, {40, 3, 3}, 8), GeometryError);
}

TEST_CASE("batch evaluation report") {
  testutil::TempDir dir;
  const Grid g{Dims3::cube(12)};
  BinaryMask gt = BinaryMask::empty(g), good = BinaryMask::empty(g), bad = BinaryMask::empty(g);
  for (int z = 3; z < 9; ++z)
    for (int y = 3; y < 9; ++y)
      for (int x = 3; x < 9; ++x) gt.at(x, y, z) = good.at(x, y, z) = 1;
  for (int z = 3; z < 9; ++z)
    for (int y = 3; y < 9; ++y)
      for (int x = 3; x < 7; ++x) bad.at(x, y, z) = 1;
  save_mask(gt, dir / "gt");
  save_mask(good, dir / "good");
  save_mask(bad, dir / "bad");
  nlohmann::json list = {{"cases",
                          {{{"id", "a"}, {"pred", "good.json"}, {"gt", "gt.json"}, {"center_vox", {6, 6, 6}}},
                           {{"id", "b"}, {"pred", "bad.json"}, {"gt", "gt.json"}, {"center_vox", {6, 6, 6}}, {"edge_vox", 12}}}}};
  std::ofstream(dir / "cases.json") << list.dump();
  const auto cases = load_case_list(dir / "cases.json");
  REQUIRE(cases.size() == 2);
  const BatchReport r = evaluate_cases(cases);
  CHECK(r.cases[0].metrics.dice == 1.0);
  CHECK(r.cases[1].metrics.dice < 1.0);
  CHECK(r.worst.dice == r.cases[1].metrics.dice);
  CHECK(r.mean.dice == doctest::Approx((1.0 + r.cases[1].metrics.dice) / 2));
  CHECK(r.worst.hausdorff_mm == r.cases[1].metrics.hausdorff_mm);
  const std::string csv = report_csv(r);
  CHECK(csv.rfind("id,dice,hausdorff_mm,asd_mm\n", 0) == 0);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(csv.find("\nworst,") != std::string::npos);
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["cases"].size() == 2);

  list["cases"][0]["colour"] = "red";
  std::ofstream(dir / "bad_cases.json") << list.dump();
  CHECK_THROWS_AS(load_case_list(dir / "bad_cases.json"), FormatError);
}

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nodulegan/distance.hpp"
#include "nodulegan/error.hpp"
#include "nodulegan/volume.hpp"
#include "test_util.hpp"

using namespace ngan;
namespace fs = std::filesystem;

namespace {

Volume random_volume(Dims3 d, std::uint64_t seed) {
  RngStream rng(seed);
  Grid g{d, {0.7, 1.1, 2.5}, {-10.0, 3.5, 100.25}};
  Volume v = Volume::filled(g, 0.0f);
  for (float& x : v.data) x = static_cast<float>(rng.uniform(-1200, 800));
  return v;
}

BinaryMask random_mask(Dims3 d, double p, std::uint64_t seed, Vec3 spacing = {1, 1, 1}) {
  RngStream rng(seed);
  BinaryMask m = BinaryMask::empty(Grid{d, spacing});
  for (auto& b : m.data) b = rng.uniform() < p;
  return m;
}

}  // namespace

TEST_CASE("volume file round-trip") {
  testutil::TempDir tmp;
  const Volume v = random_volume({5, 6, 7}, 1);
  save_volume(v, tmp / "vol.json");
  const Volume back = load_volume(tmp / "vol");
  CHECK(back.grid == v.grid);
  CHECK(back.space == v.space);
  REQUIRE(back.data.size() == v.data.size());
  CHECK(std::memcmp(back.data.data(), v.data.data(), v.data.size() * sizeof(float)) == 0);

  const BinaryMask m = random_mask({4, 3, 5}, 0.4, 2);
  save_mask(m, tmp / "mask.raw");
  const BinaryMask mb = load_mask(tmp / "mask.json");
  CHECK(mb.grid == m.grid);
  CHECK(mb.data == m.data);
}

TEST_CASE("sidecar/raw size mismatch names the expected count") {
  testutil::TempDir tmp;
  std::ofstream(tmp / "bad.json") << R"({"dims":[2,2,2],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"dtype":"u8","order":"x-fastest"})";
  std::ofstream(tmp / "bad.raw", std::ios::binary) << std::string(7, '\0');
  try {
    load_mask(tmp / "bad.json");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("expected 8") != std::string::npos);
  }
  std::ofstream(tmp / "junk.json") << "{ not json";
  CHECK_THROWS_AS(load_volume(tmp / "junk.json"), FormatError);
  std::ofstream(tmp / "extra.json") << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"dtype":"u8","colour":1})";
  CHECK_THROWS_AS(load_volume(tmp / "extra.json"), FormatError);
  std::ofstream(tmp / "two.json") << R"({"dims":[2,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],"dtype":"u8"})";
  std::ofstream(tmp / "two.raw", std::ios::binary) << std::string("\x01\x02", 2);
  CHECK_THROWS_AS(load_mask(tmp / "two.json"), FormatError);
}

TEST_CASE("normalize_hu") {
  Volume v = Volume::filled(Grid{{5, 1, 1}}, 0.0f);
  v.data = {-1000.f, 400.f, -300.f, -2000.f, 3000.f};
  const Volume n = normalize_hu(v, {-1000, 400});
  CHECK(n.space == IntensitySpace::normalized);
  CHECK(n.data[0] == -1.0f);
  CHECK(n.data[1] == 1.0f);
  CHECK(n.data[2] == 0.0f);
  CHECK(n.data[3] == -1.0f);
  CHECK(n.data[4] == 1.0f);

  const Volume r = random_volume({6, 6, 6}, 9);
  const Volume back = denormalize_hu(normalize_hu(r, {-1000, 400}), {-1000, 400});
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const double expect = std::clamp<double>(r.data[i], -1000, 400);
    // float storage: relative to the window width
    CHECK(std::abs(back.data[i] - expect) <= 1e-6 * 1400);
  }
}

TEST_CASE("crop_voi") {
  SUBCASE("full extent at the center is the identity") {
    Volume v = random_volume({8, 8, 8}, 3);
    v.grid.spacing_mm = {1.5, 1.5, 1.5};
    const Volume c = crop_voi(v, v.grid.center_mm(), 8 * 1.5, -1000);
    CHECK(c.grid == v.grid);
    CHECK(c.data == v.data);
  }
  SUBCASE("fully outside is all fill") {
    const Volume v = random_volume({6, 6, 6}, 4);
    const Volume c = crop_voi(v, {500, 500, 500}, 5, -1000);
    for (float x : c.data) CHECK(x == -1000.0f);
  }
  SUBCASE("linear ramp is reproduced at the sampled coordinates") {
    Grid g{{12, 10, 9}, {0.8, 1.2, 2.0}, {5, -3, 11}};
    Volume v = Volume::filled(g, 0);
    auto ramp = [](Vec3 p) { return 0.5 * p.x - 0.25 * p.y + 0.125 * p.z; };
    for (int z = 0; z < 9; ++z)
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x) v.at(x, y, z) = static_cast<float>(ramp(g.to_mm(Index3{x, y, z})));
    const Vec3 center{g.center_mm().x + 0.37, g.center_mm().y - 0.21, g.center_mm().z + 0.4};
    const Volume c = crop_voi(v, center, 6.0, -999);
    const auto& d = c.grid.dims;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          const double expect = ramp(c.grid.to_mm(Index3{x, y, z}));
          CHECK(std::abs(c.at(x, y, z) - expect) < 1e-5);  // float storage of values ~10
        }
  }
  CHECK_THROWS_AS(crop_voi(random_volume({3, 3, 3}, 1), {0, 0, 0}, 0.0, 0), GeometryError);
}

TEST_CASE("resample_trilinear") {
  SUBCASE("constant stays constant and extent is preserved") {
    Volume v = Volume::filled(Grid{{7, 5, 3}, {1, 2, 3}}, 42.0f);
    const Volume r = resample_trilinear(v, {4, 9, 11});
    for (float x : r.data) CHECK(x == 42.0f);
    CHECK(r.grid.spacing_mm.x * 4 == doctest::Approx(7.0));
    CHECK(r.grid.spacing_mm.z * 11 == doctest::Approx(9.0));
  }
  SUBCASE("linear field is exact on interior points after 2x upsampling") {
    Volume v = Volume::filled(Grid{{8, 8, 8}}, 0.0f);
    auto f = [](double x, double y, double z) { return 2 * x + 3 * y - z; };
    for (int z = 0; z < 8; ++z)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) v.at(x, y, z) = static_cast<float>(f(x, y, z));
    const Volume r = resample_trilinear(v, Dims3::cube(16));
    for (int z = 1; z < 15; ++z)
      for (int y = 1; y < 15; ++y)
        for (int x = 1; x < 15; ++x) {
          const Vec3 p = r.grid.to_mm(Index3{x, y, z});  // source voxel coordinates (unit spacing)
          CHECK(std::abs(r.at(x, y, z) - f(p.x, p.y, p.z)) < 1e-5);
        }
  }
  SUBCASE("64 -> 32 -> 64 on a smooth blob stays within 5% of the range") {
    Volume v = Volume::filled(Grid{Dims3::cube(64)}, 0.0f);
    for (int z = 0; z < 64; ++z)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
          const double r2 = (x - 31.5) * (x - 31.5) + (y - 30.0) * (y - 30.0) + (z - 33.0) * (z - 33.0);
          v.at(x, y, z) = static_cast<float>(std::exp(-r2 / (2 * 8.0 * 8.0)));
        }
    const Volume back = resample_trilinear(resample_trilinear(v, Dims3::cube(32)), Dims3::cube(64));
    double err = 0;
    for (std::size_t i = 0; i < v.data.size(); ++i) err = std::max(err, double(std::abs(back.data[i] - v.data[i])));
    CHECK(err < 0.05);
  }
}

TEST_CASE("sphere_mask") {
  CHECK(sphere_mask(Dims3::cube(5), {2, 2, 2}, 1.0).count() == 1);
  // exhaustive count oracle (numpy, independent of this code): 17256 at the
  // geometric center 31.5, 17077 at voxel 32
  auto brute = [](double c) {
    std::size_t n = 0;
    for (int z = 0; z < 64; ++z)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          n += (x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c) <= 256.0;
    return n;
  };
  CHECK(sphere_mask(Dims3::cube(64), {31.5, 31.5, 31.5}, 32).count() == 17256);
  CHECK(brute(31.5) == 17256);
  CHECK(sphere_mask(Dims3::cube(64), {32, 32, 32}, 32).count() == 17077);
  CHECK(brute(32) == 17077);

  const auto s = sphere_mask(Dims3::cube(21), {10, 9, 11}, 13.0);
  for (int z = 0; z < 21; ++z)
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 21; ++x) {
        if (2 * 10 - x < 21) CHECK(s.at(x, y, z) == s.at(20 - x, y, z));
        if (2 * 9 - y >= 0 && 2 * 9 - y < 21) CHECK(s.at(x, y, z) == s.at(x, 18 - y, z));
        if (2 * 11 - z >= 0 && 2 * 11 - z < 21) CHECK(s.at(x, y, z) == s.at(x, y, 22 - z));
      }
  CHECK_THROWS_AS(sphere_mask(Dims3::cube(4), {1, 1, 1}, 0), GeometryError);
}

TEST_CASE("dilate") {
  const BinaryMask m = random_mask({9, 8, 7}, 0.05, 5);
  CHECK(dilate(m, 0).data == m.data);

  BinaryMask single = BinaryMask::empty(Grid{Dims3::cube(15)});
  single.at(7, 7, 7) = 1;
  CHECK(dilate(single, 3).count() == 123);  // digital ball, counted exhaustively
  CHECK(dilate(single, 4).count() == 257);

  for (double r : {1.0, 2.5, 3.0, 4.0, 5.0, 6.0}) {
    const BinaryMask d = dilate(m, r);
    const auto oracle = testutil::brute_dilate(m, r);
    CHECK(d.data == oracle.data);
    for (std::size_t i = 0; i < m.data.size(); ++i)
      if (m.data[i]) CHECK(d.data[i] == 1);
  }
}

TEST_CASE("erase") {
  const Volume v = random_volume({4, 5, 6}, 8);
  CHECK(erase(v, BinaryMask::empty(v.grid), -1).data == v.data);
  BinaryMask full = BinaryMask::empty(v.grid);
  std::fill(full.data.begin(), full.data.end(), 1);
  for (float x : erase(v, full, -1).data) CHECK(x == -1.0f);
  BinaryMask half = random_mask(v.grid.dims, 0.3, 4);
  half.grid = v.grid;
  const Volume e = erase(v, half, -5000);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < v.data.size(); ++i) diff += e.data[i] != v.data[i];
  CHECK(diff == half.count());
  CHECK_THROWS_AS(erase(v, BinaryMask::empty(Grid{{1, 1, 1}}), 0), GeometryError);
}

TEST_CASE("merge_reader_masks") {
  BinaryMask a = BinaryMask::empty(Grid{{6, 6, 6}});
  BinaryMask b = a;
  a.at(1, 1, 1) = a.at(2, 1, 1) = 1;
  b.at(4, 4, 4) = 1;
  CHECK(merge_reader_masks({a}).data == a.data);
  const BinaryMask u = merge_reader_masks({a, b});
  CHECK(u.count() == 3);
  for (std::size_t i = 0; i < u.data.size(); ++i) CHECK(u.data[i] >= std::max(a.data[i], b.data[i]));
  BinaryMask c = BinaryMask::empty(Grid{{6, 6, 5}});
  CHECK_THROWS_AS(merge_reader_masks({a, c}), GeometryError);
}

TEST_CASE("make_voi_pair") {
  Grid g{{40, 40, 30}, {1, 1, 1}, {0, 0, 0}};
  Volume src = Volume::filled(g, -850.0f);
  BinaryMask nod = BinaryMask::empty(g);
  // 10 mm cube-ish nodule: x,y,z in [15, 24]
  for (int z = 10; z < 20; ++z)
    for (int y = 15; y < 25; ++y)
      for (int x = 15; x < 25; ++x) {
        nod.at(x, y, z) = 1;
        src.at(x, y, z) = 20.0f;
      }
  CHECK(max_dimension_mm(nod) == 10.0);
  VoiOptions opt;
  const auto out = make_voi_pair(src, nod, 2.5, opt, "case0");
  REQUIRE(out.pair);
  const VoiPair& p = *out.pair;
  CHECK(p.meta.crop_size_mm == 25.0);
  CHECK(p.y.grid.dims == Dims3::cube(64));
  CHECK(validate_voi_pair(p, opt.fill).empty());
  // erasure sphere spans 32 voxels along each axis through the center
  int extent = 0;
  for (int x = 0; x < 64; ++x) extent += p.m.at(x, 31, 31);
  CHECK(extent == 32);
  CHECK(p.m.count() == 17256);

  BinaryMask tiny = BinaryMask::empty(g);
  tiny.at(5, 5, 5) = tiny.at(6, 5, 5) = 1;
  const auto skipped = make_voi_pair(src, tiny, 2.0, opt);
  CHECK_FALSE(skipped.pair);
  CHECK(skipped.skipped_reason.find("below 5") != std::string::npos);
  CHECK_THROWS_AS(make_voi_pair(src, BinaryMask::empty(g), 2.0, opt), DataError);
}

TEST_CASE("voi dataset manifest round-trip") {
  testutil::TempDir tmp;
  Grid g{{30, 30, 30}};
  Volume src = Volume::filled(g, -850.0f);
  BinaryMask nod = sphere_mask(g, {15, 15, 15}, 8);
  for (std::size_t i = 0; i < nod.data.size(); ++i)
    if (nod.data[i]) src.data[i] = 30.0f;
  VoiOptions opt;
  opt.voi_edge = 16;
  std::vector<VoiPair> pairs;
  RngStream rng(1);
  for (double s : sample_scales(rng, 3)) {
    CHECK(s >= 2.0);
    CHECK(s <= 2.5);
    pairs.push_back(*make_voi_pair(src, nod, s, opt, "a").pair);
  }
  save_voi_dataset(pairs, tmp / "ds");
  const auto back = load_voi_dataset(tmp / "ds" / "manifest.json");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].y.data == pairs[i].y.data);
    CHECK(back[i].n.data == pairs[i].n.data);
    CHECK(back[i].meta.scale_factor == pairs[i].meta.scale_factor);
  }
}

TEST_CASE("surface extraction") {
  BinaryMask one = BinaryMask::empty(Grid{Dims3::cube(5)});
  one.at(2, 2, 2) = 1;
  CHECK(surface_voxels(one).size() == 1);
  BinaryMask cube = BinaryMask::empty(Grid{Dims3::cube(5)});
  for (int z = 1; z < 4; ++z)
    for (int y = 1; y < 4; ++y)
      for (int x = 1; x < 4; ++x) cube.at(x, y, z) = 1;
  CHECK(surface_voxels(cube).size() == 26);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const BinaryMask m = random_mask({7, 6, 8}, 0.6, seed);
    CHECK(surface_mask(m).data == testutil::erosion_difference(m).data);
  }
}

TEST_CASE("distance transform matches exhaustive distances") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const BinaryMask m = random_mask({9, 7, 6}, 0.04, seed + 100, {0.7, 1.3, 2.1});
    const auto got = distance_transform_mm(m);
    const auto expect = testutil::brute_distance_mm(m);
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (std::isinf(expect[i])) CHECK(std::isinf(got[i]));
      else CHECK(std::abs(got[i] - expect[i]) < 1e-9);
    }
  }
}

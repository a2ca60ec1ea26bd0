#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "nodulegan/error.hpp"
#include "nodulegan/phantom.hpp"
#include "test_util.hpp"

using namespace ngan;

namespace {

PhantomSpec spec_for(NodulePlacement placement, std::uint64_t seed) {
  PhantomSpec s;
  s.placement = placement;
  s.seed = seed;
  return s;
}

// Lung membership straight from the ellipsoid equations.
bool in_lung(const Phantom& p, double x, double y, double z) {
  for (const Ellipsoid* e : {&p.left_lung, &p.right_lung}) {
    const double a = (x - e->center_mm.x) / e->semi_axes_mm.x;
    const double b = (y - e->center_mm.y) / e->semi_axes_mm.y;
    const double c = (z - e->center_mm.z) / e->semi_axes_mm.z;
    if (a * a + b * b + c * c <= 1.0) return true;
  }
  return false;
}

bool in_nodule(const NoduleShape& s, double x, double y, double z) {
  for (const auto& l : s.lobes) {
    const double dx = x - l.center_mm.x, dy = y - l.center_mm.y, dz = z - l.center_mm.z;
    if (dx * dx + dy * dy + dz * dz <= l.radius_mm * l.radius_mm + 1e-9) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("phantom generation is a pure function of the spec") {
  const PhantomSpec s = spec_for(NodulePlacement::interior, 7);
  const Phantom a = generate_phantom(s);
  const Phantom b = generate_phantom(s);
  CHECK(a.id == b.id);
  CHECK(a.ct.data == b.ct.data);
  CHECK(a.lung.data == b.lung.data);
  REQUIRE(a.nodules.size() == b.nodules.size());
  for (std::size_t i = 0; i < a.nodules.size(); ++i) CHECK(a.nodules[i].data == b.nodules[i].data);

  PhantomSpec other = s;
  other.seed = 8;
  const Phantom c = generate_phantom(other);
  CHECK(c.id != a.id);
  CHECK(c.ct.data != a.ct.data);
}

TEST_CASE("spec validation") {
  PhantomSpec s;
  s.nodule_hu = -900;
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s = PhantomSpec{};
  s.nodule_hu = 100;  // above body
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s = PhantomSpec{};
  s.nodule_diameter_mm = {20, 10};
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s = PhantomSpec{};
  s.placement = NodulePlacement::boundary;
  s.nodule_diameter_mm = {6, 10};  // radius never reaches 8 mm
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  CHECK(placement_from_string("boundary") == NodulePlacement::boundary);
  CHECK_THROWS_AS(placement_from_string("edge"), ConfigError);
}

TEST_CASE("infeasible placement names the constraint") {
  PhantomSpec s;
  s.nodule_diameter_mm = {90, 100};
  s.max_retries = 50;
  try {
    generate_phantom(s);
    FAIL("expected PlacementError");
  } catch (const PlacementError& e) {
    CHECK(std::string(e.what()).find("lung boundary") != std::string::npos);
  }
}

TEST_CASE("masks match the analytic geometry") {
  for (auto placement : {NodulePlacement::interior, NodulePlacement::boundary}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const PhantomSpec s = spec_for(placement, seed);
      const Phantom p = generate_phantom(s);
      const auto& d = p.lung.grid.dims;
      REQUIRE(p.nodules.size() == std::size_t(s.n_nodules));
      std::size_t mismatches = 0;
      for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
          for (int x = 0; x < d.nx; ++x) {
            const double mx = x * s.spacing_mm.x, my = y * s.spacing_mm.y, mz = z * s.spacing_mm.z;
            const bool lung = in_lung(p, mx, my, mz);
            mismatches += lung != bool(p.lung.at(x, y, z));
            for (std::size_t i = 0; i < p.nodules.size(); ++i) {
              const bool nod = lung && in_nodule(p.nodule_shapes[i], mx, my, mz);
              mismatches += nod != bool(p.nodules[i].at(x, y, z));
            }
          }
      CHECK(mismatches == 0);
      for (const auto& m : p.nodules) {
        CHECK(m.count() > 0);
        // nodules lie inside the lung
        for (std::size_t k = 0; k < m.data.size(); ++k)
          if (m.data[k]) REQUIRE(p.lung.data[k]);
      }
    }
  }
}

TEST_CASE("painted intensities follow the masks") {
  PhantomSpec s = spec_for(NodulePlacement::interior, 3);
  s.noise_sigma_hu = 0;
  const Phantom p = generate_phantom(s);
  const auto& d = p.ct.grid.dims;
  std::size_t lung_air = 0;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        bool nod = false;
        for (const auto& m : p.nodules) nod = nod || m.at(x, y, z);
        const float v = p.ct.at(x, y, z);
        if (nod) {
          CHECK(v == float(s.nodule_hu));
        } else if (p.lung.at(x, y, z)) {
          CHECK((v == float(s.lung_hu) || v == float(s.vessel_hu)));
          lung_air += v == float(s.lung_hu);
        } else {
          CHECK((v == float(s.body_hu) || v == float(s.air_hu)));
        }
      }
  CHECK(lung_air > p.lung.count() / 2);
  CHECK(p.vessels.size() == std::size_t(s.n_vessels));

  // noise statistics on the otherwise flat body region
  PhantomSpec noisy = s;
  noisy.noise_sigma_hu = 20;
  const Phantom q = generate_phantom(noisy);
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < p.ct.data.size(); ++k)
    if (p.ct.data[k] == float(s.body_hu)) {
      const double e = q.ct.data[k] - p.ct.data[k];
      sum += e;
      sum2 += e * e;
      ++n;
    }
  REQUIRE(n > 1000);
  const double mean = sum / n, sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean) < 1.0);
  CHECK(sd == doctest::Approx(20).epsilon(0.03));
}

TEST_CASE("interior nodules keep more than 5 mm from the lung boundary") {
  for (std::uint64_t seed = 11; seed <= 15; ++seed) {
    const PhantomSpec s = spec_for(NodulePlacement::interior, seed);
    const Phantom p = generate_phantom(s);
    const auto surface = testutil::foreground_mm(testutil::erosion_difference(p.lung));
    REQUIRE(!surface.empty());
    for (const auto& m : p.nodules) {
      double closest = 1e300;
      for (const auto& v : testutil::foreground_mm(m))
        for (const auto& q : surface) {
          const double dx = v.x - q.x, dy = v.y - q.y, dz = v.z - q.z;
          closest = std::min(closest, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
      CHECK(closest > 5.0);
    }
  }
}

TEST_CASE("boundary nodules touch the lung boundary band") {
  for (std::uint64_t seed = 21; seed <= 25; ++seed) {
    const PhantomSpec s = spec_for(NodulePlacement::boundary, seed);
    const Phantom p = generate_phantom(s);
    const auto band = testutil::erosion_difference(p.lung);
    for (std::size_t i = 0; i < p.nodules.size(); ++i) {
      const auto& shape = p.nodule_shapes[i];
      std::size_t overlap = 0;
      for (std::size_t k = 0; k < band.data.size(); ++k) overlap += band.data[k] && p.nodules[i].data[k];
      CHECK(overlap > 0);

      double closest = 1e300;
      for (const auto& q : testutil::foreground_mm(band)) {
        const double dx = shape.center_mm.x - q.x, dy = shape.center_mm.y - q.y, dz = shape.center_mm.z - q.z;
        closest = std::min(closest, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      CHECK(closest > 8.0);
      CHECK(closest < 20.0);
      CHECK(closest == doctest::Approx(shape.boundary_distance_mm));
    }
  }
}

TEST_CASE("nodule diameters fall within the requested range") {
  for (auto placement : {NodulePlacement::interior, NodulePlacement::boundary}) {
    for (std::uint64_t seed = 31; seed <= 36; ++seed) {
      PhantomSpec s = spec_for(placement, seed);
      s.nodule_diameter_mm = {18, 22};
      const Phantom p = generate_phantom(s);
      for (std::size_t i = 0; i < p.nodules.size(); ++i) {
        const double envelope = 2 * p.nodule_shapes[i].envelope_radius_mm;
        CHECK(envelope >= 18.0);
        CHECK(envelope <= 22.0);
        for (const auto& l : p.nodule_shapes[i].lobes)
          CHECK((l.center_mm - p.nodule_shapes[i].center_mm).norm() + l.radius_mm <=
                p.nodule_shapes[i].envelope_radius_mm + 1e-9);
        CHECK(max_dimension_mm(p.nodules[i]) <= 22.0 + s.spacing_mm.z);
        CHECK(p.nodule_shapes[i].lobes.size() >= 1);
        CHECK(p.nodule_shapes[i].lobes.size() <= 3);
      }
    }
  }
}

TEST_CASE("write_phantom emits volumes and a manifest entry") {
  testutil::TempDir dir;
  const Phantom p = generate_phantom(PhantomSpec{});
  const auto entry = nlohmann::json::parse(write_phantom(p, dir.path(), "case0"));
  CHECK(entry["id"] == p.id);
  const Volume ct = load_volume(dir / entry["ct"].get<std::string>());
  CHECK(ct.data == p.ct.data);
  CHECK(ct.grid == p.ct.grid);
  const BinaryMask lung = load_mask(dir / entry["lung"].get<std::string>());
  CHECK(lung.data == p.lung.data);
  REQUIRE(entry["nodules"].size() == p.nodules.size());
  for (std::size_t i = 0; i < p.nodules.size(); ++i) {
    const BinaryMask m = load_mask(dir / entry["nodules"][i]["mask"].get<std::string>());
    CHECK(m.data == p.nodules[i].data);
  }
}

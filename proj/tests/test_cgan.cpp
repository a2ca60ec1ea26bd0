#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nodulegan/cgan.hpp"
#include "nodulegan/error.hpp"
#include "nodulegan/gradcheck.hpp"
#include "nodulegan/phantom.hpp"
#include "test_util.hpp"

using namespace ngan;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(const Shape& s, RngStream& rng, double lo = -1, double hi = 1, bool grad = false) {
  Tensor t = Tensor::zeros(s, grad);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Central sphere M and its dilation N on a (B,1,e,e,e) grid.
std::pair<Tensor, Tensor> sphere_masks(int batch, int edge) {
  const BinaryMask m = sphere_mask(Dims3::cube(edge), Vec3{(edge - 1) / 2.0, (edge - 1) / 2.0, (edge - 1) / 2.0},
                                   edge / 2.0);
  const BinaryMask n = dilate(m, 2);
  Tensor tm = Tensor::zeros({batch, 1, edge, edge, edge}), tn = Tensor::zeros({batch, 1, edge, edge, edge});
  for (int b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      tm.values()[b * m.data.size() + i] = m.data[i];
      tn.values()[b * m.data.size() + i] = n.data[i];
    }
  return {tm, tn};
}

std::vector<VoiPair> small_pairs(int n, std::uint64_t first_seed = 1) {
  PhantomDatasetOptions o;
  o.n_pairs = n;
  o.first_seed = first_seed;
  o.voi.voi_edge = 32;
  return phantom_voi_pairs(o);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.voi_edge = 32;
  c.batch_size = 2;
  c.steps = 4;
  c.g_widths = {2, 2, 4, 4, 4};
  c.d_widths = {2, 2, 4, 4, 4};
  return c;
}

bool same_arrays(const Checkpoint& a, const Checkpoint& b) {
  if (a.arrays.size() != b.arrays.size()) return false;
  for (std::size_t i = 0; i < a.arrays.size(); ++i)
    if (a.arrays[i].name != b.arrays[i].name || a.arrays[i].shape != b.arrays[i].shape ||
        a.arrays[i].values != b.arrays[i].values)
      return false;
  return a.step == b.step && a.g_adam_step == b.g_adam_step && a.d_adam_step == b.d_adam_step;
}

}  // namespace

TEST_CASE("generator shape ladder and output range") {
  for (int edge : {32, 64}) {
    GeneratorNet g(GeneratorConfig{edge, {1, 2, 2, 2, 2}, 0.5, true});
    RngStream init(3);
    g.init_normal(init, 0.5);
    RngStream rng(9);
    Tensor x = random_tensor({1, 1, edge, edge, edge}, rng);
    Tensor h = x;
    int extent = edge;
    for (const auto& l : g.enc) {
      h = l.forward(h);
      extent /= 2;
      CHECK(h.dim(2) == extent);
      CHECK(h.dim(4) == extent);
    }
    CHECK(extent == edge / 32);
    const Tensor y = g.forward(x, rng);
    CHECK(y.shape() == x.shape());
    for (double v : y.values()) REQUIRE((v >= -1.0 && v <= 1.0));
  }
  GeneratorNet g(GeneratorConfig{32, {1, 1, 1, 1, 1}, 0.5, true});
  RngStream rng(1);
  CHECK_THROWS_AS(g.forward(Tensor::zeros({1, 1, 16, 16, 16}), rng), ShapeError);
  CHECK_THROWS_AS(GeneratorNet(GeneratorConfig{48, {1, 1, 1, 1, 1}, 0.5, true}), ConfigError);
}

TEST_CASE("decoder channel bookkeeping with and without skips") {
  const std::array<int, 5> w{3, 5, 7, 11, 13};
  GeneratorNet with(GeneratorConfig{32, w, 0.5, true});
  GeneratorNet without(GeneratorConfig{32, w, 0.5, false});
  const int expected_in[5] = {13, 11 + 11, 7 + 7, 5 + 5, 3 + 3};
  const int expected_in_plain[5] = {13, 11, 7, 5, 3};
  for (int i = 0; i < 5; ++i) {
    CHECK(with.dec[i].weight.dim(0) == expected_in[i]);
    CHECK(without.dec[i].weight.dim(0) == expected_in_plain[i]);
  }
  CHECK(with.dec[4].weight.dim(1) == 1);
  RngStream rng(1);
  CHECK(without.forward(Tensor::zeros({1, 1, 32, 32, 32}), rng).shape() == Shape{1, 1, 32, 32, 32});
}

TEST_CASE("dropout makes repeated generator passes differ inside M") {
  GeneratorNet g(GeneratorConfig{32, {2, 2, 4, 4, 4}, 0.5, true});
  RngStream init(5);
  g.init_normal(init, 0.3);
  RngStream rng(2);
  const Tensor x = random_tensor({1, 1, 32, 32, 32}, rng);
  RngStream a(100), b(200), a2(100);
  const Tensor ya = g.forward(x, a), yb = g.forward(x, b), ya2 = g.forward(x, a2);
  const auto [m, n] = sphere_masks(1, 32);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < ya.numel(); ++i)
    if (m.values()[i] && ya.values()[i] != yb.values()[i]) ++differ;
  CHECK(differ > 0);
  CHECK(std::equal(ya.values().begin(), ya.values().end(), ya2.values().begin()));
}

TEST_CASE("discriminator yields one probability per sample") {
  DiscriminatorNet d(DiscriminatorConfig{64, {1, 2, 2, 2, 2}});
  RngStream init(4);
  d.init_normal(init, 0.3);
  CHECK(d.head.weight.shape() == Shape{1, 2, 2, 2, 2});
  RngStream rng(8);
  const Tensor x = random_tensor({3, 1, 64, 64, 64}, rng), y = random_tensor({3, 1, 64, 64, 64}, rng);
  const Tensor p = d.probability(x, y);
  CHECK(p.shape() == Shape{3, 1, 1, 1, 1});
  for (double v : p.values()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("composite") {
  const Grid grid{Dims3::cube(8)};
  Volume x = Volume::filled(grid, 0.0f), g = Volume::filled(grid, 0.0f);
  RngStream rng(3);
  for (auto& v : x.data) v = float(rng.uniform(-1, 1));
  for (auto& v : g.data) v = float(rng.uniform(-1, 1));
  BinaryMask empty = BinaryMask::empty(grid), full = BinaryMask::empty(grid);
  std::fill(full.data.begin(), full.data.end(), 1);
  CHECK(composite(x, g, empty).data == x.data);
  CHECK(composite(x, g, full).data == g.data);
  const BinaryMask m = sphere_mask(grid, Vec3{3.5, 3.5, 3.5}, 5);
  const Volume c = composite(x, g, m);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < c.data.size(); ++i) differ += c.data[i] != x.data[i];
  CHECK(differ == m.count());
  BinaryMask wrong = BinaryMask::empty(Grid{Dims3::cube(7)});
  CHECK_THROWS_AS(composite(x, g, wrong), GeometryError);
}

TEST_CASE("multi-mask L1 properties") {
  RngStream rng(11);
  const int e = 12;
  const auto [m, n] = sphere_masks(2, e);
  const Tensor y = random_tensor({2, 1, e, e, e}, rng);

  CHECK(loss_multimask_l1(y, y, m, n, 5).total.item() == 0.0);

  for (double c : {0.01, 0.3, -0.7}) {
    Tensor g = Tensor::zeros(y.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) g.values()[i] = y.values()[i] + c;
    const L1Terms t = loss_multimask_l1(y, g, m, n, 5);
    CHECK(t.total.item() == doctest::Approx(6 * std::abs(c)).epsilon(1e-12));
    CHECK(std::abs(t.total.item() - 6 * std::abs(c)) < 1e-9);
    CHECK(std::abs(t.term_m - std::abs(c)) < 1e-9);
    CHECK(std::abs(t.term_band - std::abs(c)) < 1e-9);
  }

  Tensor g = random_tensor(y.shape(), rng);
  const double base = loss_multimask_l1(y, g, m, n, 5).total.item();
  Tensor g2 = Tensor::from(g.shape(), std::vector<double>(g.values().begin(), g.values().end()));
  for (std::size_t i = 0; i < g2.numel(); ++i)
    if (!n.values()[i]) g2.values()[i] += rng.uniform(-3, 3);
  CHECK(loss_multimask_l1(y, g2, m, n, 5).total.item() == base);

  // zero iff equal on N
  Tensor g3 = Tensor::from(y.shape(), std::vector<double>(y.values().begin(), y.values().end()));
  for (std::size_t i = 0; i < g3.numel(); ++i)
    if (!n.values()[i]) g3.values()[i] = 5;
  CHECK(loss_multimask_l1(y, g3, m, n, 5).total.item() == 0.0);

  const Tensor zero = Tensor::zeros(y.shape());
  CHECK_THROWS_AS(loss_multimask_l1(y, g, zero, n, 5), DataError);
  CHECK_THROWS_AS(loss_multimask_l1(y, g, m, m, 5), DataError);
  CHECK_THROWS_AS(loss_multimask_l1(y, g, n, m, 5), DataError);
}

TEST_CASE("erased-only and whole-image variants") {
  RngStream rng(12);
  const int e = 10;
  const auto [m, n] = sphere_masks(1, e);
  const Tensor y = random_tensor({1, 1, e, e, e}, rng), g = random_tensor({1, 1, e, e, e}, rng);
  double sm = 0, cm = 0, all = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const double d = std::abs(y.values()[i] - g.values()[i]);
    all += d;
    if (m.values()[i]) sm += d, ++cm;
  }
  CHECK(std::abs(reconstruction_loss(LossVariant::erased_only, y, g, m, n, 5).total.item() - sm / cm) < 1e-12);
  const double whole = all / double(y.numel());
  CHECK(std::abs(reconstruction_loss(LossVariant::all_image_l1_only, y, g, m, n, 5).total.item() - whole) < 1e-12);
  CHECK(std::abs(reconstruction_loss(LossVariant::all_image_l1_plus_adv, y, g, m, n, 5).total.item() - whole) <
        1e-12);
}

TEST_CASE("whole-volume mask reproduces the Isola-style objective") {
  RngStream rng(13);
  const int e = 32;
  const Tensor y = random_tensor({2, 1, e, e, e}, rng), x = random_tensor({2, 1, e, e, e}, rng);
  const Tensor full = Tensor::full({2, 1, e, e, e}, 1.0);
  GeneratorNet g(GeneratorConfig{e, {1, 1, 2, 2, 2}, 0.5, true});
  DiscriminatorNet d(DiscriminatorConfig{e, {1, 1, 2, 2, 2}});
  RngStream init(2);
  g.init_normal(init, 0.2);
  d.init_normal(init, 0.2);
  RngStream r1(4);
  const Tensor out = g.forward(x, r1);
  const double lambda = 100;

  // composite with a whole-volume mask is the raw output
  const Tensor fake = blend(out, x, full);
  CHECK(std::equal(fake.values().begin(), fake.values().end(), out.values().begin()));

  double l1 = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) l1 += std::abs(y.values()[i] - out.values()[i]);
  l1 /= double(y.numel());
  const Tensor z = d.logits(x, out);
  double adv = 0;
  for (double v : z.values()) adv += std::log1p(std::exp(-v));
  adv /= double(z.numel());
  const double isola = adv + lambda * l1;

  const double via_variant =
      loss_generator(d.logits(x, fake), reconstruction_loss(LossVariant::all_image_l1_plus_adv, y, out, full, full, 5).total,
                     lambda)
          .item();
  const double via_mask =
      loss_generator(d.logits(x, fake), reconstruction_loss(LossVariant::erased_only, y, out, full, full, 5).total, lambda)
          .item();
  CHECK(std::abs(via_variant - isola) < 1e-9);
  CHECK(std::abs(via_mask - isola) < 1e-9);
}

TEST_CASE("adversarial losses") {
  const Tensor zero = Tensor::zeros({4, 1, 1, 1, 1});
  CHECK(loss_discriminator(zero, zero).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(loss_discriminator(Tensor::full({4, 1, 1, 1, 1}, 60), Tensor::full({4, 1, 1, 1, 1}, -60)).item() < 1e-20);
  CHECK(loss_generator(zero, Tensor::scalar(0.01), 100).item() == doctest::Approx(std::log(2.0) + 1).epsilon(1e-12));
  RngStream rng(1);
  const Tensor z = random_tensor({3, 1, 1, 1, 1}, rng, -4, 4);
  CHECK(loss_generator(z, Tensor::scalar(0.37), 0).item() == loss_generator_adversarial(z).item());
}

TEST_CASE("full objective gradients match finite differences") {
  const int e = 32;
  GeneratorNet g(GeneratorConfig{e, {2, 2, 2, 2, 2}, 0.5, true});
  DiscriminatorNet d(DiscriminatorConfig{e, {2, 2, 2, 2, 2}});
  RngStream init(21);
  g.init_normal(init, 0.3);
  d.init_normal(init, 0.3);
  RngStream rng(22);
  const Tensor x = random_tensor({2, 1, e, e, e}, rng), y = random_tensor({2, 1, e, e, e}, rng);
  const auto [m, n] = sphere_masks(2, e);

  auto objective = [&]() {
    RngStream drop(77);
    const Tensor out = g.forward(x, drop);
    const Tensor fake = blend(out, x, m);
    return loss_generator(d.logits(x, fake), loss_multimask_l1(y, out, m, n, 5).total, 100);
  };
  auto d_objective = [&]() {
    RngStream drop(77);
    const Tensor fake = blend(g.forward(x, drop), x, m).detach();
    return loss_discriminator(d.logits(x, y), d.logits(x, fake));
  };

  std::vector<Tensor> gp, dp;
  for (const auto& p : g.parameters()) gp.push_back(p.tensor);
  for (const auto& p : d.parameters()) dp.push_back(p.tensor);
  std::vector<Tensor> all = gp;
  all.insert(all.end(), dp.begin(), dp.end());

  GradCheckOptions opts;
  opts.rel_step = 1e-6;
  opts.max_entries_per_tensor = 5;
  const GradCheckResult r = gradcheck(objective, all, opts);
  INFO(r.worst);
  CHECK(r.checked >= 100);
  CHECK(r.ok());

  const GradCheckResult rd = gradcheck(d_objective, dp, opts);
  INFO(rd.worst);
  CHECK(rd.ok());
}

TEST_CASE("boundary jump on a hand-checked example") {
  const Grid grid{{3, 1, 1}};
  Volume v = Volume::filled(grid, 0.0f);
  v.data = {1.0f, 4.0f, 2.0f};
  BinaryMask m = BinaryMask::empty(grid);
  m.data = {0, 1, 0};
  CHECK(boundary_jump(v, m) == doctest::Approx(2.5));  // (|4-1| + |4-2|) / 2
  m.data = {1, 1, 1};
  CHECK_THROWS_AS(boundary_jump(v, m), DataError);
}

TEST_CASE("training config and dataset validation") {
  auto pairs = small_pairs(4);
  TrainConfig c = tiny_config();
  c.alpha = 0.5;
  CHECK_THROWS_AS(Trainer(c, pairs), ConfigError);
  c = tiny_config();
  c.lambda = -1;
  CHECK_THROWS_AS(Trainer(c, pairs), ConfigError);
  CHECK_THROWS_AS(loss_variant_from_string("pix2pix"), ConfigError);
  CHECK_THROWS_AS(Trainer(tiny_config(), {}), DataError);
  auto bad = pairs;
  bad[2].m = BinaryMask::empty(bad[2].m.grid);
  CHECK_THROWS_AS(Trainer(tiny_config(), bad), DataError);
}

TEST_CASE("training alternates one D and one G update per step") {
  const auto pairs = small_pairs(6);
  Trainer t(tiny_config(), pairs);
  std::vector<StepRecord> log;
  t.run([&](const StepRecord& r) { log.push_back(r); });
  REQUIRE(log.size() == 4);
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].step == std::int64_t(i + 1));
    CHECK(log[i].d_updates == std::int64_t(i + 1));
    CHECK(log[i].g_updates == std::int64_t(i + 1));
    CHECK(std::isfinite(log[i].d_loss));
    CHECK(log[i].g_l1_m > 0);
  }
  CHECK(loss_csv_header() == "step,d_loss,g_adv,g_l1_m,g_l1_band");
  CHECK(loss_csv_row(log[0]).rfind("1,", 0) == 0);

  TrainConfig c = tiny_config();
  c.loss_variant = LossVariant::all_image_l1_only;
  Trainer l1(c, pairs);
  const StepRecord r = l1.step();
  CHECK(r.d_updates == 0);
  CHECK(r.g_updates == 1);
}

TEST_CASE("training is deterministic and thread-count independent") {
  const auto pairs = small_pairs(6);
  const int threads = num_threads();
  Trainer a(tiny_config(), pairs);
  a.run();
  set_num_threads(2);
  Trainer b(tiny_config(), pairs);
  b.run();
  set_num_threads(threads);
  CHECK(same_arrays(a.checkpoint(), b.checkpoint()));

  TrainConfig other = tiny_config();
  other.seed = 2;
  Trainer c(other, pairs);
  c.run();
  CHECK_FALSE(same_arrays(a.checkpoint(), c.checkpoint()));
}

TEST_CASE("checkpoint round trip and resume") {
  testutil::TempDir dir;
  const auto pairs = small_pairs(6);
  TrainConfig cfg = tiny_config();
  cfg.steps = 6;
  Trainer full(cfg, pairs);
  full.run();

  Trainer first(cfg, pairs);
  for (int i = 0; i < 3; ++i) first.step();
  save_checkpoint(first.checkpoint(), dir / "mid");
  const Checkpoint loaded = load_checkpoint(dir / "mid");
  CHECK(same_arrays(loaded, first.checkpoint()));
  CHECK(loaded.config.seed == cfg.seed);
  CHECK(loaded.config.g_widths == cfg.g_widths);

  Trainer resumed(loaded, pairs);
  CHECK(resumed.steps_done() == 3);
  resumed.run();
  CHECK(same_arrays(resumed.checkpoint(), full.checkpoint()));

  // byte-identical files for identical state
  save_checkpoint(full.checkpoint(), dir / "a");
  save_checkpoint(resumed.checkpoint(), dir / "b");
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(slurp(dir / "a.json").size() > 0);

  const GeneratorNet g = generator_from_checkpoint(loaded);
  const ParamList gp = g.parameters(), tp = first.generator().parameters();
  for (std::size_t k = 0; k < gp.size(); ++k)
    CHECK(std::equal(gp[k].tensor.values().begin(), gp[k].tensor.values().end(), tp[k].tensor.values().begin()));
}

TEST_CASE("truncated checkpoint blob names the expected size") {
  testutil::TempDir dir;
  Trainer t(tiny_config(), small_pairs(2));
  save_checkpoint(t.checkpoint(), dir / "ck");
  const auto size = fs::file_size(dir / "ck.bin");
  fs::resize_file(dir / "ck.bin", size - 8);
  try {
    load_checkpoint(dir / "ck");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("expected " + std::to_string(size)) != std::string::npos);
  }
}

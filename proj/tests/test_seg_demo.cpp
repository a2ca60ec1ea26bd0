#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nodulegan/error.hpp"
#include "nodulegan/seg_demo.hpp"
#include "test_util.hpp"

using namespace ngan;
namespace fs = std::filesystem;

namespace {

// Pixel label is 1 where the normalized intensity is positive.
std::vector<LabeledSlice> toy_slices(int n, int edge, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<LabeledSlice> out;
  const Grid g{{edge, edge, 1}};
  for (int k = 0; k < n; ++k) {
    LabeledSlice s{Volume::filled(g, 0.0f, IntensitySpace::normalized), BinaryMask::empty(g)};
    for (std::size_t i = 0; i < s.image.data.size(); ++i) {
      s.image.data[i] = float(rng.uniform(-1, 1));
      s.label.data[i] = s.image.data[i] > 0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

double training_dice(const SegNet& net, const std::vector<LabeledSlice>& data) {
  std::size_t inter = 0, a = 0, b = 0;
  for (const auto& s : data) {
    const auto p = predict_slice(net, s.image, {});
    for (std::size_t i = 0; i < p.size(); ++i) {
      const bool pred = p[i] >= 0.5;
      inter += pred && s.label.data[i];
      a += pred;
      b += s.label.data[i];
    }
  }
  return 2.0 * double(inter) / double(a + b);
}

ExperimentPlan tiny_plan() {
  ExperimentPlan p = desk_experiment_plan();
  p.phantom.dims = {32, 32, 8};
  p.phantom.spacing_mm = {6, 6, 8};
  p.phantom.n_vessels = 2;
  p.n_train_phantoms = 1;
  p.n_eval_phantoms = 1;
  p.n_augment_phantoms = 1;
  p.base_epochs = 1;
  p.fine_tune_epochs = 1;
  p.seeds = {1, 2};
  p.eval_edge_vox = 16;
  p.seg.base_width = 2;
  p.injection.n_sites = 2;
  p.arms = {AugmentationSource::none, AugmentationSource::multimask_cgan};
  return p;
}

GeneratorNet toy_generator() {
  GeneratorNet g(GeneratorConfig{32, {2, 2, 2, 2, 2}, 0.5, true});
  RngStream init(3);
  g.init_normal(init, 0.3);
  return g;
}

}  // namespace

TEST_CASE("segmenter maps a slice to a probability map of the same extent") {
  SegTrainConfig c;
  c.base_width = 2;
  const SegNet net = new_segmenter(c);
  RngStream rng(1);
  Volume img = Volume::filled(Grid{{24, 16, 1}}, 0.0f);
  for (auto& v : img.data) v = float(rng.uniform(-1000, 400));
  const auto p = predict_slice(net, img, {});
  CHECK(p.size() == 24u * 16u);
  for (double v : p) REQUIRE((v > 0.0 && v < 1.0));
  CHECK_THROWS_AS(predict_slice(net, Volume::filled(Grid{{12, 16, 1}}, 0.0f), {}), ShapeError);
  CHECK_THROWS_AS(net.logits(Tensor::zeros({1, 1, 2, 16, 16})), ShapeError);
}

TEST_CASE("segmenter learns a separable toy pattern deterministically") {
  const auto data = toy_slices(16, 16, 4);
  SegTrainConfig c;
  c.base_width = 4;
  c.epochs = 15;
  c.batch_size = 4;
  c.lr = 3e-3;
  c.seed = 11;
  SegNet a = new_segmenter(c);
  const SegTrainLog log = train_segmenter(a, data, c);
  REQUIRE(log.epoch_loss.size() == 15);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
  CHECK(training_dice(a, data) > 0.95);

  SegNet b = new_segmenter(c);
  train_segmenter(b, data, c);
  const ParamList pa = a.parameters(), pb = b.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k)
    CHECK(std::equal(pa[k].tensor.values().begin(), pa[k].tensor.values().end(), pb[k].tensor.values().begin()));
}

TEST_CASE("segmenter training rejects bad data") {
  SegTrainConfig c;
  c.base_width = 2;
  SegNet net = new_segmenter(c);
  CHECK_THROWS_AS(train_segmenter(net, {}, c), DataError);
  auto data = toy_slices(2, 16, 1);
  data[1].label = BinaryMask::empty(Grid{{8, 16, 1}});
  CHECK_THROWS_AS(train_segmenter(net, data, c), GeometryError);
}

TEST_CASE("segmenter save and load are lossless") {
  testutil::TempDir dir;
  SegTrainConfig c;
  c.base_width = 2;
  c.epochs = 1;
  SegNet net = new_segmenter(c);
  train_segmenter(net, toy_slices(4, 16, 2), c);
  save_segnet(net, dir / "seg");
  const SegNet back = load_segnet(dir / "seg");
  const ParamList a = net.parameters(), b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].name == b[k].name);
    CHECK(std::equal(a[k].tensor.values().begin(), a[k].tensor.values().end(), b[k].tensor.values().begin()));
  }
  const SegNet copy = net.clone();
  Tensor w = copy.parameters()[0].tensor;
  w.values()[0] += 1;
  CHECK(net.parameters()[0].tensor.values()[0] != w.values()[0]);

  fs::resize_file(dir / "seg.bin", fs::file_size(dir / "seg.bin") - 8);
  CHECK_THROWS_AS(load_segnet(dir / "seg"), FormatError);
}

TEST_CASE("evaluation anatomies must not appear in training sets") {
  PhantomSpec a;
  a.seed = 5;
  PhantomSpec b = a;
  b.placement = NodulePlacement::boundary;
  b.n_nodules = 1;
  CHECK(anatomy_id(a) == anatomy_id(b));
  CHECK(phantom_id(a) != phantom_id(b));
  CHECK_THROWS_AS(check_disjoint({"x", anatomy_id(a)}, {anatomy_id(b)}), DataError);
  CHECK_NOTHROW(check_disjoint({"x"}, {"y"}));

  ExperimentPlan p = tiny_plan();
  p.eval_seed_block = p.train_seed_block;
  CHECK_THROWS_AS(run_experiment(p, {{AugmentationSource::multimask_cgan, toy_generator()}}), DataError);
  CHECK_THROWS_AS(run_experiment(tiny_plan(), {}), ConfigError);
}

TEST_CASE("experiment report: control arm has zero delta, report layout") {
  const ExperimentPlan p = tiny_plan();
  const ExperimentReport r = run_experiment(p, {{AugmentationSource::multimask_cgan, toy_generator()}});
  REQUIRE(r.rows.size() == 4);
  const DeltaSummary none = summarize_arm(r, "none");
  CHECK(none.all_zero);
  CHECK(none.median_dice_delta == 0.0);
  for (const auto& row : r.rows) {
    CHECK(row.n_cases > 0);
    CHECK(row.before.dice >= 0);
    CHECK(row.before.dice <= 1);
    CHECK(row.before.asd_mm <= row.before.hausdorff_mm);
    CHECK(row.worst_before.dice <= row.before.dice);
    if (row.arm == "multimask_cgan") CHECK(row.n_fine_tune_slices > 0);
  }
  for (const auto& id : r.eval_ids) {
    CHECK(std::find(r.train_ids.begin(), r.train_ids.end(), id) == r.train_ids.end());
    CHECK(std::find(r.augment_ids.begin(), r.augment_ids.end(), id) == r.augment_ids.end());
  }
  const std::string csv = experiment_csv(r);
  CHECK(csv.rfind("arm,seed,dice_before,dice_after,hd_before_mm,hd_after_mm,asd_before_mm,asd_after_mm\n", 0) == 0);
  CHECK(csv.find("\nnone,median,") != std::string::npos);
  CHECK(csv.find("\nmultimask_cgan,worst,") != std::string::npos);
  const std::string svg = experiment_svg(r);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("multimask_cgan") != std::string::npos);

  const ExperimentReport again = run_experiment(p, {{AugmentationSource::multimask_cgan, toy_generator()}});
  CHECK(experiment_csv(again) == csv);
}

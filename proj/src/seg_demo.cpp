#include "nodulegan/seg_demo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nodulegan/error.hpp"

namespace ngan {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- network --------------------------------------------------------------------

SegNet::SegNet(int b) : base_(b) {
  if (b < 1) throw ConfigError("segmenter base width must be >= 1");
  const auto same = ConvGeometry::planar(3, 1, 1), half = ConvGeometry::planar(4, 2, 1);
  stem = Conv3dLayer(1, b, same);
  for (int i = 0; i < 3; ++i) down[i] = Conv3dLayer(b << i, b << (i + 1), half);
  up[0] = ConvTranspose3dLayer(8 * b, 4 * b, half);
  up[1] = ConvTranspose3dLayer(8 * b, 2 * b, half);
  up[2] = ConvTranspose3dLayer(4 * b, b, half);
  head = Conv3dLayer(2 * b, 1, same);
}

void SegNet::init_he(RngStream& rng) {
  auto conv = [&](Conv3dLayer& l) {
    const auto& w = l.weight;
    l.init_normal(rng, std::sqrt(2.0 / double(w.dim(1) * w.dim(3) * w.dim(4))));
  };
  auto deconv = [&](ConvTranspose3dLayer& l) {
    const auto& w = l.weight;
    l.init_normal(rng, std::sqrt(2.0 / double(w.dim(0) * w.dim(3) * w.dim(4) / 4)));
  };
  conv(stem);
  for (auto& l : down) conv(l);
  for (auto& l : up) deconv(l);
  conv(head);
}

Tensor SegNet::logits(const Tensor& x) const {
  if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != 1 || x.dim(3) % 8 || x.dim(4) % 8)
    throw ShapeError("segmenter input must be (B,1,1,H,W) with H, W divisible by 8, got " + shape_str(x.shape()));
  const Tensor s0 = leaky_relu(stem.forward(x));
  const Tensor s1 = leaky_relu(down[0].forward(s0));
  const Tensor s2 = leaky_relu(down[1].forward(s1));
  const Tensor s3 = leaky_relu(down[2].forward(s2));
  Tensor h = concat_channels(leaky_relu(up[0].forward(s3)), s2);
  h = concat_channels(leaky_relu(up[1].forward(h)), s1);
  h = concat_channels(leaky_relu(up[2].forward(h)), s0);
  return head.forward(h);
}

SegNet SegNet::clone() const {
  SegNet out(base_);
  const ParamList src = parameters(), dst = out.parameters();
  for (std::size_t k = 0; k < src.size(); ++k) {
    Tensor t = dst[k].tensor;
    std::copy(src[k].tensor.values().begin(), src[k].tensor.values().end(), t.values().begin());
  }
  return out;
}

ParamList SegNet::parameters() const {
  ParamList out;
  stem.collect("stem", out);
  for (int i = 0; i < 3; ++i) down[i].collect("down" + std::to_string(i + 1), out);
  for (int i = 0; i < 3; ++i) up[i].collect("up" + std::to_string(i + 1), out);
  head.collect("head", out);
  return out;
}

// ---- training ---------------------------------------------------------------------

namespace {

void check_slice(const LabeledSlice& s) {
  const Dims3& d = s.image.grid.dims;
  if (!(s.image.grid.dims == s.label.grid.dims))
    throw GeometryError("slice image and label dimensions differ");
  if (d.nz != 1) throw ShapeError("segmenter slices must have nz = 1");
  if (d.nx % 8 || d.ny % 8) throw ShapeError("segmenter slice extent must be divisible by 8");
}

double normalized(float v, IntensitySpace space, const HuWindow& w) {
  if (space == IntensitySpace::normalized) return v;
  const double t = std::clamp((double(v) - w.lo) / (w.hi - w.lo), 0.0, 1.0);
  return 2 * t - 1;
}

// (B,1,1,H,W) images and targets for the listed slices.
std::pair<Tensor, Tensor> slice_batch(const std::vector<LabeledSlice>& data, const std::vector<int>& idx,
                                      const HuWindow& w) {
  const Dims3 d = data[idx[0]].image.grid.dims;
  const std::size_t plane = std::size_t(d.nx) * d.ny;
  Tensor x = Tensor::zeros({int(idx.size()), 1, 1, d.ny, d.nx}), t = Tensor::zeros(x.shape());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const LabeledSlice& s = data[idx[k]];
    if (!(s.image.grid.dims == d)) throw GeometryError("segmenter slices must share one extent");
    for (std::size_t i = 0; i < plane; ++i) {
      x.values()[k * plane + i] = normalized(s.image.data[i], s.image.space, w);
      t.values()[k * plane + i] = s.label.data[i] ? 1.0 : 0.0;
    }
  }
  return {x, t};
}

}  // namespace

SegNet new_segmenter(const SegTrainConfig& cfg) {
  SegNet net(cfg.base_width);
  RngStream rng = RngStream(cfg.seed).fork(0x5e6);
  net.init_he(rng);
  return net;
}

SegTrainLog train_segmenter(SegNet& net, const std::vector<LabeledSlice>& data, const SegTrainConfig& cfg) {
  if (data.empty()) throw DataError("train_segmenter: no slices");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr > 0)) throw ConfigError("invalid segmenter training config");
  for (const auto& s : data) check_slice(s);
  const ParamList ps = net.parameters();
  const std::vector<Tensor> pt = tensors_of(ps);
  AdamState opt;
  opt.config = {cfg.lr, 0.9, 0.999, 1e-8};
  SegTrainLog log;
  const int n = int(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    RngStream rng = RngStream(cfg.seed).fork(0x5e60000 + std::uint64_t(epoch));
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    double total = 0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const std::vector<int> idx(order.begin() + start, order.begin() + std::min(n, start + cfg.batch_size));
      const auto [x, t] = slice_batch(data, idx, cfg.window);
      zero_grads(ps);
      const Tensor loss = bce_with_logits(net.logits(x), t);
      loss.backward();
      adam_step(pt, opt);
      total += loss.item();
      ++batches;
    }
    log.epoch_loss.push_back(total / batches);
  }
  return log;
}

namespace {

std::vector<double> predict_batch(const SegNet& net, const Tensor& x) {
  const ParamList ps = net.parameters();
  set_requires_grad(ps, false);
  Tensor z;
  try {
    z = net.logits(x);
  } catch (...) {
    set_requires_grad(ps, true);
    throw;
  }
  set_requires_grad(ps, true);
  std::vector<double> p(z.values().begin(), z.values().end());
  for (double& v : p) v = 1.0 / (1.0 + std::exp(-v));
  return p;
}

}  // namespace

std::vector<double> predict_slice(const SegNet& net, const Volume& image, const HuWindow& window) {
  const LabeledSlice s{image, BinaryMask::empty(image.grid)};
  check_slice(s);
  return predict_batch(net, slice_batch({s}, {0}, window).first);
}

BinaryMask segment_volume(const SegNet& net, const Volume& v, const HuWindow& window) {
  const Dims3& d = v.grid.dims;
  BinaryMask out = BinaryMask::empty(v.grid);
  const std::size_t plane = std::size_t(d.nx) * d.ny;
  std::vector<LabeledSlice> slices;
  for (int z = 0; z < d.nz; ++z) {
    const Slice s = axial_slice(v, out, z);
    slices.push_back({s.image, s.label});
  }
  for (const auto& s : slices) check_slice(s);
  const int chunk = 8;
  for (int start = 0; start < d.nz; start += chunk) {
    std::vector<int> idx;
    for (int z = start; z < std::min(d.nz, start + chunk); ++z) idx.push_back(z);
    const std::vector<double> p = predict_batch(net, slice_batch(slices, idx, window).first);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t i = 0; i < plane; ++i) out.data[std::size_t(idx[k]) * plane + i] = p[k * plane + i] >= 0.5;
  }
  return out;
}

namespace {

fs::path with_suffix(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  p += ext;
  return p;
}

}  // namespace

void save_segnet(const SegNet& net, const fs::path& stem) {
  static_assert(std::endian::native == std::endian::little, "f64le blobs assume a little-endian host");
  const fs::path manifest = with_suffix(stem, ".json"), blob = with_suffix(stem, ".bin");
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  json arrays = json::array();
  std::uint64_t offset = 0;
  std::ofstream out(blob, std::ios::binary);
  if (!out) throw IoError("cannot write " + blob.string());
  for (const auto& p : net.parameters()) {
    const auto v = p.tensor.values();
    arrays.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"count", v.size()}});
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
    offset += v.size() * sizeof(double);
  }
  if (!out) throw IoError("write failed for " + blob.string());
  std::ofstream m(manifest);
  if (!m) throw IoError("cannot write " + manifest.string());
  m << json{{"format", "nodulegan-segnet"},
            {"version", 1},
            {"base_width", net.base_width()},
            {"blob", blob.filename().string()},
            {"blob_bytes", offset},
            {"arrays", arrays}}
           .dump(2)
    << "\n";
}

SegNet load_segnet(const fs::path& stem) {
  const fs::path manifest = with_suffix(stem, ".json");
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open segmenter manifest " + manifest.string());
  try {
    const json j = json::parse(in);
    if (j.at("format") != "nodulegan-segnet") throw FormatError(manifest.string() + " is not a segmenter");
    SegNet net(j.at("base_width").get<int>());
    const fs::path blob = manifest.parent_path() / j.at("blob").get<std::string>();
    const std::uint64_t bytes = j.at("blob_bytes");
    std::ifstream b(blob, std::ios::binary);
    if (!b) throw IoError("cannot open " + blob.string());
    const auto size = fs::file_size(blob);
    if (size != bytes)
      throw FormatError("segmenter blob " + blob.string() + " has " + std::to_string(size) + " bytes, expected " +
                        std::to_string(bytes));
    const ParamList ps = net.parameters();
    const auto& arrays = j.at("arrays");
    if (arrays.size() != ps.size()) throw FormatError("segmenter manifest lists the wrong number of arrays");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (arrays[k].at("name") != ps[k].name || arrays[k].at("shape").get<Shape>() != ps[k].tensor.shape())
        throw FormatError("segmenter array " + std::to_string(k) + " does not match '" + ps[k].name + "'");
      Tensor t = ps[k].tensor;
      b.seekg(std::streamoff(arrays[k].at("offset").get<std::uint64_t>()));
      b.read(reinterpret_cast<char*>(t.values().data()), std::streamsize(t.numel() * sizeof(double)));
    }
    if (!b) throw FormatError("segmenter blob " + blob.string() + " is truncated");
    return net;
  } catch (const json::exception& e) {
    throw FormatError("segmenter manifest " + manifest.string() + ": " + e.what());
  }
}

// ---- experiment ---------------------------------------------------------------------

std::string to_string(AugmentationSource a) {
  switch (a) {
    case AugmentationSource::none: return "none";
    case AugmentationSource::l1_only: return "l1_only";
    case AugmentationSource::multimask_cgan: return "multimask_cgan";
  }
  return "?";
}

AugmentationSource augmentation_source_from_string(const std::string& s) {
  if (s == "none") return AugmentationSource::none;
  if (s == "l1_only") return AugmentationSource::l1_only;
  if (s == "multimask_cgan") return AugmentationSource::multimask_cgan;
  throw ConfigError("unknown augmentation source '" + s + "' (none, l1_only, multimask_cgan)");
}

ExperimentPlan desk_experiment_plan() {
  ExperimentPlan p;
  p.phantom.dims = {64, 64, 24};
  p.phantom.spacing_mm = {3, 3, 4};
  p.phantom.n_vessels = 8;
  p.injection.n_sites = 6;
  p.injection.voi_size_mm = {32, 48};
  return p;
}

void validate(const ExperimentPlan& p) {
  if (p.n_train_phantoms < 1 || p.n_eval_phantoms < 1 || p.n_augment_phantoms < 1)
    throw ConfigError("experiment phantom counts must be >= 1");
  if (p.n_train_phantoms > 1000 || p.n_eval_phantoms > 1000 || p.n_augment_phantoms > 1000)
    throw ConfigError("experiment phantom counts must be <= 1000");
  if (p.arms.empty()) throw ConfigError("experiment needs at least one arm");
  if (p.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (p.base_epochs < 1 || p.fine_tune_epochs < 0) throw ConfigError("invalid experiment epochs");
  if (!(p.fine_tune_lr > 0)) throw ConfigError("fine_tune_lr must be > 0");
  if (p.eval_edge_vox < 1) throw ConfigError("eval_edge_vox must be >= 1");
  validate(p.phantom);
  validate(p.injection);
}

std::string anatomy_id(const PhantomSpec& spec) {
  PhantomSpec s = spec;
  s.n_nodules = 0;
  s.placement = NodulePlacement::interior;
  return phantom_id(s);
}

void check_disjoint(const std::vector<std::string>& training, const std::vector<std::string>& evaluation) {
  const std::set<std::string> seen(training.begin(), training.end());
  for (const auto& id : evaluation)
    if (seen.count(id)) throw DataError("evaluation set contamination: phantom anatomy " + id + " is also used for training");
}

namespace {

struct EvalCaseData {
  Phantom phantom;
  std::vector<Index3> centers;
};

std::vector<LabeledSlice> all_slices(const Phantom& p) {
  std::vector<LabeledSlice> out;
  for (int z = 0; z < p.ct.grid.dims.nz; ++z) {
    const Slice s = axial_slice(p.ct, p.lung, z);
    out.push_back({s.image, s.label});
  }
  return out;
}

std::vector<MetricsReport> evaluate_set(const SegNet& net, const std::vector<EvalCaseData>& eval, int edge,
                                        const HuWindow& w) {
  std::vector<MetricsReport> out;
  for (const auto& e : eval) {
    const BinaryMask pred = segment_volume(net, e.phantom.ct, w);
    for (const Index3& c : e.centers) out.push_back(evaluate_voi(pred, e.phantom.lung, c, edge));
  }
  return out;
}

MetricsReport mean_of(const std::vector<MetricsReport>& v) {
  MetricsReport m;
  for (const auto& r : v) {
    m.dice += r.dice;
    m.hausdorff_mm += r.hausdorff_mm;
    m.asd_mm += r.asd_mm;
  }
  m.dice /= double(v.size());
  m.hausdorff_mm /= double(v.size());
  m.asd_mm /= double(v.size());
  return m;
}

MetricsReport worst_of(const std::vector<MetricsReport>& v) {
  MetricsReport m;
  m.dice = 1;
  for (const auto& r : v) {
    m.dice = std::min(m.dice, r.dice);
    m.hausdorff_mm = std::max(m.hausdorff_mm, r.hausdorff_mm);
    m.asd_mm = std::max(m.asd_mm, r.asd_mm);
  }
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentPlan& plan,
                                const std::map<AugmentationSource, GeneratorNet>& generators) {
  validate(plan);
  for (auto arm : plan.arms)
    if (arm != AugmentationSource::none && !generators.count(arm))
      throw ConfigError("no generator checkpoint for arm " + to_string(arm));

  ExperimentReport report;
  for (const std::uint64_t seed : plan.seeds) {
    auto spec_for = [&](std::uint64_t block, int i, NodulePlacement placement, int nodules) {
      PhantomSpec s = plan.phantom;
      s.seed = block + 1000 * seed + std::uint64_t(i);
      s.placement = placement;
      s.n_nodules = nodules;
      return s;
    };
    std::vector<PhantomSpec> train_specs, aug_specs, eval_specs;
    for (int i = 0; i < plan.n_train_phantoms; ++i)
      train_specs.push_back(spec_for(plan.train_seed_block, i, NodulePlacement::interior, plan.phantom.n_nodules));
    for (int i = 0; i < plan.n_augment_phantoms; ++i)
      aug_specs.push_back(spec_for(plan.augment_seed_block, i, NodulePlacement::interior, 0));
    for (int i = 0; i < plan.n_eval_phantoms; ++i)
      eval_specs.push_back(spec_for(plan.eval_seed_block, i, NodulePlacement::boundary, plan.phantom.n_nodules));

    std::vector<std::string> training, evaluation;
    for (const auto& s : train_specs) training.push_back(anatomy_id(s));
    for (const auto& s : aug_specs) training.push_back(anatomy_id(s));
    for (const auto& s : eval_specs) evaluation.push_back(anatomy_id(s));
    check_disjoint(training, evaluation);
    for (const auto& s : train_specs) report.train_ids.push_back(phantom_id(s));
    for (const auto& s : aug_specs) report.augment_ids.push_back(phantom_id(s));
    for (const auto& s : eval_specs) report.eval_ids.push_back(phantom_id(s));

    std::vector<LabeledSlice> base_data;
    for (const auto& s : train_specs) {
      const auto slices = all_slices(generate_phantom(s));
      base_data.insert(base_data.end(), slices.begin(), slices.end());
    }
    std::vector<EvalCaseData> eval;
    for (const auto& s : eval_specs) {
      EvalCaseData e{generate_phantom(s), {}};
      for (const auto& m : e.phantom.nodules) {
        const Vec3 c = m.grid.to_voxel(bbox_center_mm(m));
        e.centers.push_back({int(std::lround(c.x)), int(std::lround(c.y)), int(std::lround(c.z))});
      }
      eval.push_back(std::move(e));
    }
    std::vector<Phantom> hosts;
    for (const auto& s : aug_specs) hosts.push_back(generate_phantom(s));

    SegTrainConfig seg = plan.seg;
    seg.seed = hash64(plan.seg.seed, seed);
    seg.epochs = plan.base_epochs;
    SegNet baseline = new_segmenter(seg);
    train_segmenter(baseline, base_data, seg);
    const std::vector<MetricsReport> before = evaluate_set(baseline, eval, plan.eval_edge_vox, seg.window);

    for (const auto arm : plan.arms) {
      ArmResult r;
      r.arm = to_string(arm);
      r.seed = seed;
      r.before = mean_of(before);
      r.worst_before = worst_of(before);
      r.n_cases = int(before.size());
      if (arm == AugmentationSource::none) {
        r.after = r.before;
        r.worst_after = r.worst_before;
        report.rows.push_back(r);
        continue;
      }
      const GeneratorNet& g = generators.at(arm);
      std::vector<LabeledSlice> ft;
      for (std::size_t i = 0; i < hosts.size(); ++i) {
        InjectionSpec inj = plan.injection;
        inj.seed = hash64(hash64(plan.injection.seed, seed), i);
        VoiOptions voi;
        voi.voi_edge = g.config().voi_edge;
        const AugmentResult a = augment_volume(hosts[i].ct, hosts[i].lung, inj, g, voi);
        if (a.records.empty()) continue;
        for (const Slice& s : collect_slices(a.volume, a.records, hosts[i].lung)) ft.push_back({s.image, s.label});
      }
      if (ft.empty()) throw DataError("arm " + r.arm + " produced no fine-tuning slices");
      r.n_fine_tune_slices = int(ft.size());
      SegNet tuned = baseline.clone();
      SegTrainConfig ftc = seg;
      ftc.epochs = plan.fine_tune_epochs;
      ftc.lr = plan.fine_tune_lr;
      ftc.seed = hash64(seg.seed, 0xf1e);
      train_segmenter(tuned, ft, ftc);
      const std::vector<MetricsReport> after = evaluate_set(tuned, eval, plan.eval_edge_vox, seg.window);
      r.after = mean_of(after);
      r.worst_after = worst_of(after);
      report.rows.push_back(r);
    }
  }
  return report;
}

DeltaSummary summarize_arm(const ExperimentReport& r, const std::string& arm) {
  std::vector<double> dd, dh, da;
  DeltaSummary s;
  for (const auto& row : r.rows) {
    if (row.arm != arm) continue;
    dd.push_back(row.after.dice - row.before.dice);
    dh.push_back(row.after.hausdorff_mm - row.before.hausdorff_mm);
    da.push_back(row.after.asd_mm - row.before.asd_mm);
    s.all_zero = s.all_zero && dd.back() == 0 && dh.back() == 0 && da.back() == 0;
  }
  if (dd.empty()) throw DataError("no rows for arm " + arm);
  s.median_dice_delta = median(dd);
  s.median_hd_delta = median(dh);
  s.median_asd_delta = median(da);
  return s;
}

namespace {

std::vector<std::string> arm_order(const ExperimentReport& r) {
  std::vector<std::string> arms;
  for (const auto& row : r.rows)
    if (std::find(arms.begin(), arms.end(), row.arm) == arms.end()) arms.push_back(row.arm);
  return arms;
}

std::string csv_row(const std::string& arm, const std::string& seed, const MetricsReport& b, const MetricsReport& a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", arm.c_str(), seed.c_str(), b.dice, a.dice,
                b.hausdorff_mm, a.hausdorff_mm, b.asd_mm, a.asd_mm);
  return buf;
}

struct ArmAggregate {
  MetricsReport median_before, median_after, worst_before, worst_after;
};

ArmAggregate aggregate(const ExperimentReport& r, const std::string& arm) {
  std::vector<double> v[6];
  ArmAggregate g;
  g.worst_before.dice = g.worst_after.dice = 1;
  for (const auto& row : r.rows) {
    if (row.arm != arm) continue;
    v[0].push_back(row.before.dice);
    v[1].push_back(row.after.dice);
    v[2].push_back(row.before.hausdorff_mm);
    v[3].push_back(row.after.hausdorff_mm);
    v[4].push_back(row.before.asd_mm);
    v[5].push_back(row.after.asd_mm);
    g.worst_before.dice = std::min(g.worst_before.dice, row.worst_before.dice);
    g.worst_after.dice = std::min(g.worst_after.dice, row.worst_after.dice);
    g.worst_before.hausdorff_mm = std::max(g.worst_before.hausdorff_mm, row.worst_before.hausdorff_mm);
    g.worst_after.hausdorff_mm = std::max(g.worst_after.hausdorff_mm, row.worst_after.hausdorff_mm);
    g.worst_before.asd_mm = std::max(g.worst_before.asd_mm, row.worst_before.asd_mm);
    g.worst_after.asd_mm = std::max(g.worst_after.asd_mm, row.worst_after.asd_mm);
  }
  auto set = [](MetricsReport& m, double d, double h, double a) {
    m.dice = d;
    m.hausdorff_mm = h;
    m.asd_mm = a;
  };
  set(g.median_before, median(v[0]), median(v[2]), median(v[4]));
  set(g.median_after, median(v[1]), median(v[3]), median(v[5]));
  return g;
}

}  // namespace

std::string experiment_csv(const ExperimentReport& r) {
  std::string s = "arm,seed,dice_before,dice_after,hd_before_mm,hd_after_mm,asd_before_mm,asd_after_mm\n";
  for (const auto& row : r.rows) s += csv_row(row.arm, std::to_string(row.seed), row.before, row.after);
  for (const auto& arm : arm_order(r)) {
    const ArmAggregate g = aggregate(r, arm);
    s += csv_row(arm, "median", g.median_before, g.median_after);
    s += csv_row(arm, "worst", g.worst_before, g.worst_after);
  }
  return s;
}

std::string experiment_svg(const ExperimentReport& r) {
  const std::vector<std::string> arms = arm_order(r);
  const int panel_w = 60 + 90 * int(arms.size()), panel_h = 260, top = 40;
  const char* titles[3] = {"Dice", "Hausdorff (mm)", "ASD (mm)"};
  std::vector<ArmAggregate> agg;
  for (const auto& a : arms) agg.push_back(aggregate(r, a));
  auto value = [](const MetricsReport& m, int k) { return k == 0 ? m.dice : k == 1 ? m.hausdorff_mm : m.asd_mm; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 3 * panel_w << "\" height=\"" << panel_h + 80
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k < 3; ++k) {
    double top_value = 0;
    for (const auto& g : agg) top_value = std::max({top_value, value(g.median_before, k), value(g.median_after, k)});
    if (top_value <= 0) top_value = 1;
    const int x0 = k * panel_w + 40;
    o << "<text x=\"" << x0 << "\" y=\"20\" font-size=\"13\">" << titles[k] << " (median over seeds)</text>\n";
    o << "<line x1=\"" << x0 << "\" y1=\"" << top + panel_h - 40 << "\" x2=\"" << x0 + 90 * arms.size()
      << "\" y2=\"" << top + panel_h - 40 << "\" stroke=\"black\"/>\n";
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const double vals[2] = {value(agg[a].median_before, k), value(agg[a].median_after, k)};
      for (int b = 0; b < 2; ++b) {
        const double h = (panel_h - 60) * vals[b] / top_value;
        const double x = x0 + 90.0 * a + 10 + 34 * b;
        o << "<rect x=\"" << x << "\" y=\"" << top + panel_h - 40 - h << "\" width=\"30\" height=\"" << h
          << "\" fill=\"" << (b ? "#d95f02" : "#7570b3") << "\"/>\n";
        char label[32];
        std::snprintf(label, sizeof label, "%.3g", vals[b]);
        o << "<text x=\"" << x << "\" y=\"" << top + panel_h - 44 - h << "\" font-size=\"9\">" << label << "</text>\n";
      }
      o << "<text x=\"" << x0 + 90 * a + 8 << "\" y=\"" << top + panel_h - 24 << "\">" << arms[a] << "</text>\n";
    }
  }
  o << "<rect x=\"40\" y=\"" << panel_h + 50 << "\" width=\"12\" height=\"12\" fill=\"#7570b3\"/><text x=\"56\" y=\""
    << panel_h + 60 << "\">before fine-tuning</text>\n";
  o << "<rect x=\"190\" y=\"" << panel_h + 50 << "\" width=\"12\" height=\"12\" fill=\"#d95f02\"/><text x=\"206\" y=\""
    << panel_h + 60 << "\">after fine-tuning</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace ngan

#include "nodulegan/cgan.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "nodulegan/error.hpp"

namespace ngan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const ConvGeometry kDown = ConvGeometry::cubic(4, 2, 1);

void check_widths(const std::array<int, 5>& w, const char* what) {
  for (int c : w)
    if (c <= 0) throw ConfigError(std::string(what) + " widths must be positive");
}

void check_edge(int edge) {
  if (edge < 32 || edge % 32 != 0)
    throw ConfigError("voi_edge must be a positive multiple of 32, got " + std::to_string(edge));
}

void check_volume_input(const Tensor& x, int edge, const char* who) {
  if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != edge || x.dim(3) != edge || x.dim(4) != edge)
    throw ShapeError(std::string(who) + ": expected input (B,1," + std::to_string(edge) + "," +
                     std::to_string(edge) + "," + std::to_string(edge) + "), got " + shape_str(x.shape()));
}

}  // namespace

// ---- networks ------------------------------------------------------------------

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg) : cfg_(cfg) {
  check_edge(cfg.voi_edge);
  check_widths(cfg.widths, "generator");
  if (!(cfg.dropout_rate >= 0 && cfg.dropout_rate < 1)) throw ConfigError("dropout_rate must lie in [0, 1)");
  const auto& w = cfg.widths;
  int in = 1;
  for (int i = 0; i < 5; ++i) {
    enc[i] = Conv3dLayer(in, w[i], kDown);
    in = w[i];
  }
  // decoder level i produces w[3-i] channels and is joined with encoder level 4-i
  for (int i = 0; i < 5; ++i) {
    const int out = i < 4 ? w[3 - i] : 1;
    dec[i] = ConvTranspose3dLayer(in, out, kDown);
    in = out + (cfg.skips && i < 4 ? w[3 - i] : 0);
  }
}

void GeneratorNet::init_normal(RngStream& rng, double sigma) {
  for (auto& l : enc) l.init_normal(rng, sigma);
  for (auto& l : dec) l.init_normal(rng, sigma);
}

namespace {

// Fan-in of one output voxel; a stride-s transposed layer sees k^3 / s^3 taps.
double fan_in(const Tensor& w, const ConvGeometry& g, bool transposed) {
  const double taps = double(g.kernel[0]) * g.kernel[1] * g.kernel[2];
  if (!transposed) return w.dim(1) * taps;
  return w.dim(0) * taps / (double(g.stride[0]) * g.stride[1] * g.stride[2]);
}

template <class Layer>
void he_layer(Layer& l, RngStream& rng, bool transposed) {
  l.init_normal(rng, std::sqrt(2.0 / fan_in(l.weight, l.geometry, transposed)));
}

}  // namespace

void GeneratorNet::init_he(RngStream& rng) {
  for (auto& l : enc) he_layer(l, rng, false);
  for (auto& l : dec) he_layer(l, rng, true);
}

Tensor GeneratorNet::forward(const Tensor& x, RngStream& rng) const {
  check_volume_input(x, cfg_.voi_edge, "generator");
  std::array<Tensor, 5> e;
  Tensor h = x;
  for (int i = 0; i < 5; ++i) {
    h = leaky_relu(enc[i].forward(h), 0.2);
    e[i] = h;
  }
  for (int i = 0; i < 4; ++i) {
    h = relu(dec[i].forward(h));
    if (i < 2) h = dropout(h, cfg_.dropout_rate, rng);
    if (cfg_.skips) h = concat_channels(h, e[3 - i]);
  }
  return tanh(dec[4].forward(h));
}

ParamList GeneratorNet::parameters() const {
  ParamList out;
  for (int i = 0; i < 5; ++i) enc[i].collect("enc" + std::to_string(i + 1), out);
  for (int i = 0; i < 5; ++i) dec[i].collect("dec" + std::to_string(i + 1), out);
  return out;
}

DiscriminatorNet::DiscriminatorNet(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  check_edge(cfg.voi_edge);
  check_widths(cfg.widths, "discriminator");
  int in = 2;
  for (int i = 0; i < 5; ++i) {
    conv[i] = Conv3dLayer(in, cfg.widths[i], kDown);
    in = cfg.widths[i];
  }
  const int rest = cfg.voi_edge / 32;
  head = Conv3dLayer(in, 1, ConvGeometry::cubic(rest, 1, 0));
}

void DiscriminatorNet::init_normal(RngStream& rng, double sigma) {
  for (auto& l : conv) l.init_normal(rng, sigma);
  head.init_normal(rng, sigma);
}

void DiscriminatorNet::init_he(RngStream& rng) {
  for (auto& l : conv) he_layer(l, rng, false);
  he_layer(head, rng, false);
}

Tensor DiscriminatorNet::logits(const Tensor& x, const Tensor& candidate) const {
  check_volume_input(x, cfg_.voi_edge, "discriminator");
  check_volume_input(candidate, cfg_.voi_edge, "discriminator");
  Tensor h = concat_channels(x, candidate);
  for (const auto& l : conv) h = leaky_relu(l.forward(h), 0.2);
  return head.forward(h);
}

Tensor DiscriminatorNet::probability(const Tensor& x, const Tensor& candidate) const {
  return sigmoid(logits(x, candidate));
}

ParamList DiscriminatorNet::parameters() const {
  ParamList out;
  for (int i = 0; i < 5; ++i) conv[i].collect("conv" + std::to_string(i + 1), out);
  head.collect("head", out);
  return out;
}

// ---- losses ------------------------------------------------------------------------

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::multimask: return "multimask";
    case LossVariant::erased_only: return "erased_only";
    case LossVariant::all_image_l1_only: return "all_image_l1_only";
    case LossVariant::all_image_l1_plus_adv: return "all_image_l1_plus_adv";
  }
  return "?";
}

LossVariant loss_variant_from_string(const std::string& s) {
  for (auto v : {LossVariant::multimask, LossVariant::erased_only, LossVariant::all_image_l1_only,
                 LossVariant::all_image_l1_plus_adv})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown loss_variant '" + s +
                    "' (multimask, erased_only, all_image_l1_only, all_image_l1_plus_adv)");
}

std::string to_string(InitScheme s) { return s == InitScheme::normal ? "normal" : "he"; }

InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "normal") return InitScheme::normal;
  if (s == "he") return InitScheme::he;
  throw ConfigError("init must be normal or he, got '" + s + "'");
}

std::string to_string(FakeForD f) { return f == FakeForD::composite ? "composite" : "raw"; }

FakeForD fake_for_d_from_string(const std::string& s) {
  if (s == "composite") return FakeForD::composite;
  if (s == "raw") return FakeForD::raw;
  throw ConfigError("fake_for_d must be composite or raw, got '" + s + "'");
}

namespace {

struct MaskSums {
  std::vector<double> m, band;  // per sample voxel counts
};

MaskSums mask_sums(const Tensor& y, const Tensor& g, const Tensor& m, const Tensor& n) {
  if (y.shape() != g.shape() || y.shape() != m.shape() || y.shape() != n.shape())
    throw ShapeError("reconstruction loss: shapes " + shape_str(y.shape()) + ", " + shape_str(g.shape()) +
                     ", " + shape_str(m.shape()) + ", " + shape_str(n.shape()) + " differ");
  const int B = y.dim(0);
  const std::size_t per = y.numel() / B;
  MaskSums s{std::vector<double>(B, 0.0), std::vector<double>(B, 0.0)};
  const auto mv = m.values(), nv = n.values();
  for (int b = 0; b < B; ++b)
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      if (mv[i] > nv[i]) throw DataError("reconstruction loss: M is not contained in N");
      s.m[b] += mv[i];
      s.band[b] += nv[i] - mv[i];
    }
  return s;
}

// Per-sample mean |y-g| over M and over the band, averaged over the batch.
void report_terms(L1Terms& t, const Tensor& y, const Tensor& g, const Tensor& m, const Tensor& n,
                  const MaskSums& s) {
  const int B = y.dim(0);
  const std::size_t per = y.numel() / B;
  const auto yv = y.values(), gv = g.values(), mv = m.values(), nv = n.values();
  double tm = 0, tb = 0;
  int nb = 0, nm = 0;
  for (int b = 0; b < B; ++b) {
    double am = 0, ab = 0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      const double e = std::abs(yv[i] - gv[i]);
      am += mv[i] * e;
      ab += (nv[i] - mv[i]) * e;
    }
    if (s.m[b] > 0) tm += am / s.m[b], ++nm;
    if (s.band[b] > 0) tb += ab / s.band[b], ++nb;
  }
  t.term_m = nm ? tm / nm : 0.0;
  t.term_band = nb ? tb / nb : 0.0;
}

}  // namespace

L1Terms loss_multimask_l1(const Tensor& y, const Tensor& g_out, const Tensor& m, const Tensor& n,
                          double alpha) {
  const MaskSums s = mask_sums(y, g_out, m, n);
  const int B = y.dim(0);
  const std::size_t per = y.numel() / B;
  std::vector<double> w(y.numel());
  const auto mv = m.values(), nv = n.values();
  for (int b = 0; b < B; ++b) {
    if (s.m[b] == 0) throw DataError("multi-mask L1: empty erasure mask M in sample " + std::to_string(b));
    if (s.band[b] == 0) throw DataError("multi-mask L1: empty band N-M in sample " + std::to_string(b));
    const double wm = 1.0 / (s.m[b] * B), wb = alpha / (s.band[b] * B);
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) w[i] = mv[i] * wm + (nv[i] - mv[i]) * wb;
  }
  L1Terms t;
  t.total = weighted_l1(g_out, y, Tensor::from(y.shape(), std::move(w)));
  report_terms(t, y, g_out, m, n, s);
  return t;
}

L1Terms reconstruction_loss(LossVariant v, const Tensor& y, const Tensor& g_out, const Tensor& m,
                            const Tensor& n, double alpha) {
  if (v == LossVariant::multimask) return loss_multimask_l1(y, g_out, m, n, alpha);
  const MaskSums s = mask_sums(y, g_out, m, n);
  const int B = y.dim(0);
  const std::size_t per = y.numel() / B;
  std::vector<double> w(y.numel());
  if (v == LossVariant::erased_only) {
    const auto mv = m.values();
    for (int b = 0; b < B; ++b) {
      if (s.m[b] == 0) throw DataError("erased-only L1: empty erasure mask M in sample " + std::to_string(b));
      for (std::size_t i = b * per; i < (b + 1) * per; ++i) w[i] = mv[i] / (s.m[b] * B);
    }
  } else {
    std::fill(w.begin(), w.end(), 1.0 / double(y.numel()));
  }
  L1Terms t;
  t.total = weighted_l1(g_out, y, Tensor::from(y.shape(), std::move(w)));
  report_terms(t, y, g_out, m, n, s);
  return t;
}

Tensor loss_discriminator(const Tensor& logits_real, const Tensor& logits_fake) {
  return add(mean(softplus(scale(logits_real, -1.0))), mean(softplus(logits_fake)));
}

Tensor loss_generator_adversarial(const Tensor& logits_fake) {
  return mean(softplus(scale(logits_fake, -1.0)));
}

Tensor loss_generator(const Tensor& logits_fake, const Tensor& l1, double lambda) {
  return add(loss_generator_adversarial(logits_fake), scale(l1, lambda));
}

Volume composite(const Volume& x, const Volume& g_out, const BinaryMask& m) {
  require_same_grid(x.grid, g_out.grid, "composite");
  require_same_grid(x.grid, m.grid, "composite");
  Volume out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (m.data[i]) out.data[i] = g_out.data[i];
  return out;
}

double boundary_jump(const Volume& v, const BinaryMask& m) {
  require_same_grid(v.grid, m.grid, "boundary_jump");
  const auto& d = v.grid.dims;
  static const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  double sum = 0;
  std::size_t count = 0;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        if (!m.at(x, y, z)) continue;
        for (const auto& o : off) {
          const int a = x + o[0], b = y + o[1], c = z + o[2];
          if (!d.contains(a, b, c) || m.at(a, b, c)) continue;
          sum += std::abs(double(v.at(x, y, z)) - double(v.at(a, b, c)));
          ++count;
        }
      }
  if (count == 0) throw DataError("boundary_jump: mask has no interior/exterior voxel pairs");
  return sum / double(count);
}

// ---- configuration ------------------------------------------------------------------

TrainConfig desk_train_config() {
  TrainConfig c;
  c.voi_edge = 32;
  c.batch_size = 4;
  c.steps = 500;
  c.g_widths = {8, 16, 32, 64, 64};
  c.d_widths = c.g_widths;
  return c;
}

void validate(const TrainConfig& c) {
  if (!(c.alpha >= 1)) throw ConfigError("alpha must be >= 1, got " + std::to_string(c.alpha));
  if (!(c.lambda >= 0)) throw ConfigError("lambda must be >= 0, got " + std::to_string(c.lambda));
  if (!(c.lr > 0)) throw ConfigError("lr must be positive");
  if (!(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (c.epochs < 1 && c.steps <= 0) throw ConfigError("epochs must be >= 1 when steps is not set");
  if (c.steps < 0) throw ConfigError("steps must be >= 0");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.dropout_rate >= 0 && c.dropout_rate < 1)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(c.dilation_radius > 0)) throw ConfigError("dilation_radius must be positive");
  if (!(c.init_sigma > 0)) throw ConfigError("init_sigma must be positive");
  check_edge(c.voi_edge);
  check_widths(c.g_widths, "generator");
  check_widths(c.d_widths, "discriminator");
}

namespace {

json config_to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"lambda", c.lambda},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epochs", c.epochs},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"dropout_rate", c.dropout_rate},
          {"dilation_radius", c.dilation_radius},
          {"seed", c.seed},
          {"loss_variant", to_string(c.loss_variant)},
          {"fake_for_d", to_string(c.fake_for_d)},
          {"voi_edge", c.voi_edge},
          {"g_widths", c.g_widths},
          {"d_widths", c.d_widths},
          {"skips", c.skips},
          {"init", to_string(c.init)},
          {"init_sigma", c.init_sigma}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.alpha = j.at("alpha");
    c.lambda = j.at("lambda");
    c.lr = j.at("lr");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.epochs = j.at("epochs");
    c.steps = j.at("steps");
    c.batch_size = j.at("batch_size");
    c.dropout_rate = j.at("dropout_rate");
    c.dilation_radius = j.at("dilation_radius");
    c.seed = j.at("seed");
    c.loss_variant = loss_variant_from_string(j.at("loss_variant"));
    c.fake_for_d = fake_for_d_from_string(j.at("fake_for_d"));
    c.voi_edge = j.at("voi_edge");
    c.g_widths = j.at("g_widths");
    c.d_widths = j.at("d_widths");
    c.skips = j.at("skips");
    c.init = init_scheme_from_string(j.at("init"));
    c.init_sigma = j.at("init_sigma");
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  return c;
}

}  // namespace

// ---- batches and training --------------------------------------------------------------

Batch make_batch(const std::vector<VoiPair>& pairs, const std::vector<int>& indices) {
  if (indices.empty()) throw DataError("make_batch: no samples");
  const Dims3 d = pairs.at(indices[0]).y.grid.dims;
  const int B = int(indices.size());
  const Shape shape{B, 1, d.nz, d.ny, d.nx};
  const std::size_t per = d.count();
  std::vector<double> x(B * per), y(B * per), m(B * per), n(B * per);
  for (int b = 0; b < B; ++b) {
    const VoiPair& p = pairs.at(indices[b]);
    if (!(p.y.grid.dims == d)) throw ShapeError("make_batch: pairs have different VOI extents");
    for (std::size_t i = 0; i < per; ++i) {
      x[b * per + i] = p.x.data[i];
      y[b * per + i] = p.y.data[i];
      m[b * per + i] = p.m.data[i];
      n[b * per + i] = p.n.data[i];
    }
  }
  return {Tensor::from(shape, std::move(x)), Tensor::from(shape, std::move(y)), Tensor::from(shape, std::move(m)),
          Tensor::from(shape, std::move(n))};
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<VoiPair> pairs) : cfg_(cfg), pairs_(std::move(pairs)) {
  build();
  RngStream init(cfg_.seed);
  RngStream gi = init.fork(0x47), di = init.fork(0x44);
  if (cfg_.init == InitScheme::he) {
    g_.init_he(gi);
    d_.init_he(di);
  } else {
    g_.init_normal(gi, cfg_.init_sigma);
    d_.init_normal(di, cfg_.init_sigma);
  }
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<VoiPair> pairs) : cfg_(ckpt.config), pairs_(std::move(pairs)) {
  build();
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : ckpt.arrays) by_name[a.name] = &a;
  auto restore = [&](const std::string& name, std::span<double> dst, const Shape& shape) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks array '" + name + "'");
    if (it->second->shape != shape || it->second->values.size() != dst.size())
      throw FormatError("checkpoint array '" + name + "' has shape " + shape_str(it->second->shape) +
                        ", expected " + shape_str(shape));
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  };
  const ParamList gp = g_.parameters(), dp = d_.parameters();
  for (std::size_t k = 0; k < gp.size(); ++k) {
    Tensor t = gp[k].tensor;
    restore("G." + gp[k].name, t.values(), t.shape());
    restore("adamG.m1." + gp[k].name, g_opt_.first_moment[k], t.shape());
    restore("adamG.m2." + gp[k].name, g_opt_.second_moment[k], t.shape());
  }
  for (std::size_t k = 0; k < dp.size(); ++k) {
    Tensor t = dp[k].tensor;
    restore("D." + dp[k].name, t.values(), t.shape());
    restore("adamD.m1." + dp[k].name, d_opt_.first_moment[k], t.shape());
    restore("adamD.m2." + dp[k].name, d_opt_.second_moment[k], t.shape());
  }
  step_ = ckpt.step;
  g_opt_.step = ckpt.g_adam_step;
  d_opt_.step = ckpt.d_adam_step;
}

void Trainer::build() {
  validate(cfg_);
  if (pairs_.empty()) throw DataError("training needs at least one VOI pair");
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const std::string why = validate_voi_pair(pairs_[i], -1.0);
    if (!why.empty()) throw DataError("pair " + std::to_string(i) + " is degenerate: " + why);
    if (!(pairs_[i].y.grid.dims == Dims3::cube(cfg_.voi_edge)))
      throw DataError("pair " + std::to_string(i) + " is not " + std::to_string(cfg_.voi_edge) + "^3");
  }
  g_ = GeneratorNet(GeneratorConfig{cfg_.voi_edge, cfg_.g_widths, cfg_.dropout_rate, cfg_.skips});
  d_ = DiscriminatorNet(DiscriminatorConfig{cfg_.voi_edge, cfg_.d_widths});
  const AdamConfig ac{cfg_.lr, cfg_.beta1, cfg_.beta2, 1e-8};
  g_opt_ = AdamState{ac, {}, {}, 0};
  d_opt_ = AdamState{ac, {}, {}, 0};
  for (const auto& p : g_.parameters()) {
    g_opt_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    g_opt_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
  for (const auto& p : d_.parameters()) {
    d_opt_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    d_opt_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

std::int64_t Trainer::steps_per_epoch() const {
  const int B = std::min<int>(cfg_.batch_size, int(pairs_.size()));
  return std::max<std::int64_t>(1, std::int64_t(pairs_.size()) / B);
}

std::int64_t Trainer::total_steps() const {
  return cfg_.steps > 0 ? cfg_.steps : std::int64_t(cfg_.epochs) * steps_per_epoch();
}

std::vector<int> Trainer::batch_indices(std::int64_t step) const {
  const std::int64_t spe = steps_per_epoch();
  const std::int64_t epoch = step / spe, pos = step % spe;
  std::vector<int> perm(pairs_.size());
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng = RngStream(cfg_.seed).fork(0x0e0c0000ULL + std::uint64_t(epoch));
  for (int i = int(perm.size()) - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  const int B = std::min<int>(cfg_.batch_size, int(pairs_.size()));
  return {perm.begin() + pos * B, perm.begin() + (pos + 1) * B};
}

StepRecord Trainer::step() {
  const Batch b = make_batch(pairs_, batch_indices(step_));
  RngStream drop = RngStream(cfg_.seed).fork(hash64(0xd50f, std::uint64_t(step_)));
  const ParamList gp = g_.parameters(), dp = d_.parameters();
  const std::vector<Tensor> gt = tensors_of(gp), dt = tensors_of(dp);
  const bool adversarial = cfg_.loss_variant != LossVariant::all_image_l1_only;

  const Tensor g_out = g_.forward(b.x, drop);
  const Tensor fake = cfg_.fake_for_d == FakeForD::composite ? blend(g_out, b.x, b.m) : g_out;

  StepRecord r;
  if (adversarial) {
    zero_grads(dp);
    const Tensor ld = loss_discriminator(d_.logits(b.x, b.y), d_.logits(b.x, fake.detach()));
    ld.backward();
    adam_step(dt, d_opt_);
    r.d_loss = ld.item();
  }

  zero_grads(gp);
  set_requires_grad(dp, false);
  const L1Terms l1 = reconstruction_loss(cfg_.loss_variant, b.y, g_out, b.m, b.n, cfg_.alpha);
  Tensor total;
  if (adversarial) {
    const Tensor adv = loss_generator_adversarial(d_.logits(b.x, fake));
    r.g_adv = adv.item();
    total = add(adv, scale(l1.total, cfg_.lambda));
  } else {
    total = scale(l1.total, cfg_.lambda);
  }
  total.backward();
  set_requires_grad(dp, true);
  adam_step(gt, g_opt_);

  ++step_;
  r.step = step_;
  r.g_l1_m = l1.term_m;
  r.g_l1_band = l1.term_band;
  r.d_updates = d_opt_.step;
  r.g_updates = g_opt_.step;
  return r;
}

void Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  while (step_ < total_steps()) {
    const StepRecord r = step();
    if (on_step) on_step(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.step = step_;
  c.rng_seed = cfg_.seed;
  c.rng_counter = std::uint64_t(step_);
  c.g_adam_step = g_opt_.step;
  c.d_adam_step = d_opt_.step;
  const ParamList gp = g_.parameters(), dp = d_.parameters();
  auto put = [&](const std::string& name, const Shape& shape, std::span<const double> v) {
    c.arrays.push_back({name, shape, std::vector<double>(v.begin(), v.end())});
  };
  for (const auto& p : gp) put("G." + p.name, p.tensor.shape(), p.tensor.values());
  for (const auto& p : dp) put("D." + p.name, p.tensor.shape(), p.tensor.values());
  for (std::size_t k = 0; k < gp.size(); ++k) {
    put("adamG.m1." + gp[k].name, gp[k].tensor.shape(), g_opt_.first_moment[k]);
    put("adamG.m2." + gp[k].name, gp[k].tensor.shape(), g_opt_.second_moment[k]);
  }
  for (std::size_t k = 0; k < dp.size(); ++k) {
    put("adamD.m1." + dp[k].name, dp[k].tensor.shape(), d_opt_.first_moment[k]);
    put("adamD.m2." + dp[k].name, dp[k].tensor.shape(), d_opt_.second_moment[k]);
  }
  return c;
}

GeneratorNet generator_from_checkpoint(const Checkpoint& c) {
  validate(c.config);
  GeneratorNet g(GeneratorConfig{c.config.voi_edge, c.config.g_widths, c.config.dropout_rate, c.config.skips});
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : c.arrays) by_name[a.name] = &a;
  for (const auto& p : g.parameters()) {
    auto it = by_name.find("G." + p.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks generator array 'G." + p.name + "'");
    if (it->second->shape != p.tensor.shape())
      throw FormatError("checkpoint array 'G." + p.name + "' has shape " + shape_str(it->second->shape) +
                        ", expected " + shape_str(p.tensor.shape()));
    Tensor t = p.tensor;
    std::copy(it->second->values.begin(), it->second->values.end(), t.values().begin());
  }
  return g;
}

// ---- checkpoint files ------------------------------------------------------------------

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  if (p.extension() == ".json" || p.extension() == ".bin") p.replace_extension();
  return p.concat(ext);
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& stem) {
  static_assert(std::endian::native == std::endian::little, "f64le blobs assume a little-endian host");
  const fs::path manifest = with_ext(stem, ".json"), blob = with_ext(stem, ".bin");
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  json arrays = json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    if (shape_numel(a.shape) != a.values.size())
      throw ShapeError("checkpoint array '" + a.name + "' does not match its shape");
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
    offset += a.values.size() * sizeof(double);
  }
  const json j = {{"format", "nodulegan-checkpoint"},
                  {"version", 1},
                  {"config", config_to_json(c.config)},
                  {"step", c.step},
                  {"rng", {{"seed", c.rng_seed}, {"counter", c.rng_counter}}},
                  {"adam", {{"g_step", c.g_adam_step}, {"d_step", c.d_adam_step}}},
                  {"blob", blob.filename().string()},
                  {"blob_bytes", offset},
                  {"arrays", arrays}};
  {
    std::ofstream out(blob, std::ios::binary);
    if (!out) throw IoError("cannot write " + blob.string());
    for (const auto& a : c.arrays)
      out.write(reinterpret_cast<const char*>(a.values.data()), std::streamsize(a.values.size() * sizeof(double)));
    if (!out) throw IoError("write failed for " + blob.string());
  }
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& stem) {
  const fs::path manifest = with_ext(stem, ".json");
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open checkpoint manifest " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  Checkpoint c;
  std::uint64_t expected = 0;
  fs::path blob;
  try {
    if (j.at("format") != "nodulegan-checkpoint") throw FormatError("not a nodulegan checkpoint: " + manifest.string());
    c.config = config_from_json(j.at("config"));
    c.step = j.at("step");
    c.rng_seed = j.at("rng").at("seed");
    c.rng_counter = j.at("rng").at("counter");
    c.g_adam_step = j.at("adam").at("g_step");
    c.d_adam_step = j.at("adam").at("d_step");
    expected = j.at("blob_bytes");
    blob = manifest.parent_path() / j.at("blob").get<std::string>();
    std::uint64_t offset = 0;
    for (const auto& a : j.at("arrays")) {
      NamedArray na;
      na.name = a.at("name");
      na.shape = a.at("shape").get<Shape>();
      const std::uint64_t count = a.at("count"), off = a.at("offset");
      if (off != offset || count != shape_numel(na.shape))
        throw FormatError("checkpoint manifest: inconsistent layout at array '" + na.name + "'");
      na.values.resize(count);
      offset += count * sizeof(double);
      c.arrays.push_back(std::move(na));
    }
    if (offset != expected) throw FormatError("checkpoint manifest: arrays cover " + std::to_string(offset) +
                                              " bytes but blob_bytes is " + std::to_string(expected));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  std::error_code ec;
  const auto size = fs::file_size(blob, ec);
  if (ec) throw IoError("cannot open checkpoint blob " + blob.string());
  if (size != expected)
    throw FormatError("checkpoint blob " + blob.string() + " has " + std::to_string(size) +
                      " bytes, expected " + std::to_string(expected));
  std::ifstream bin(blob, std::ios::binary);
  for (auto& a : c.arrays)
    bin.read(reinterpret_cast<char*>(a.values.data()), std::streamsize(a.values.size() * sizeof(double)));
  if (!bin) throw IoError("read failed for " + blob.string());
  return c;
}

// ---- logging and evaluation ---------------------------------------------------------------

std::string loss_csv_header() { return "step,d_loss,g_adv,g_l1_m,g_l1_band"; }

std::string loss_csv_row(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.d_loss, r.g_adv,
                r.g_l1_m, r.g_l1_band);
  return buf;
}

Volume generate(const GeneratorNet& g, const Volume& x, RngStream& rng) {
  const Dims3 d = x.grid.dims;
  std::vector<double> v(x.data.begin(), x.data.end());
  const ParamList gp = g.parameters();
  set_requires_grad(gp, false);
  Tensor out;
  try {
    out = g.forward(Tensor::from({1, 1, d.nz, d.ny, d.nx}, std::move(v)), rng);
  } catch (...) {
    set_requires_grad(gp, true);
    throw;
  }
  set_requires_grad(gp, true);
  Volume r = x;
  const auto ov = out.values();
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = float(ov[i]);
  return r;
}

GeneratorEval evaluate_generator(const GeneratorNet& g, const std::vector<VoiPair>& pairs, std::uint64_t seed,
                                 int batch_size) {
  if (pairs.empty()) throw DataError("evaluate_generator: no pairs");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const ParamList gp = g.parameters();
  set_requires_grad(gp, false);
  GeneratorEval e;
  const int N = int(pairs.size());
  try {
    for (int start = 0, chunk = 0; start < N; start += batch_size, ++chunk) {
      std::vector<int> idx;
      for (int i = start; i < std::min(N, start + batch_size); ++i) idx.push_back(i);
      const Batch b = make_batch(pairs, idx);
      RngStream rng = RngStream(seed).fork(std::uint64_t(chunk));
      const Tensor out = g.forward(b.x, rng);
      const std::size_t per = pairs[0].y.data.size();
      const auto ov = out.values();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const VoiPair& p = pairs[idx[k]];
        Volume gv = p.y;
        for (std::size_t i = 0; i < per; ++i) gv.data[i] = float(ov[k * per + i]);
        double am = 0, ab = 0, cm = 0, cb = 0;
        for (std::size_t i = 0; i < per; ++i) {
          const double err = std::abs(double(p.y.data[i]) - double(gv.data[i]));
          if (p.m.data[i]) am += err, ++cm;
          else if (p.n.data[i]) ab += err, ++cb;
        }
        e.masked_l1 += cm ? am / cm : 0.0;
        e.band_l1 += cb ? ab / cb : 0.0;
        e.boundary_jump += boundary_jump(composite(p.x, gv, p.m), p.m);
      }
    }
  } catch (...) {
    set_requires_grad(gp, true);
    throw;
  }
  set_requires_grad(gp, true);
  e.masked_l1 /= N;
  e.band_l1 /= N;
  e.boundary_jump /= N;
  return e;
}

}  // namespace ngan

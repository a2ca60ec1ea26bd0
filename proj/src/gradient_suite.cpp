#include "nodulegan/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nodulegan/cgan.hpp"
#include "nodulegan/ops.hpp"

namespace ngan {

bool GradientSuiteReport::ok() const {
  return std::all_of(ops.begin(), ops.end(), [](const OpGradReport& o) { return o.result.ok(); });
}

std::size_t GradientSuiteReport::checked() const {
  std::size_t n = 0;
  for (const auto& o : ops) n += o.result.checked;
  return n;
}

std::size_t GradientSuiteReport::retried() const {
  std::size_t n = 0;
  for (const auto& o : ops) n += o.result.retried;
  return n;
}

double GradientSuiteReport::max_rel_error() const {
  double m = 0;
  for (const auto& o : ops) m = std::max(m, o.result.max_rel_error);
  return m;
}

namespace {

Tensor random_tensor(Shape s, RngStream& rng, bool grad, double lo = -1, double hi = 1) {
  Tensor t = Tensor::zeros(std::move(s), grad);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor probe(const Tensor& y, std::uint64_t seed) {
  RngStream rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng, false)));
}

class Suite {
 public:
  explicit Suite(double tol) { opts_.tolerance = tol; }

  void check(const std::string& op, const std::function<Tensor()>& f, std::vector<Tensor> inputs,
             const GradCheckOptions* custom = nullptr) {
    GradCheckOptions o = custom ? *custom : opts_;
    o.tolerance = opts_.tolerance;
    auto& r = results_[op];
    if (r.op.empty()) {
      r.op = op;
      order_.push_back(op);
    }
    r.result.merge(gradcheck(f, inputs, o));
    ++r.configs;
  }

  GradientSuiteReport report() const {
    GradientSuiteReport out;
    for (const auto& op : order_) out.ops.push_back(results_.at(op));
    return out;
  }

 private:
  GradCheckOptions opts_;
  std::map<std::string, OpGradReport> results_;
  std::vector<std::string> order_;
};

void engine_ops(Suite& s, RngStream& rng) {
  {
    const int ks[] = {1, 3, 4};
    const int k = ks[rng.uniform_int(0, 2)], st = rng.uniform_int(1, 2), p = rng.uniform_int(0, k > 1 ? 1 : 0);
    const ConvGeometry g = ConvGeometry::cubic(k, st, p);
    const int b = rng.uniform_int(1, 2), ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
    std::array<int, 3> in;
    for (int& v : in) v = rng.uniform_int(std::max(1, k - 2 * p), 6);
    Tensor x = random_tensor({b, ci, in[0], in[1], in[2]}, rng, true);
    Tensor w = random_tensor({co, ci, k, k, k}, rng, true);
    Tensor bias = random_tensor({co}, rng, true);
    s.check("conv3d", [=] { return probe(conv3d(x, w, bias, g), 1); }, {x, w, bias});
  }
  {
    const ConvGeometry g = rng.uniform() < 0.5 ? ConvGeometry::cubic(4, 2, 1) : ConvGeometry::cubic(3, 1, 1);
    const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3), n = rng.uniform_int(1, 3);
    Tensor x = random_tensor({1, ci, n, n + 1, n}, rng, true);
    Tensor w = random_tensor({ci, co, g.kernel[0], g.kernel[1], g.kernel[2]}, rng, true);
    Tensor b = random_tensor({co}, rng, true);
    s.check("conv_transpose3d", [=] { return probe(conv_transpose3d(x, w, b, g), 2); }, {x, w, b});
  }
  {
    Tensor x = random_tensor({2, 2, 2, 2, 2}, rng, true, -2, 2);
    for (double& v : x.values())
      if (std::abs(v) < 0.05) v += 0.1;
    const std::pair<const char*, ActivationKind> acts[] = {{"leaky_relu", ActivationKind::leaky_relu},
                                                          {"relu", ActivationKind::relu},
                                                          {"tanh", ActivationKind::tanh},
                                                          {"sigmoid", ActivationKind::sigmoid}};
    for (const auto& [name, kind] : acts)
      s.check(name, [=] { return probe(activation(x, {kind, 0.2}), 3); }, {x});
    s.check("softplus", [=] { return probe(softplus(x), 4); }, {x});
    const double c = rng.uniform(-2, 2);
    s.check("scale", [=] { return probe(scale(x, c), 5); }, {x});
    s.check("add_scalar", [=] { return probe(add_scalar(x, c), 5); }, {x});
    s.check("sum", [=] { return sum(x); }, {x});
    s.check("mean", [=] { return mean(x); }, {x});
    const double rate = rng.uniform(0.1, 0.7);
    const std::uint64_t ds = rng.next_u64();
    s.check("dropout", [=] {
      RngStream drop(ds);
      return probe(dropout(x, rate, drop), 6);
    }, {x});
  }
  {
    Tensor a = random_tensor({2, 2, 2, 3, 2}, rng, true), b = random_tensor({2, 2, 2, 3, 2}, rng, true);
    Tensor c = random_tensor({2, 1, 2, 3, 2}, rng, true);
    Tensor mask = Tensor::zeros(a.shape()), target = Tensor::zeros(a.shape()), labels = Tensor::zeros(a.shape());
    for (double& v : mask.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
      target.values()[i] = a.values()[i] + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 1.0);
    for (double& v : labels.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const Tensor weights = random_tensor(a.shape(), rng, false, 0, 2);
    s.check("add", [=] { return probe(add(a, b), 7); }, {a, b});
    s.check("sub", [=] { return probe(sub(a, b), 8); }, {a, b});
    s.check("mul", [=] { return probe(mul(a, b), 9); }, {a, b});
    s.check("concat_channels", [=] { return probe(concat_channels(a, c), 10); }, {a, c});
    s.check("blend", [=] { return probe(blend(a, b, mask), 11); }, {a, b});
    s.check("weighted_l1", [=] { return weighted_l1(a, target, weights); }, {a});
    s.check("bce_with_logits", [=] { return bce_with_logits(a, labels); }, {a});
  }
}

// Adversarial plus lambda-weighted multi-mask L1 objective on a random tiny network pair.
void objectives(Suite& s, RngStream& rng) {
  const int e = 32, batch = rng.uniform_int(1, 2);
  std::array<int, 5> gw, dw;
  for (int& v : gw) v = rng.uniform_int(1, 2);
  for (int& v : dw) v = rng.uniform_int(1, 2);
  GeneratorNet g(GeneratorConfig{e, gw, rng.uniform(0, 0.6), rng.uniform() < 0.8});
  DiscriminatorNet d(DiscriminatorConfig{e, dw});
  RngStream init(rng.next_u64());
  g.init_normal(init, 0.3);
  d.init_normal(init, 0.3);
  for (const ParamList& ps : {g.parameters(), d.parameters()})
    for (const auto& p : ps)
      if (p.name.ends_with(".bias")) {
        Tensor t = p.tensor;
        for (double& v : t.values()) v = init.uniform(-0.2, 0.2);
      }
  const Tensor x = random_tensor({batch, 1, e, e, e}, rng, false);
  const std::uint64_t ds = rng.next_u64();
  Tensor y = Tensor::zeros(x.shape());
  {
    RngStream drop(ds);
    const Tensor out0 = g.forward(x, drop).detach();
    for (std::size_t i = 0; i < y.numel(); ++i)
      y.values()[i] = out0.values()[i] + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 1.0);
  }
  const double diameter = rng.uniform(8, 20), radius = rng.uniform(1, 4);
  const double c = (e - 1) / 2.0;
  const BinaryMask bm = sphere_mask(Dims3::cube(e), Vec3{c, c, c}, diameter), bn = dilate(bm, radius);
  Tensor m = Tensor::zeros(x.shape()), n = Tensor::zeros(x.shape());
  for (int b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < bm.data.size(); ++i) {
      m.values()[b * bm.data.size() + i] = bm.data[i];
      n.values()[b * bm.data.size() + i] = bn.data[i];
    }
  const double alpha = rng.uniform(1, 10), lambda = rng.uniform(0, 100);
  const bool composite_fake = rng.uniform() < 0.5;

  auto fake_of = [=](const Tensor& out) { return composite_fake ? blend(out, x, m) : out; };
  auto g_objective = [=] {
    RngStream drop(ds);
    const Tensor out = g.forward(x, drop);
    return loss_generator(d.logits(x, fake_of(out)), loss_multimask_l1(y, out, m, n, alpha).total, lambda);
  };
  auto d_objective = [=] {
    RngStream drop(ds);
    const Tensor fake = fake_of(g.forward(x, drop)).detach();
    return loss_discriminator(d.logits(x, y), d.logits(x, fake));
  };
  std::vector<Tensor> gp = tensors_of(g.parameters()), dp = tensors_of(d.parameters());
  std::vector<Tensor> all = gp;
  all.insert(all.end(), dp.begin(), dp.end());
  GradCheckOptions o;
  o.rel_step = 1e-6;
  o.max_entries_per_tensor = 2;
  o.retry_step_factors = {0.25, 4.0};
  o.seed = rng.next_u64();
  s.check("generator_objective", g_objective, all, &o);
  s.check("discriminator_objective", d_objective, dp, &o);
}

}  // namespace

GradientSuiteReport run_gradient_suite(int configs_per_op, std::uint64_t seed, double tolerance) {
  Suite s(tolerance);
  RngStream rng(seed);
  for (int k = 0; k < configs_per_op; ++k) {
    engine_ops(s, rng);
    objectives(s, rng);
  }
  return s.report();
}

}  // namespace ngan

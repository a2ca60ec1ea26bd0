#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cli_config.hpp"
#include "nodulegan/augmentation.hpp"
#include "nodulegan/gradient_suite.hpp"
#include "nodulegan/kernels.hpp"
#include "nodulegan/seg_metrics.hpp"

namespace ngan::cli {

namespace fs = std::filesystem;

namespace {

// ---- per-command documents --------------------------------------------------------

struct DatasetSection {
  std::string phantom_manifest;
  int n_pairs = 200;
  std::uint64_t first_seed = 1;
  int scales_per_nodule = 3;
  bool mixed_placement = true;
};

template <class V>
void fields(V& v, DatasetSection& s) {
  v("phantom_manifest", s.phantom_manifest);
  v("n_pairs", s.n_pairs);
  v("first_seed", s.first_seed);
  v("scales_per_nodule", s.scales_per_nodule);
  v("mixed_placement", s.mixed_placement);
}

struct PhantomRun {
  PhantomSpec phantom;
  int count = 4;
};

template <class V>
void fields(V& v, PhantomRun& s) {
  v("phantom", s.phantom);
  v("count", s.count);
}

struct DatasetRun {
  DatasetSection dataset;
  PhantomSpec phantom;
  VoiOptions voi;
};

template <class V>
void fields(V& v, DatasetRun& s) {
  v("dataset", s.dataset);
  v("phantom", s.phantom);
  v("voi", s.voi);
}

struct TrainData {
  std::string voi_manifest;
  std::string resume;
  std::int64_t checkpoint_every = 0;
};

template <class V>
void fields(V& v, TrainData& s) {
  v("voi_manifest", s.voi_manifest);
  v("resume", s.resume);
  v("checkpoint_every", s.checkpoint_every);
}

struct TrainRun {
  TrainConfig train;
  TrainData data;
  DatasetSection dataset;
  PhantomSpec phantom;
  VoiOptions voi;
};

template <class V>
void fields(V& v, TrainRun& s) {
  v("train", s.train);
  v("data", s.data);
  v("dataset", s.dataset);
  v("phantom", s.phantom);
  v("voi", s.voi);
}

struct GradcheckSection {
  int configs_per_op = 20;
  std::uint64_t seed = 77;
  double tolerance = 1e-4;
};

template <class V>
void fields(V& v, GradcheckSection& s) {
  v("configs_per_op", s.configs_per_op);
  v("seed", s.seed);
  v("tolerance", s.tolerance);
}

struct GradcheckRun {
  GradcheckSection gradcheck;
};

template <class V>
void fields(V& v, GradcheckRun& s) {
  v("gradcheck", s.gradcheck);
}

struct InpaintSection {
  std::string checkpoint;
  std::string input;
  std::uint64_t seed = 1;
};

template <class V>
void fields(V& v, InpaintSection& s) {
  v("checkpoint", s.checkpoint);
  v("input", s.input);
  v("seed", s.seed);
}

struct InpaintRun {
  InpaintSection inpaint;
  VoiOptions voi;
};

template <class V>
void fields(V& v, InpaintRun& s) {
  v("inpaint", s.inpaint);
  v("voi", s.voi);
}

struct AugmentSection {
  std::string phantom_manifest;
};

template <class V>
void fields(V& v, AugmentSection& s) {
  v("phantom_manifest", s.phantom_manifest);
}

struct AugmentRun {
  AugmentSection augment;
  InjectionSpec injection;
  VoiOptions voi;
};

template <class V>
void fields(V& v, AugmentRun& s) {
  v("augment", s.augment);
  v("injection", s.injection);
  v("voi", s.voi);
}

struct EvalSection {
  std::string cases;
};

template <class V>
void fields(V& v, EvalSection& s) {
  v("cases", s.cases);
}

struct EvalRun {
  EvalSection eval;
};

template <class V>
void fields(V& v, EvalRun& s) {
  v("eval", s.eval);
}

struct GeneratorPaths {
  std::string l1_only;
  std::string multimask_cgan;
};

template <class V>
void fields(V& v, GeneratorPaths& s) {
  v("l1_only", s.l1_only);
  v("multimask_cgan", s.multimask_cgan);
}

struct ExperimentRun {
  ExperimentPlan experiment;
  GeneratorPaths generators;
};

template <class V>
void fields(V& v, ExperimentRun& s) {
  v("experiment", s.experiment);
  v("generators", s.generators);
}

// ---- shared plumbing -----------------------------------------------------------------

struct Context {
  std::string command;
  fs::path out_dir;
  fs::path data_root;
  std::ostream& out;

  std::string resolve(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (data_root / p).lexically_normal().string();
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void echo_config(const Context& ctx, const json& resolved) {
  write_text(ctx.out_dir / "config.json", resolved.dump(2) + "\n");
}

std::string stem_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix, i);
  return buf;
}

GeneratorNet load_generator(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " needs a generator checkpoint");
  return generator_from_checkpoint(load_checkpoint(path));
}

/// Phantom manifest written by the phantom command.
struct PhantomEntry {
  std::string id;
  fs::path ct, lung;
  std::vector<fs::path> nodules;
};

std::vector<PhantomEntry> load_phantom_manifest(const fs::path& path) {
  const json j = read_json(path);
  std::vector<PhantomEntry> out;
  try {
    for (const auto& p : j.at("phantoms")) {
      PhantomEntry e;
      e.id = p.at("id");
      e.ct = path.parent_path() / p.at("ct").get<std::string>();
      e.lung = path.parent_path() / p.at("lung").get<std::string>();
      for (const auto& n : p.at("nodules")) e.nodules.push_back(path.parent_path() / n.at("mask").get<std::string>());
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("phantom manifest " + path.string() + ": " + e.what());
  }
  if (out.empty()) throw DataError("phantom manifest " + path.string() + " lists no phantoms");
  return out;
}

std::vector<VoiPair> build_pairs(const DatasetSection& d, const PhantomSpec& base, const VoiOptions& voi,
                                 std::ostream& log) {
  if (d.phantom_manifest.empty()) {
    PhantomDatasetOptions o;
    o.n_pairs = d.n_pairs;
    o.first_seed = d.first_seed;
    o.scales_per_nodule = d.scales_per_nodule;
    o.mixed_placement = d.mixed_placement;
    o.base = base;
    o.voi = voi;
    return phantom_voi_pairs(o);
  }
  if (d.scales_per_nodule < 1) throw ConfigError("scales_per_nodule must be >= 1");
  std::vector<VoiPair> pairs;
  std::size_t skipped = 0;
  const auto entries = load_phantom_manifest(d.phantom_manifest);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Volume ct = load_volume(entries[k].ct);
    RngStream rng(hash64(d.first_seed, k));
    for (const auto& nodule_path : entries[k].nodules) {
      const BinaryMask nodule = load_mask(nodule_path);
      for (double scale : sample_scales(rng, d.scales_per_nodule)) {
        VoiOutcome r = make_voi_pair(ct, nodule, scale, voi, entries[k].id);
        if (r.pair) {
          pairs.push_back(std::move(*r.pair));
        } else {
          ++skipped;
          log << "skipped " << entries[k].id << " " << nodule_path.filename().string() << ": " << r.skipped_reason
              << "\n";
        }
      }
    }
  }
  if (pairs.empty()) throw DataError("no VOI pair could be built from " + d.phantom_manifest);
  return pairs;
}

// ---- commands ------------------------------------------------------------------------

void cmd_phantom(const Context& ctx, PhantomRun& r) {
  validate(r.phantom);
  if (r.count < 1) throw ConfigError("count must be >= 1");
  echo_config(ctx, encode(r));
  json list = json::array();
  for (int i = 0; i < r.count; ++i) {
    PhantomSpec s = r.phantom;
    s.seed = r.phantom.seed + std::uint64_t(i);
    const Phantom p = generate_phantom(s);
    list.push_back(json::parse(write_phantom(p, ctx.out_dir, stem_name("phantom", i))));
    ctx.out << "phantom " << i << " id=" << p.id << " nodules=" << p.nodules.size() << "\n";
  }
  write_text(ctx.out_dir / "manifest.json", json{{"phantoms", list}}.dump(2) + "\n");
}

void cmd_dataset(const Context& ctx, DatasetRun& r) {
  r.dataset.phantom_manifest = ctx.resolve(r.dataset.phantom_manifest);
  validate(r.phantom);
  echo_config(ctx, encode(r));
  const auto pairs = build_pairs(r.dataset, r.phantom, r.voi, ctx.out);
  save_voi_dataset(pairs, ctx.out_dir);
  ctx.out << "pairs=" << pairs.size() << " manifest=" << (ctx.out_dir / "manifest.json").string() << "\n";
}

void cmd_train(const Context& ctx, TrainRun& r) {
  r.data.voi_manifest = ctx.resolve(r.data.voi_manifest);
  r.data.resume = ctx.resolve(r.data.resume);
  r.dataset.phantom_manifest = ctx.resolve(r.dataset.phantom_manifest);
  if (r.data.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  std::optional<Checkpoint> resume;
  if (!r.data.resume.empty()) {
    resume = load_checkpoint(r.data.resume);
    r.train = resume->config;
  }
  validate(r.train);
  if (r.data.voi_manifest.empty() && r.voi.voi_edge != r.train.voi_edge)
    throw ConfigError("voi.voi_edge (" + std::to_string(r.voi.voi_edge) + ") differs from train.voi_edge (" +
                      std::to_string(r.train.voi_edge) + ")");
  echo_config(ctx, encode(r));

  std::vector<VoiPair> pairs = r.data.voi_manifest.empty() ? build_pairs(r.dataset, r.phantom, r.voi, ctx.out)
                                                          : load_voi_dataset(r.data.voi_manifest);
  Trainer trainer = resume ? Trainer(*resume, std::move(pairs)) : Trainer(r.train, std::move(pairs));
  std::ofstream loss(ctx.out_dir / "loss.csv", std::ios::binary);
  if (!loss) throw IoError("cannot write " + (ctx.out_dir / "loss.csv").string());
  loss << loss_csv_header() << "\n";
  const std::int64_t every = r.data.checkpoint_every;
  trainer.run([&](const StepRecord& s) {
    loss << loss_csv_row(s) << "\n";
    if (every > 0 && s.step % every == 0 && s.step < trainer.total_steps())
      save_checkpoint(trainer.checkpoint(), ctx.out_dir / ("step_" + std::to_string(s.step)));
  });
  save_checkpoint(trainer.checkpoint(), ctx.out_dir / "checkpoint");
  ctx.out << "steps=" << trainer.steps_done() << " checkpoint=" << (ctx.out_dir / "checkpoint.json").string()
          << "\n";
}

bool cmd_gradcheck(const Context& ctx, GradcheckRun& r) {
  const auto& g = r.gradcheck;
  if (g.configs_per_op < 1) throw ConfigError("configs_per_op must be >= 1");
  if (!(g.tolerance > 0)) throw ConfigError("tolerance must be > 0");
  echo_config(ctx, encode(r));
  const GradientSuiteReport rep = run_gradient_suite(g.configs_per_op, g.seed, g.tolerance);
  json ops = json::array();
  for (const auto& o : rep.ops) {
    ctx.out << o.op << " configs=" << o.configs << " checked=" << o.result.checked << " failed=" << o.result.failed
            << " max_rel=" << o.result.max_rel_error << (o.result.ok() ? " ok" : " FAIL") << "\n";
    ops.push_back({{"op", o.op},
                   {"configs", o.configs},
                   {"checked", o.result.checked},
                   {"failed", o.result.failed},
                   {"retried", o.result.retried},
                   {"max_rel_error", o.result.max_rel_error},
                   {"worst", o.result.worst}});
  }
  write_text(ctx.out_dir / "gradcheck.json",
             json{{"ok", rep.ok()}, {"checked", rep.checked()}, {"max_rel_error", rep.max_rel_error()}, {"ops", ops}}
                     .dump(2) +
                 "\n");
  ctx.out << "checked=" << rep.checked() << " max_rel=" << rep.max_rel_error() << " " << (rep.ok() ? "ok" : "FAIL")
          << "\n";
  return rep.ok();
}

void cmd_inpaint(const Context& ctx, InpaintRun& r) {
  r.inpaint.checkpoint = ctx.resolve(r.inpaint.checkpoint);
  r.inpaint.input = ctx.resolve(r.inpaint.input);
  if (r.inpaint.input.empty()) throw ConfigError("inpaint.input is required");
  echo_config(ctx, encode(r));
  const GeneratorNet g = load_generator(r.inpaint.checkpoint, "inpaint");
  const Volume in = load_volume(r.inpaint.input);
  const int e = g.config().voi_edge;
  if (!(in.grid.dims == Dims3::cube(e)))
    throw ShapeError("inpaint input must be " + std::to_string(e) + "^3 to match the generator");
  const bool hu = in.space == IntensitySpace::hu;
  const Volume norm = hu ? normalize_hu(in, r.voi.window) : in;
  VoiOptions voi = r.voi;
  voi.voi_edge = e;
  const double c = (e - 1) / 2.0;
  const BinaryMask m = sphere_mask(norm.grid, Vec3{c, c, c}, voi.diameter());
  const Volume x = erase(norm, m, voi.fill);
  RngStream rng(r.inpaint.seed);
  const Volume out = generate(g, x, rng);
  const Volume comp = composite(x, out, m);
  save_volume(hu ? denormalize_hu(comp, r.voi.window) : comp, ctx.out_dir / "composite");
  save_volume(out, ctx.out_dir / "generator_output");
  save_mask(m, ctx.out_dir / "mask");
  ctx.out << "composite=" << (ctx.out_dir / "composite.json").string() << " masked_voxels=" << m.count() << "\n";
}

void cmd_augment(const Context& ctx, AugmentRun& r) {
  r.augment.phantom_manifest = ctx.resolve(r.augment.phantom_manifest);
  r.injection.checkpoint = ctx.resolve(r.injection.checkpoint);
  validate(r.injection);
  if (r.augment.phantom_manifest.empty()) throw ConfigError("augment.phantom_manifest is required");
  echo_config(ctx, encode(r));
  const GeneratorNet g = load_generator(r.injection.checkpoint, "augment");
  VoiOptions voi = r.voi;
  voi.voi_edge = g.config().voi_edge;
  const auto entries = load_phantom_manifest(r.augment.phantom_manifest);
  json cases = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Volume ct = load_volume(entries[i].ct);
    const BinaryMask lung = load_mask(entries[i].lung);
    InjectionSpec spec = r.injection;
    spec.seed = hash64(r.injection.seed, i);
    const AugmentResult res = augment_volume(ct, lung, spec, g, voi);
    const std::string stem = stem_name("case", i);
    save_volume(res.volume, ctx.out_dir / (stem + "_ct"));
    write_text(ctx.out_dir / (stem + "_records.json"), records_json(res.records) + "\n");
    json c = {{"source", entries[i].id},
              {"ct", stem + "_ct.json"},
              {"lung", fs::absolute(entries[i].lung).lexically_normal().string()},
              {"records", stem + "_records.json"},
              {"injections", res.records.size()}};
    if (!res.records.empty())
      c["slices"] = export_slices(res.volume, res.records, lung, ctx.out_dir, stem).filename().string();
    if (!res.warning.empty()) {
      c["warning"] = res.warning;
      ctx.out << "warning " << entries[i].id << ": " << res.warning << "\n";
    }
    ctx.out << stem << " injections=" << res.records.size() << "\n";
    cases.push_back(c);
  }
  write_text(ctx.out_dir / "augment.json", json{{"cases", cases}}.dump(2) + "\n");
}

void cmd_eval(const Context& ctx, EvalRun& r) {
  r.eval.cases = ctx.resolve(r.eval.cases);
  if (r.eval.cases.empty()) throw ConfigError("eval.cases is required");
  echo_config(ctx, encode(r));
  const BatchReport rep = evaluate_cases(load_case_list(r.eval.cases));
  write_text(ctx.out_dir / "metrics.csv", report_csv(rep));
  write_text(ctx.out_dir / "metrics.json", report_json(rep) + "\n");
  ctx.out << "cases=" << rep.cases.size() << " dice=" << rep.mean.dice << " hd_mm=" << rep.mean.hausdorff_mm
          << " asd_mm=" << rep.mean.asd_mm << "\n";
}

void cmd_experiment(const Context& ctx, ExperimentRun& r) {
  r.generators.l1_only = ctx.resolve(r.generators.l1_only);
  r.generators.multimask_cgan = ctx.resolve(r.generators.multimask_cgan);
  validate(r.experiment);
  echo_config(ctx, encode(r));
  std::map<AugmentationSource, GeneratorNet> gens;
  for (AugmentationSource a : r.experiment.arms) {
    if (a == AugmentationSource::l1_only) gens[a] = load_generator(r.generators.l1_only, "arm l1_only");
    if (a == AugmentationSource::multimask_cgan)
      gens[a] = load_generator(r.generators.multimask_cgan, "arm multimask_cgan");
  }
  const ExperimentReport rep = run_experiment(r.experiment, gens);
  write_text(ctx.out_dir / "report.csv", experiment_csv(rep));
  write_text(ctx.out_dir / "report.svg", experiment_svg(rep));
  json summary = json::object();
  for (AugmentationSource a : r.experiment.arms) {
    const DeltaSummary d = summarize_arm(rep, to_string(a));
    summary[to_string(a)] = {{"median_dice_delta", d.median_dice_delta},
                             {"median_hd_delta_mm", d.median_hd_delta},
                             {"median_asd_delta_mm", d.median_asd_delta},
                             {"all_zero", d.all_zero}};
    ctx.out << to_string(a) << " median_dice_delta=" << d.median_dice_delta
            << " median_hd_delta_mm=" << d.median_hd_delta << " median_asd_delta_mm=" << d.median_asd_delta << "\n";
  }
  write_text(ctx.out_dir / "summary.json", summary.dump(2) + "\n");
}

// ---- config resolution ---------------------------------------------------------------

struct Command {
  const char* name;
  const char* help;
  const char* seed_key;  // dotted path set by --seed; nullptr when the command draws no randomness
  std::function<json(bool desk)> defaults;
  std::function<bool(const Context&, const json&)> run;
};

template <class Run, class Fn>
std::function<bool(const Context&, const json&)> runner(Fn fn) {
  return [fn](const Context& ctx, const json& doc) {
    Run r;
    decode(doc, r, "");
    if constexpr (std::is_same_v<decltype(fn(ctx, r)), bool>) {
      return fn(ctx, r);
    } else {
      fn(ctx, r);
      return true;
    }
  };
}

TrainConfig default_train(bool desk) { return desk ? desk_train_config() : TrainConfig{}; }

VoiOptions default_voi(bool desk) {
  VoiOptions v;
  if (desk) v.voi_edge = 32;
  return v;
}

const std::vector<Command>& commands() {
  static const std::vector<Command> list = {
      {"phantom", "Generate synthetic CT phantoms with lung and nodule masks", "phantom.seed",
       [](bool) { return encode(PhantomRun{}); }, runner<PhantomRun>(cmd_phantom)},
      {"dataset", "Build erased-VOI training pairs", "dataset.first_seed",
       [](bool desk) {
         DatasetRun r;
         r.voi = default_voi(desk);
         return encode(r);
       },
       runner<DatasetRun>(cmd_dataset)},
      {"train", "Train the conditional GAN", "train.seed",
       [](bool desk) {
         TrainRun r;
         r.train = default_train(desk);
         r.voi = default_voi(desk);
         return encode(r);
       },
       runner<TrainRun>(cmd_train)},
      {"gradcheck", "Run the finite-difference gradient suite", "gradcheck.seed",
       [](bool) { return encode(GradcheckRun{}); }, runner<GradcheckRun>(cmd_gradcheck)},
      {"inpaint", "Inpaint the central sphere of one VOI", "inpaint.seed",
       [](bool desk) {
         InpaintRun r;
         r.voi = default_voi(desk);
         return encode(r);
       },
       runner<InpaintRun>(cmd_inpaint)},
      {"augment", "Inject synthetic nodules near the lung boundary", "injection.seed",
       [](bool desk) {
         AugmentRun r;
         if (desk) r.injection = desk_experiment_plan().injection;
         return encode(r);
       },
       runner<AugmentRun>(cmd_augment)},
      {"eval", "Dice, Hausdorff and ASD over a case list", nullptr, [](bool) { return encode(EvalRun{}); },
       runner<EvalRun>(cmd_eval)},
      {"experiment", "Segmentation fine-tuning experiment", "experiment.seg.seed",
       [](bool desk) {
         ExperimentRun r;
         if (desk) r.experiment = desk_experiment_plan();
         return encode(r);
       },
       runner<ExperimentRun>(cmd_experiment)},
  };
  return list;
}

json* lookup(json& doc, const std::string& dotted) {
  json* node = &doc;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

void apply_set(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json* node = lookup(doc, key);
  if (!node) throw ConfigError("unknown config key '" + key + "'");
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  *node = value;
}

/// Objects merge key by key; anything else replaces. Unknown keys are kept so
/// that decoding reports them.
void merge(json& base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [k, v] : patch.items()) {
    if (base.contains(k))
      merge(base[k], v);
    else
      base[k] = v;
  }
}

std::string escape(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& detail) {
  err << "error=" << kind << " detail=\"" << escape(detail) << "\"\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"nodulegan: 3D conditional GAN nodule inpainting"};
  app.require_subcommand(1);
  std::string config_path, out_dir, preset = "paper";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::vector<std::string> sets;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const Command& c : commands()) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Seed of the command's primary random stream");
    sub->add_option("--threads", threads, "Worker threads (results do not depend on it)");
    sub->add_option("--set", sets, "Override a config key: dotted.key=value")->allow_extra_args(false);
    sub->add_option("--preset", preset, "Default values")->check(CLI::IsMember({"paper", "desk"}));
    subs.emplace_back(sub, &c);
  }

  std::vector<std::string> argv = args;
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    print_error(err, "UsageError", e.what());
    return 2;
  }

  const Command* cmd = nullptr;
  for (const auto& [sub, c] : subs)
    if (sub->parsed()) cmd = c;

  try {
    json doc = cmd->defaults(preset == "desk");
    if (!config_path.empty()) merge(doc, read_json(config_path));
    for (const auto& s : sets) apply_set(doc, s);
    if (seed) {
      if (!cmd->seed_key) throw ConfigError(std::string(cmd->name) + " draws no random numbers; --seed is not accepted");
      *lookup(doc, cmd->seed_key) = *seed;
    }
    if (threads < 0) throw ConfigError("--threads must be >= 0");
    if (threads > 0) set_num_threads(threads);

    const char* env = std::getenv("NODULEGAN_DATA_ROOT");
    const fs::path root = env && *env ? fs::path(env) : fs::current_path();
    const fs::path dir = out_dir.empty() ? root / cmd->name : fs::path(out_dir);
    fs::create_directories(dir);
    const Context ctx{cmd->name, dir, root, out};
    if (!cmd->run(ctx, doc)) {
      print_error(err, "GradientCheckFailure", "one or more entries exceed the tolerance; see gradcheck.json");
      return 1;
    }
    return 0;
  } catch (const Error& e) {
    print_error(err, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    print_error(err, "IoError", e.what());
  } catch (const std::exception& e) {
    print_error(err, "InternalError", e.what());
  }
  return 1;
}

}  // namespace ngan::cli

#pragma once

#include <array>
#include <concepts>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodulegan/cgan.hpp"
#include "nodulegan/error.hpp"
#include "nodulegan/gradcheck.hpp"
#include "nodulegan/phantom.hpp"
#include "nodulegan/seg_demo.hpp"

namespace ngan::cli {

using json = nlohmann::json;

// Field lists. Each visitor is called as v(name, member) in a fixed order,
// which is also the order of keys in the echoed config.

template <class V>
void fields(V& v, PhantomSpec& s) {
  v("dims", s.dims);
  v("spacing_mm", s.spacing_mm);
  v("air_hu", s.air_hu);
  v("body_hu", s.body_hu);
  v("lung_hu", s.lung_hu);
  v("vessel_hu", s.vessel_hu);
  v("nodule_hu", s.nodule_hu);
  v("noise_sigma_hu", s.noise_sigma_hu);
  v("lung_jitter", s.lung_jitter);
  v("n_vessels", s.n_vessels);
  v("vessel_radius_mm", s.vessel_radius_mm);
  v("n_nodules", s.n_nodules);
  v("placement", s.placement);
  v("nodule_diameter_mm", s.nodule_diameter_mm);
  v("boundary_distance_mm", s.boundary_distance_mm);
  v("interior_margin_mm", s.interior_margin_mm);
  v("max_retries", s.max_retries);
  v("seed", s.seed);
}

template <class V>
void fields(V& v, VoiOptions& s) {
  v("voi_edge", s.voi_edge);
  v("sphere_diameter", s.sphere_diameter);
  v("dilation_radius", s.dilation_radius);
  v("fill", s.fill);
  v("min_nodule_mm", s.min_nodule_mm);
  v("window", s.window);
}

template <class V>
void fields(V& v, TrainConfig& s) {
  v("alpha", s.alpha);
  v("lambda", s.lambda);
  v("lr", s.lr);
  v("beta1", s.beta1);
  v("beta2", s.beta2);
  v("epochs", s.epochs);
  v("steps", s.steps);
  v("batch_size", s.batch_size);
  v("dropout_rate", s.dropout_rate);
  v("dilation_radius", s.dilation_radius);
  v("seed", s.seed);
  v("loss_variant", s.loss_variant);
  v("fake_for_d", s.fake_for_d);
  v("voi_edge", s.voi_edge);
  v("g_widths", s.g_widths);
  v("d_widths", s.d_widths);
  v("skips", s.skips);
  v("init", s.init);
  v("init_sigma", s.init_sigma);
}

template <class V>
void fields(V& v, InjectionSpec& s) {
  v("n_sites", s.n_sites);
  v("boundary_distance_mm", s.boundary_distance_mm);
  v("voi_size_mm", s.voi_size_mm);
  v("seed", s.seed);
  v("checkpoint", s.checkpoint);
  v("max_attempts_per_site", s.max_attempts_per_site);
}

template <class V>
void fields(V& v, SegTrainConfig& s) {
  v("base_width", s.base_width);
  v("epochs", s.epochs);
  v("batch_size", s.batch_size);
  v("lr", s.lr);
  v("seed", s.seed);
  v("window", s.window);
}

template <class V>
void fields(V& v, ExperimentPlan& s) {
  v("n_train_phantoms", s.n_train_phantoms);
  v("n_eval_phantoms", s.n_eval_phantoms);
  v("n_augment_phantoms", s.n_augment_phantoms);
  v("arms", s.arms);
  v("base_epochs", s.base_epochs);
  v("fine_tune_epochs", s.fine_tune_epochs);
  v("fine_tune_lr", s.fine_tune_lr);
  v("seeds", s.seeds);
  v("eval_edge_vox", s.eval_edge_vox);
  v("phantom", s.phantom);
  v("injection", s.injection);
  v("seg", s.seg);
  v("train_seed_block", s.train_seed_block);
  v("augment_seed_block", s.augment_seed_block);
  v("eval_seed_block", s.eval_seed_block);
}

// ---- codec --------------------------------------------------------------------

struct KeyLister {
  std::set<std::string> keys;
  template <class T>
  void operator()(const char* k, T&) {
    keys.insert(k);
  }
};

template <class T>
concept Record = requires(KeyLister& v, T& t) { fields(v, t); };

[[noreturn]] inline void bad_value(const std::string& path, const std::string& expected, const json& got) {
  throw ConfigError("config key '" + path + "': expected " + expected + ", got " + got.dump());
}

inline json encode(double v) { return v; }
inline json encode(int v) { return v; }
inline json encode(std::int64_t v) { return v; }
inline json encode(std::uint64_t v) { return v; }
inline json encode(bool v) { return v; }
inline json encode(const std::string& v) { return v; }
inline json encode(const Dims3& d) { return json::array({d.nx, d.ny, d.nz}); }
inline json encode(const Vec3& p) { return json::array({p.x, p.y, p.z}); }
inline json encode(const Interval& i) { return json::array({i.lo, i.hi}); }
inline json encode(const HuWindow& w) { return json::array({w.lo, w.hi}); }
template <class E>
  requires std::is_enum_v<E>
json encode(E e) {
  return to_string(e);
}
template <class T, std::size_t N>
json encode(const std::array<T, N>& a) {
  json j = json::array();
  for (const auto& x : a) j.push_back(encode(x));
  return j;
}
template <class T>
json encode(const std::vector<T>& a) {
  json j = json::array();
  for (const auto& x : a) j.push_back(encode(x));
  return j;
}
template <Record T>
json encode(const T& r) {
  json j = json::object();
  T copy = r;
  auto put = [&](const char* k, auto& v) { j[k] = encode(v); };
  fields(put, copy);
  return j;
}

inline void decode(const json& j, double& v, const std::string& p) {
  if (!j.is_number()) bad_value(p, "a number", j);
  v = j.get<double>();
}
inline void decode(const json& j, int& v, const std::string& p) {
  if (!j.is_number_integer()) bad_value(p, "an integer", j);
  v = j.get<int>();
}
inline void decode(const json& j, std::int64_t& v, const std::string& p) {
  if (!j.is_number_integer()) bad_value(p, "an integer", j);
  v = j.get<std::int64_t>();
}
inline void decode(const json& j, std::uint64_t& v, const std::string& p) {
  if (!j.is_number_unsigned()) bad_value(p, "a non-negative integer", j);
  v = j.get<std::uint64_t>();
}
inline void decode(const json& j, bool& v, const std::string& p) {
  if (!j.is_boolean()) bad_value(p, "true or false", j);
  v = j.get<bool>();
}
inline void decode(const json& j, std::string& v, const std::string& p) {
  if (!j.is_string()) bad_value(p, "a string", j);
  v = j.get<std::string>();
}

template <class T, std::size_t N>
void decode(const json& j, std::array<T, N>& a, const std::string& p) {
  if (!j.is_array() || j.size() != N) bad_value(p, "an array of " + std::to_string(N), j);
  for (std::size_t i = 0; i < N; ++i) decode(j[i], a[i], p + "[" + std::to_string(i) + "]");
}
inline void decode(const json& j, Dims3& d, const std::string& p) {
  std::array<int, 3> a{};
  decode(j, a, p);
  d = {a[0], a[1], a[2]};
}
inline void decode(const json& j, Vec3& v, const std::string& p) {
  std::array<double, 3> a{};
  decode(j, a, p);
  v = {a[0], a[1], a[2]};
}
inline void decode(const json& j, Interval& v, const std::string& p) {
  std::array<double, 2> a{};
  decode(j, a, p);
  v = {a[0], a[1]};
}
inline void decode(const json& j, HuWindow& v, const std::string& p) {
  std::array<double, 2> a{};
  decode(j, a, p);
  v = {a[0], a[1]};
}

inline void decode(const json& j, NodulePlacement& v, const std::string& p) {
  std::string s;
  decode(j, s, p);
  v = placement_from_string(s);
}
inline void decode(const json& j, LossVariant& v, const std::string& p) {
  std::string s;
  decode(j, s, p);
  v = loss_variant_from_string(s);
}
inline void decode(const json& j, FakeForD& v, const std::string& p) {
  std::string s;
  decode(j, s, p);
  v = fake_for_d_from_string(s);
}
inline void decode(const json& j, InitScheme& v, const std::string& p) {
  std::string s;
  decode(j, s, p);
  v = init_scheme_from_string(s);
}
inline void decode(const json& j, AugmentationSource& v, const std::string& p) {
  std::string s;
  decode(j, s, p);
  v = augmentation_source_from_string(s);
}

template <class T>
void decode(const json& j, std::vector<T>& a, const std::string& p) {
  if (!j.is_array()) bad_value(p, "an array", j);
  a.assign(j.size(), T{});
  for (std::size_t i = 0; i < j.size(); ++i) decode(j[i], a[i], p + "[" + std::to_string(i) + "]");
}

/// Throws ConfigError for any key of j that T does not declare.
template <Record T>
void reject_unknown(const json& j, const std::string& p) {
  KeyLister names;
  T probe{};
  fields(names, probe);
  for (const auto& [k, _] : j.items())
    if (!names.keys.count(k)) throw ConfigError("unknown config key '" + (p.empty() ? k : p + "." + k) + "'");
}

/// Keys absent from j keep their current value.
template <Record T>
void decode(const json& j, T& r, const std::string& p) {
  if (!j.is_object()) bad_value(p, "an object", j);
  reject_unknown<T>(j, p);
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) decode(j.at(k), v, p.empty() ? std::string(k) : p + "." + k);
  };
  fields(get, r);
}

}  // namespace ngan::cli

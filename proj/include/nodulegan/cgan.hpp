#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nodulegan/adam.hpp"
#include "nodulegan/layers.hpp"
#include "nodulegan/volume.hpp"

namespace ngan {

struct GeneratorConfig {
  int voi_edge = 64;
  std::array<int, 5> widths{32, 64, 128, 256, 512};
  double dropout_rate = 0.5;
  bool skips = true;
};

/// 3D U-Net: five stride-2 encoder convolutions (LeakyReLU) and five stride-2
/// transposed convolutions (ReLU, Tanh on the last), decoder level i
/// concatenated with encoder level 5-i. Dropout follows the first two decoder
/// layers and stays active at inference.
class GeneratorNet {
 public:
  GeneratorNet() = default;
  explicit GeneratorNet(const GeneratorConfig& cfg);

  void init_normal(RngStream& rng, double sigma);
  /// Zero-mean normal weights with variance 2 / fan_in per layer.
  void init_he(RngStream& rng);
  /// x: (B, 1, E, E, E) with E = voi_edge. Output has the same shape, in [-1, 1].
  Tensor forward(const Tensor& x, RngStream& rng) const;
  ParamList parameters() const;
  const GeneratorConfig& config() const { return cfg_; }

  std::array<Conv3dLayer, 5> enc;
  std::array<ConvTranspose3dLayer, 5> dec;

 private:
  GeneratorConfig cfg_;
};

struct DiscriminatorConfig {
  int voi_edge = 64;
  std::array<int, 5> widths{32, 64, 128, 256, 512};
};

/// Five stride-2 convolutions with LeakyReLU over cat(x, candidate), then a
/// convolution spanning the remaining extent that yields one logit per sample.
class DiscriminatorNet {
 public:
  DiscriminatorNet() = default;
  explicit DiscriminatorNet(const DiscriminatorConfig& cfg);

  void init_normal(RngStream& rng, double sigma);
  void init_he(RngStream& rng);
  /// Logits of shape (B, 1, 1, 1, 1).
  Tensor logits(const Tensor& x, const Tensor& candidate) const;
  /// sigmoid(logits), the probability that the candidate is real.
  Tensor probability(const Tensor& x, const Tensor& candidate) const;
  ParamList parameters() const;
  const DiscriminatorConfig& config() const { return cfg_; }

  std::array<Conv3dLayer, 5> conv;
  Conv3dLayer head;

 private:
  DiscriminatorConfig cfg_;
};

// ---- losses ------------------------------------------------------------------

enum class LossVariant { multimask, erased_only, all_image_l1_only, all_image_l1_plus_adv };

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

enum class FakeForD { composite, raw };

enum class InitScheme { normal, he };

std::string to_string(InitScheme s);
InitScheme init_scheme_from_string(const std::string& s);

std::string to_string(FakeForD f);
FakeForD fake_for_d_from_string(const std::string& s);

struct L1Terms {
  Tensor total;           // differentiable reconstruction loss
  double term_m = 0;      // mean |y - g| over M, batch averaged
  double term_band = 0;   // mean |y - g| over N - M, batch averaged (0 when undefined)
};

/// Per-sample mask-normalized Eq. 2: term_M + alpha * term_band, averaged over
/// the batch. Tensors are (B, 1, ...); masks are 0/1 constants with m inside n.
/// Throws DataError on an empty M or an empty band.
L1Terms loss_multimask_l1(const Tensor& y, const Tensor& g_out, const Tensor& m, const Tensor& n,
                          double alpha);

/// Reconstruction term selected by the variant. erased_only uses term_M alone,
/// the all_image variants use the mean over the whole volume.
L1Terms reconstruction_loss(LossVariant v, const Tensor& y, const Tensor& g_out, const Tensor& m,
                            const Tensor& n, double alpha);

/// mean softplus(-z_real) + mean softplus(z_fake), i.e.
/// -[log D(x,y) + log(1 - D(x,G(x)))] from logits.
Tensor loss_discriminator(const Tensor& logits_real, const Tensor& logits_fake);

/// Non-saturating adversarial part: mean softplus(-z_fake) = -log D(x,G(x)).
Tensor loss_generator_adversarial(const Tensor& logits_fake);

/// -log D(x, fake) + lambda * l1.
Tensor loss_generator(const Tensor& logits_fake, const Tensor& l1, double lambda);

/// g_out inside m, x outside m.
Volume composite(const Volume& x, const Volume& g_out, const BinaryMask& m);

/// Mean absolute intensity difference over 6-neighbour voxel pairs that
/// straddle the surface of m (one voxel inside, one outside).
double boundary_jump(const Volume& v, const BinaryMask& m);

// ---- training -------------------------------------------------------------------

struct TrainConfig {
  double alpha = 5;
  double lambda = 100;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 12;
  /// When positive, overrides epochs with an exact step count.
  std::int64_t steps = 0;
  int batch_size = 4;
  double dropout_rate = 0.5;
  double dilation_radius = 4;
  std::uint64_t seed = 1;
  LossVariant loss_variant = LossVariant::multimask;
  FakeForD fake_for_d = FakeForD::composite;
  int voi_edge = 64;
  std::array<int, 5> g_widths{32, 64, 128, 256, 512};
  std::array<int, 5> d_widths{32, 64, 128, 256, 512};
  bool skips = true;
  InitScheme init = InitScheme::normal;
  /// Standard deviation of the normal scheme.
  double init_sigma = 0.02;
};

/// Throws ConfigError naming the violated constraint.
void validate(const TrainConfig& cfg);

/// 32³ VOIs, widths 8·{1,2,4,8,8}, batch 4, 500 steps.
TrainConfig desk_train_config();

struct StepRecord {
  std::int64_t step = 0;    // 1-based index of the completed step
  double d_loss = 0;
  double g_adv = 0;
  double g_l1_m = 0;
  double g_l1_band = 0;
  std::int64_t d_updates = 0;  // cumulative optimizer updates after this step
  std::int64_t g_updates = 0;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Everything needed to continue training bit-for-bit.
struct Checkpoint {
  TrainConfig config;
  std::int64_t step = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::int64_t g_adam_step = 0;
  std::int64_t d_adam_step = 0;
  std::vector<NamedArray> arrays;  // parameters then Adam moments
};

/// Writes "<stem>.json" (manifest) and "<stem>.bin" (f64le blob).
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& stem);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

/// Batch tensors (B, 1, E, E, E) gathered from pairs.
struct Batch {
  Tensor x, y, m, n;
};
Batch make_batch(const std::vector<VoiPair>& pairs, const std::vector<int>& indices);

class Trainer {
 public:
  /// Validates cfg and every pair before any work.
  Trainer(const TrainConfig& cfg, std::vector<VoiPair> pairs);
  Trainer(const Checkpoint& ckpt, std::vector<VoiPair> pairs);

  /// One D update on the detached fake, then one G update.
  StepRecord step();
  /// Runs until total_steps() have completed.
  void run(const std::function<void(const StepRecord&)>& on_step = {});

  std::int64_t steps_done() const { return step_; }
  std::int64_t total_steps() const;
  std::int64_t steps_per_epoch() const;
  Checkpoint checkpoint() const;
  const GeneratorNet& generator() const { return g_; }
  const DiscriminatorNet& discriminator() const { return d_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  void build();
  std::vector<int> batch_indices(std::int64_t step) const;

  TrainConfig cfg_;
  std::vector<VoiPair> pairs_;
  GeneratorNet g_;
  DiscriminatorNet d_;
  AdamState g_opt_, d_opt_;
  std::int64_t step_ = 0;
};

/// Restores the generator of a checkpoint.
GeneratorNet generator_from_checkpoint(const Checkpoint& c);

/// Loss log header and row in the CSV layout step,d_loss,g_adv,g_l1_m,g_l1_band.
std::string loss_csv_header();
std::string loss_csv_row(const StepRecord& r);

struct GeneratorEval {
  double masked_l1 = 0;    // mean term_M over pairs
  double band_l1 = 0;      // mean term_band over pairs
  double boundary_jump = 0;  // mean over composites

  /// Multi-mask L1 under per-mask normalization.
  double multimask_l1(double alpha) const { return masked_l1 + alpha * band_l1; }
};

/// Inference on every pair (dropout active, stream seeded by `seed`).
GeneratorEval evaluate_generator(const GeneratorNet& g, const std::vector<VoiPair>& pairs,
                                 std::uint64_t seed, int batch_size = 4);

/// Generator output for a single normalized, erased VOI.
Volume generate(const GeneratorNet& g, const Volume& x, RngStream& rng);

}  // namespace ngan

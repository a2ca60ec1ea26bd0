#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nodulegan/adam.hpp"
#include "nodulegan/augmentation.hpp"
#include "nodulegan/layers.hpp"
#include "nodulegan/seg_metrics.hpp"

namespace ngan {

/// 2D U-Net on axial slices embedded in the 3D engine (depth extent 1):
/// 3x3 stem, three stride-2 downsamplings, three transposed upsamplings with
/// skip concatenation, 3x3 head producing one logit per pixel.
class SegNet {
 public:
  SegNet() = default;
  explicit SegNet(int base_width);

  void init_he(RngStream& rng);
  /// x: (B, 1, 1, H, W) with H and W divisible by 8. Returns logits of the same shape.
  Tensor logits(const Tensor& x) const;
  ParamList parameters() const;
  /// Independent copy of the weights.
  SegNet clone() const;
  int base_width() const { return base_; }

  Conv3dLayer stem, down[3], head;
  ConvTranspose3dLayer up[3];

 private:
  int base_ = 8;
};

struct SegTrainConfig {
  int base_width = 8;
  int epochs = 10;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  HuWindow window;
};

/// Slice image in HU (or already normalized) and its 0/1 label.
struct LabeledSlice {
  Volume image;
  BinaryMask label;
};

struct SegTrainLog {
  std::vector<double> epoch_loss;
};

/// Binary cross-entropy with Adam from the given network state.
SegTrainLog train_segmenter(SegNet& net, const std::vector<LabeledSlice>& data, const SegTrainConfig& cfg);
SegNet new_segmenter(const SegTrainConfig& cfg);

/// Probability map of one slice, (H, W) in (0, 1).
std::vector<double> predict_slice(const SegNet& net, const Volume& image, const HuWindow& window);
/// Slice-by-slice prediction thresholded at 0.5.
BinaryMask segment_volume(const SegNet& net, const Volume& v, const HuWindow& window);

void save_segnet(const SegNet& net, const std::filesystem::path& stem);
SegNet load_segnet(const std::filesystem::path& stem);

// ---- experiment ------------------------------------------------------------------

enum class AugmentationSource { none, l1_only, multimask_cgan };
std::string to_string(AugmentationSource a);
AugmentationSource augmentation_source_from_string(const std::string& s);

struct ExperimentPlan {
  int n_train_phantoms = 6;
  int n_eval_phantoms = 4;
  int n_augment_phantoms = 6;
  std::vector<AugmentationSource> arms{AugmentationSource::none, AugmentationSource::l1_only,
                                       AugmentationSource::multimask_cgan};
  int base_epochs = 12;
  int fine_tune_epochs = 5;
  double fine_tune_lr = 1e-4;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int eval_edge_vox = 32;
  PhantomSpec phantom;
  InjectionSpec injection;
  SegTrainConfig seg;
  /// Seed blocks for the three phantom sets; each set uses block + 1000·seed + i.
  std::uint64_t train_seed_block = 10000;
  std::uint64_t augment_seed_block = 20000;
  std::uint64_t eval_seed_block = 30000;
};

ExperimentPlan desk_experiment_plan();
void validate(const ExperimentPlan& plan);

struct ArmResult {
  std::string arm;
  std::uint64_t seed = 0;
  MetricsReport before;  // mean over evaluation nodules
  MetricsReport after;
  MetricsReport worst_before;
  MetricsReport worst_after;
  int n_cases = 0;
  int n_fine_tune_slices = 0;
};

struct ExperimentReport {
  std::vector<ArmResult> rows;
  std::vector<std::string> train_ids, augment_ids, eval_ids;
};

/// Phantom identity with nodules stripped: two phantoms sharing it share lung,
/// vessels and noise.
std::string anatomy_id(const PhantomSpec& spec);
/// Throws DataError when an evaluation anatomy appears in a training set.
void check_disjoint(const std::vector<std::string>& training, const std::vector<std::string>& evaluation);

/// One generator per non-control arm.
ExperimentReport run_experiment(const ExperimentPlan& plan,
                                const std::map<AugmentationSource, GeneratorNet>& generators);

struct DeltaSummary {
  double median_dice_delta = 0;
  double median_hd_delta = 0;
  double median_asd_delta = 0;
  bool all_zero = true;
};
DeltaSummary summarize_arm(const ExperimentReport& r, const std::string& arm);

/// arm,seed,dice_before,dice_after,hd_before_mm,hd_after_mm,asd_before_mm,asd_after_mm
/// per seed, then a "median" and a "worst" row per arm.
std::string experiment_csv(const ExperimentReport& r);
/// Grouped bar chart: Dice, HD and ASD before and after per arm.
std::string experiment_svg(const ExperimentReport& r);

}  // namespace ngan

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "synseg/image.hpp"
#include "synseg/training.hpp"

namespace synseg {

// Class palette for evaluation and rendering. Label values index into names;
// background_index < 0 means the label set has no background class.
struct Palette {
  std::vector<std::string> names;
  int background_index = 0;
  int ignore_index = 255;

  // Category list fed to the model: every name except the background one.
  std::vector<std::string> foreground_names() const;
  // Label value for the i-th foreground name.
  std::vector<int> foreground_labels() const;
};

Palette load_palette(const std::string& path);
void save_palette(const Palette& p, const std::string& path);

// Per-category activation maps, upsampled to pixel resolution. Values are
// sigmoid outputs in [0, 1].
struct ActivationStack {
  std::vector<std::string> categories;
  std::vector<std::vector<float>> maps;  // each height * width, row-major
  int width = 0;
  int height = 0;
};

class SynSegModel;

ActivationStack run_activations(SynSegModel& model, const ImageRGB& image,
                                const std::vector<std::string>& categories, int out_w, int out_h);

enum class SegmentMode {
  labeled_only,     // argmax over the given categories everywhere
  with_background,  // background label wherever max activation < threshold
};

SegmentMode segment_mode_from_name(const std::string& name);
std::string segment_mode_name(SegmentMode m);

// Combined label map. labels[i] is assigned where category i wins the
// argmax (ties resolve to the lowest index). In with_background mode pixels
// whose best activation falls below threshold get background_label instead.
LabelImage apply_threshold(const ActivationStack& acts, double threshold, SegmentMode mode,
                           const std::vector<int>& labels, int background_label);

// ============================================================
// Metrics
// ============================================================

// Running per-class intersection / union counts; pixels whose ground-truth
// value equals ignore_label never contribute.
struct IoUCounts {
  std::vector<int64_t> inter;
  std::vector<int64_t> uni;

  explicit IoUCounts(int num_classes = 0)
      : inter(static_cast<size_t>(num_classes), 0), uni(static_cast<size_t>(num_classes), 0) {}

  void accumulate(const LabelImage& pred, const LabelImage& gt, int ignore_label);
};

// Mean IoU over classes that appear (union > 0); classes outside the range
// [0, num_classes) in pred are counted as misses against the ground truth.
double miou_from_counts(const IoUCounts& c);
double compute_miou(const LabelImage& pred, const LabelImage& gt, int num_classes,
                    int ignore_label = 255);

struct EvalResult {
  double miou = 0;
  std::vector<double> per_class_iou;  // -1 for classes with empty union
  int images = 0;
};

struct EvalItem {
  ImageRGB image;
  LabelImage gt;
  std::vector<std::string> categories;  // categories to prompt for this image
};

// Dataset-level evaluation: counts are summed across images before the mean.
EvalResult evaluate_dataset(SynSegModel& model, const std::vector<EvalItem>& items,
                            const Palette& palette, double threshold, SegmentMode mode);

std::vector<EvalItem> load_eval_items(const DatasetManifest& manifest, const Palette& palette);

// ============================================================
// Sweeps and ablation
// ============================================================

struct SweepRow {
  double threshold = 0;
  double miou = 0;
  double mean_mask_area = 0;  // mean over (image, category) of fraction >= threshold
};

// Activations are computed once per image and reused across thresholds.
std::vector<SweepRow> threshold_sweep(SynSegModel& model, const std::vector<EvalItem>& items,
                                      const Palette& palette, const std::vector<double>& thresholds,
                                      SegmentMode mode);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     const nlohmann::ordered_json& config_echo);

struct AblationRow {
  std::string name;
  LossWeights weights;
  LossReport first_step;  // before any update; terms match across configs
  double final_total = 0;
  double miou = 0;
};

// Train/eval once per configuration: the full objective, then each weight
// zeroed in turn (lambda4, lambda3, lambda2, lambda1). Deterministic given
// base.seed.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const DatasetManifest& manifest,
                                      const Palette& palette, double threshold, SegmentMode mode);

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const nlohmann::ordered_json& config_echo);

// ============================================================
// Rendering
// ============================================================

// Thresholded category masks tinted over the image (fixed color cycle,
// blended in category order), plus a bottom legend strip of color swatches.
ImageRGB render_overlay(const ImageRGB& image, const ActivationStack& acts, double threshold);

}  // namespace synseg

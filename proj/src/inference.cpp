#include "synseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "synseg/errors.hpp"
#include "synseg/fss.hpp"
#include "synseg/graph.hpp"

namespace synseg {

using nlohmann::json;
using nlohmann::ordered_json;

// ============================================================
// Palette
// ============================================================

std::vector<std::string> Palette::foreground_names() const {
  std::vector<std::string> out;
  for (int i = 0; i < static_cast<int>(names.size()); ++i) {
    if (i != background_index) out.push_back(names[static_cast<size_t>(i)]);
  }
  return out;
}

std::vector<int> Palette::foreground_labels() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(names.size()); ++i) {
    if (i != background_index) out.push_back(i);
  }
  return out;
}

Palette load_palette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open palette: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InputError("palette is not a JSON object: " + path);
  for (const auto& item : j.items()) {
    if (item.key() != "names" && item.key() != "background_index" && item.key() != "ignore_index") {
      throw InputError("unknown palette key '" + item.key() + "' in " + path);
    }
  }
  Palette p;
  if (!j.contains("names") || !j["names"].is_array() || j["names"].empty()) {
    throw InputError("palette must list class names: " + path);
  }
  for (const auto& n : j["names"]) {
    if (!n.is_string() || n.get<std::string>().empty()) {
      throw InputError("palette names must be non-empty strings: " + path);
    }
    p.names.push_back(n.get<std::string>());
  }
  p.background_index = j.value("background_index", -1);
  p.ignore_index = j.value("ignore_index", 255);
  if (p.background_index >= static_cast<int>(p.names.size())) {
    throw InputError("background_index out of range in " + path);
  }
  if (p.foreground_names().empty()) {
    throw InputError("palette needs at least one non-background class: " + path);
  }
  return p;
}

void save_palette(const Palette& p, const std::string& path) {
  ordered_json j;
  j["names"] = p.names;
  j["background_index"] = p.background_index;
  j["ignore_index"] = p.ignore_index;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write palette: " + path);
  out << j.dump(2) << "\n";
}

// ============================================================
// Activations and labeling
// ============================================================

ActivationStack run_activations(SynSegModel& model, const ImageRGB& image,
                                const std::vector<std::string>& categories, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw InputError("activation target size must be positive");
  ActivationStack stack;
  stack.width = out_w;
  stack.height = out_h;

  // Inference graphs never need the tape.
  Graph g(Graph::Precision::f32, /*record_grads=*/false);
  ImageForward fwd = model.forward_image(g, image, categories);
  for (const auto& cat : fwd.categories) {
    stack.categories.push_back(cat.category);
    stack.maps.push_back(
        bilinear_resize(cat.activation_arr.data(), fwd.grid_w, fwd.grid_h, out_w, out_h));
  }
  return stack;
}

SegmentMode segment_mode_from_name(const std::string& name) {
  if (name == "labeled_only") return SegmentMode::labeled_only;
  if (name == "with_background") return SegmentMode::with_background;
  throw InputError("unknown segmentation mode '" + name +
                   "' (expected labeled_only or with_background)");
}

std::string segment_mode_name(SegmentMode m) {
  return m == SegmentMode::labeled_only ? "labeled_only" : "with_background";
}

LabelImage apply_threshold(const ActivationStack& acts, double threshold, SegmentMode mode,
                           const std::vector<int>& labels, int background_label) {
  if (acts.categories.empty()) throw InputError("cannot label with zero categories");
  if (labels.size() != acts.categories.size()) {
    throw InputError("label list does not match the activation stack");
  }
  LabelImage out = make_labels(acts.width, acts.height);
  const size_t n = static_cast<size_t>(acts.width) * static_cast<size_t>(acts.height);
  for (size_t px = 0; px < n; ++px) {
    int best = 0;
    float best_v = acts.maps[0][px];
    for (size_t c = 1; c < acts.maps.size(); ++c) {
      if (acts.maps[c][px] > best_v) {  // strict: ties keep the lowest index
        best_v = acts.maps[c][px];
        best = static_cast<int>(c);
      }
    }
    int label = labels[static_cast<size_t>(best)];
    if (mode == SegmentMode::with_background && static_cast<double>(best_v) < threshold) {
      label = background_label;
    }
    out.labels[px] = static_cast<uint8_t>(label);
  }
  return out;
}

// ============================================================
// Metrics
// ============================================================

void IoUCounts::accumulate(const LabelImage& pred, const LabelImage& gt, int ignore_label) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw InputError("prediction and ground truth sizes differ");
  }
  const int num_classes = static_cast<int>(inter.size());
  const size_t n = gt.labels.size();
  for (size_t i = 0; i < n; ++i) {
    const int g = gt.labels[i];
    if (g == ignore_label) continue;
    const int p = pred.labels[i];
    if (g >= 0 && g < num_classes) {
      uni[static_cast<size_t>(g)] += 1;
      if (p == g) inter[static_cast<size_t>(g)] += 1;
    }
    // A wrong prediction inflates that class's union too (miss + false positive
    // must not double-count the overlap cell).
    if (p >= 0 && p < num_classes && p != g) uni[static_cast<size_t>(p)] += 1;
  }
}

double miou_from_counts(const IoUCounts& c) {
  double sum = 0;
  int present = 0;
  for (size_t k = 0; k < c.uni.size(); ++k) {
    if (c.uni[k] > 0) {
      sum += static_cast<double>(c.inter[k]) / static_cast<double>(c.uni[k]);
      present += 1;
    }
  }
  return present == 0 ? 0.0 : sum / present;
}

double compute_miou(const LabelImage& pred, const LabelImage& gt, int num_classes,
                    int ignore_label) {
  IoUCounts c(num_classes);
  c.accumulate(pred, gt, ignore_label);
  return miou_from_counts(c);
}

// ============================================================
// Dataset evaluation
// ============================================================

std::vector<EvalItem> load_eval_items(const DatasetManifest& manifest, const Palette& palette) {
  std::vector<EvalItem> items;
  const std::vector<std::string> cats = palette.foreground_names();
  for (const auto& rec : manifest.records) {
    if (rec.mask_path.empty()) {
      throw InputError("manifest record lacks mask_path needed for evaluation: " + rec.image_path);
    }
    EvalItem item;
    item.image = load_ppm(rec.image_path);
    item.gt = load_pgm(rec.mask_path);
    item.categories = cats;  // evaluation prompts every palette class
    items.push_back(std::move(item));
  }
  if (items.empty()) throw InputError("no evaluable records in manifest");
  return items;
}

EvalResult evaluate_dataset(SynSegModel& model, const std::vector<EvalItem>& items,
                            const Palette& palette, double threshold, SegmentMode mode) {
  const std::vector<int> labels = palette.foreground_labels();
  IoUCounts counts(static_cast<int>(palette.names.size()));
  for (const auto& item : items) {
    ActivationStack acts =
        run_activations(model, item.image, item.categories, item.gt.width, item.gt.height);
    LabelImage pred = apply_threshold(acts, threshold, mode, labels, palette.background_index);
    counts.accumulate(pred, item.gt, palette.ignore_index);
  }
  EvalResult out;
  out.images = static_cast<int>(items.size());
  out.miou = miou_from_counts(counts);
  for (size_t k = 0; k < counts.uni.size(); ++k) {
    out.per_class_iou.push_back(counts.uni[k] > 0 ? static_cast<double>(counts.inter[k]) /
                                                        static_cast<double>(counts.uni[k])
                                                  : -1.0);
  }
  return out;
}

// ============================================================
// Threshold sweep
// ============================================================

std::vector<SweepRow> threshold_sweep(SynSegModel& model, const std::vector<EvalItem>& items,
                                      const Palette& palette, const std::vector<double>& thresholds,
                                      SegmentMode mode) {
  if (thresholds.empty()) throw InputError("threshold sweep needs at least one threshold");
  const std::vector<int> labels = palette.foreground_labels();

  std::vector<ActivationStack> stacks;
  stacks.reserve(items.size());
  for (const auto& item : items) {
    stacks.push_back(
        run_activations(model, item.image, item.categories, item.gt.width, item.gt.height));
  }

  std::vector<SweepRow> rows;
  for (double t : thresholds) {
    IoUCounts counts(static_cast<int>(palette.names.size()));
    double area_sum = 0;
    int64_t area_terms = 0;
    for (size_t i = 0; i < items.size(); ++i) {
      LabelImage pred = apply_threshold(stacks[i], t, mode, labels, palette.background_index);
      counts.accumulate(pred, items[i].gt, palette.ignore_index);
      for (const auto& map : stacks[i].maps) {
        int64_t on = 0;
        for (float v : map) {
          if (static_cast<double>(v) >= t) ++on;
        }
        area_sum += static_cast<double>(on) / static_cast<double>(map.size());
        area_terms += 1;
      }
    }
    SweepRow row;
    row.threshold = t;
    row.miou = miou_from_counts(counts);
    row.mean_mask_area = area_terms == 0 ? 0.0 : area_sum / static_cast<double>(area_terms);
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     const ordered_json& config_echo) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write sweep csv: " + path);
  out << "# config: " << config_echo.dump() << "\n";
  out << "threshold,miou,mean_mask_area\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.6f,%.6f\n", r.threshold, r.miou, r.mean_mask_area);
    out << buf;
  }
}

// ============================================================
// Ablation
// ============================================================

std::vector<AblationRow> run_ablation(const TrainConfig& base, const DatasetManifest& manifest,
                                      const Palette& palette, double threshold, SegmentMode mode) {
  struct Config {
    std::string name;
    int zeroed;  // -1 keeps every weight
  };
  // Row order mirrors the usual drop-one study: background term last to go
  // first, because it carries the largest default weight.
  const std::vector<Config> configs = {
      {"full", -1}, {"lambda4_zero", 4}, {"lambda3_zero", 3}, {"lambda2_zero", 2},
      {"lambda1_zero", 1}};

  std::vector<EvalItem> items = load_eval_items(manifest, palette);

  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    TrainConfig cfg = base;
    if (c.zeroed == 1) cfg.weights.lambda1 = 0;
    if (c.zeroed == 2) cfg.weights.lambda2 = 0;
    if (c.zeroed == 3) cfg.weights.lambda3 = 0;
    if (c.zeroed == 4) cfg.weights.lambda4 = 0;

    // Re-run the full loop per configuration; same seed, so initialization
    // and batch order are shared and first-step terms are comparable.
    std::map<int, ImageRGB> images;
    for (size_t i = 0; i < manifest.records.size(); ++i) {
      images.emplace(static_cast<int>(i), load_ppm(manifest.records[i].image_path));
    }
    SynSegModel model(cfg.encoder, cfg.dims, cfg.seed);

    AblationRow row;
    row.name = c.name;
    row.weights = cfg.weights;
    bool first = true;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      auto batches = build_batches(manifest, cfg, static_cast<uint64_t>(epoch));
      for (const auto& batch : batches) {
        std::vector<TrainImage> loaded;
        for (const auto& item : batch) {
          loaded.push_back(TrainImage{manifest.records[static_cast<size_t>(item.record)].image_path,
                                      images.at(item.record), item.categories});
        }
        LossReport report = train_step(model, loaded, cfg);
        if (first) {
          row.first_step = report;
          first = false;
        }
        row.final_total = report.total;
      }
    }
    row.miou = evaluate_dataset(model, items, palette, threshold, mode).miou;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const ordered_json& config_echo) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write ablation csv: " + path);
  out << "# config: " << config_echo.dump() << "\n";
  out << "name,lambda1,lambda2,lambda3,lambda4,first_total,final_total,miou\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%.6g,%.6g,%.6f,%.6f,%.6f\n", r.name.c_str(),
                  r.weights.lambda1, r.weights.lambda2, r.weights.lambda3, r.weights.lambda4,
                  r.first_step.total, r.final_total, r.miou);
    out << buf;
  }
}

// ============================================================
// Overlay rendering
// ============================================================

namespace {

struct Color {
  float r, g, b;
};

// Eight distinguishable tints, cycled for longer category lists.
const Color kOverlayColors[8] = {
    {0.86f, 0.24f, 0.24f}, {0.24f, 0.78f, 0.31f}, {0.27f, 0.43f, 0.90f}, {0.90f, 0.78f, 0.24f},
    {0.78f, 0.31f, 0.78f}, {0.27f, 0.78f, 0.78f}, {0.94f, 0.59f, 0.24f}, {0.55f, 0.35f, 0.86f}};

}  // namespace

ImageRGB render_overlay(const ImageRGB& image, const ActivationStack& acts, double threshold) {
  if (acts.width != image.width || acts.height != image.height) {
    throw InputError("activation stack does not match image size");
  }
  const int legend_h = 8;
  ImageRGB out = make_image(image.width, image.height + legend_h, 1.0f, 1.0f, 1.0f);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) out.set(x, y, c, image.get(x, y, c));
    }
  }

  const float alpha = 0.45f;
  for (size_t k = 0; k < acts.maps.size(); ++k) {
    const Color& col = kOverlayColors[k % 8];
    const float tint[3] = {col.r, col.g, col.b};
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const size_t px = static_cast<size_t>(y) * image.width + static_cast<size_t>(x);
        if (static_cast<double>(acts.maps[k][px]) < threshold) continue;
        for (int c = 0; c < 3; ++c) {
          out.set(x, y, c, (1.0f - alpha) * out.get(x, y, c) + alpha * tint[c]);
        }
      }
    }
  }

  // Legend: one 16px swatch per category with 2px white gaps.
  int x0 = 0;
  for (size_t k = 0; k < acts.maps.size() && x0 < image.width; ++k) {
    const Color& col = kOverlayColors[k % 8];
    for (int x = x0; x < std::min(image.width, x0 + 16); ++x) {
      for (int y = image.height; y < image.height + legend_h; ++y) {
        out.set(x, y, 0, col.r);
        out.set(x, y, 1, col.g);
        out.set(x, y, 2, col.b);
      }
    }
    x0 += 18;
  }
  return out;
}

}  // namespace synseg

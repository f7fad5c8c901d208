#pragma once

#include <vector>

#include <json.hpp>

#include "synseg/graph.hpp"

namespace synseg {

// Weights for the four loss terms: alignment, foreground/background contrast,
// background coherence, foreground separation.
struct LossWeights {
  double lambda1 = 1.0;   // align
  double lambda2 = 1.0;   // cont
  double lambda3 = 10.0;  // back
  double lambda4 = 1.0;   // sep
};

void to_json(nlohmann::ordered_json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

// All losses operate on per-category feature vectors of one image. Cosines
// (or their 1-cos complements, for the contrast-style terms) are clipped to
// [0.005, 0.995] before the log, so every pair term lies in
// [-log 0.995, -log 0.005] and saturated pairs carry zero gradient. The
// complement is clamped at full precision in one kernel; forming 1-cos from
// an already rounded cosine would shift saturated terms by ~1e-6.
//
//   align: -(1/N)   sum_i   log  cos(fg_i, text_i)
//   cont:  -(1/N)   sum_i   log (1 - cos(fg_i, bg_i))
//   back:  -(1/N^2) sum_jk  log  cos(bg_j, bg_k)      (all ordered pairs)
//   sep:   -(1/N^2) sum_jk  log (1 - cos(fg_j, fg_k)) (all ordered pairs)
//
// The ordered-pair sums include the diagonal; those terms sit at the clip
// bound and are constants with zero gradient, adding -log(0.005)/N per loss.
Value loss_align(Graph& g, const std::vector<Value>& fg, const std::vector<Value>& text);
Value loss_cont(Graph& g, const std::vector<Value>& fg, const std::vector<Value>& bg);
Value loss_back(Graph& g, const std::vector<Value>& bg);
Value loss_sep(Graph& g, const std::vector<Value>& fg);

struct ImageLossValues {
  Value align, cont, back, sep, total;
};

ImageLossValues image_losses(Graph& g, const std::vector<Value>& fg,
                             const std::vector<Value>& bg, const std::vector<Value>& text,
                             const LossWeights& w);

struct PerImageLosses {
  double align = 0, cont = 0, back = 0, sep = 0, total = 0;
};

// Batch report: per-image terms plus batch means; total is the weighted
// recombination of the mean terms (equal to the mean of per-image totals).
struct LossReport {
  double align = 0, cont = 0, back = 0, sep = 0, total = 0;
  std::vector<PerImageLosses> per_image;
  std::vector<int> n_categories;

  nlohmann::ordered_json to_json() const;
};

LossReport make_report(const std::vector<PerImageLosses>& images,
                       const std::vector<int>& n_categories, const LossWeights& w);

}  // namespace synseg

#include "synseg/synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "synseg/errors.hpp"
#include "synseg/image.hpp"
#include "synseg/inference.hpp"
#include "synseg/rng.hpp"

namespace synseg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const std::vector<std::string>& synthetic_categories() {
  static const std::vector<std::string> kCategories = {"square", "disk", "bar", "cross"};
  return kCategories;
}

namespace {

struct Shade {
  uint8_t r, g, b;
};

constexpr Shade kBackground{40, 40, 40};
constexpr Shade kShapeColor[4] = {
    {220, 40, 40},   // square: red
    {40, 200, 60},   // disk: green
    {50, 90, 230},   // bar: blue
    {230, 210, 50},  // cross: yellow
};

void put(ImageRGB& img, LabelImage& mask, int x, int y, int cat) {
  const Shade& s = kShapeColor[cat];
  img.set(x, y, 0, static_cast<float>(s.r) / 255.0f);
  img.set(x, y, 1, static_cast<float>(s.g) / 255.0f);
  img.set(x, y, 2, static_cast<float>(s.b) / 255.0f);
  mask.set(x, y, static_cast<uint8_t>(cat + 1));
}

// Bounding boxes per class; placement keeps them on a 4px lattice so shape
// edges line up with encoder patches. Shapes stay small relative to the
// image so the background stays the dominant mass in every map.
void bbox_of(int cat, int& w, int& h) {
  switch (cat) {
    case 0: w = 8, h = 8; break;    // square
    case 1: w = 8, h = 8; break;    // disk, radius 4
    case 2: w = 12, h = 4; break;   // bar
    default: w = 12, h = 12; break; // cross, arms 4 wide
  }
}

void draw_shape(ImageRGB& img, LabelImage& mask, int cat, int x0, int y0) {
  int w, h;
  bbox_of(cat, w, h);
  switch (cat) {
    case 0:
    case 2:
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) put(img, mask, x, y, cat);
      break;
    case 1: {
      const double cx = x0 + w / 2.0;
      const double cy = y0 + h / 2.0;
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          const double dx = (x + 0.5) - cx;
          const double dy = (y + 0.5) - cy;
          if (dx * dx + dy * dy <= 16.0) put(img, mask, x, y, cat);
        }
      }
      break;
    }
    default:
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          const bool in_v = x >= x0 + 4 && x < x0 + 8;
          const bool in_h = y >= y0 + 4 && y < y0 + 8;
          if (in_v || in_h) put(img, mask, x, y, cat);
        }
      }
      break;
  }
}

// Offset inside a quadrant, on the 4px lattice, keeping the bbox inside.
int lattice_offset(int room, Rng& rng) {
  const int slots = room / 4 + 1;
  return 4 * static_cast<int>(rng.below(static_cast<uint64_t>(slots)));
}

}  // namespace

void generate_synthetic_dataset(const std::string& dir, const SynthConfig& cfg) {
  if (cfg.n_images < 4) throw InputError("synthetic dataset needs at least 4 images");
  if (cfg.side < 32 || cfg.side % 8 != 0) {
    throw InputError("synthetic image side must be a multiple of 8, at least 32");
  }

  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");

  const auto& cats = synthetic_categories();
  const int q = cfg.side / 2;

  std::ofstream manifest(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw InputError("cannot write manifest under " + dir);

  // Fixed 8-image class schedule: every class appears 5 times per cycle and
  // image i carries class i for i < 4. Placement stays seed-driven.
  static const std::vector<std::vector<int>> kSchedule = {
      {0, 1, 2}, {1, 2, 3}, {2, 3, 0}, {3, 0, 1},
      {0, 1},    {2, 3},    {1, 3},    {0, 2},
  };

  for (int i = 0; i < cfg.n_images; ++i) {
    Rng rng = seeded_stream(cfg.seed, "synthetic_image", static_cast<uint64_t>(i));

    std::vector<int> chosen = kSchedule[static_cast<size_t>(i) % kSchedule.size()];
    rng.shuffle(chosen);

    std::vector<int> slots = {0, 1, 2, 3};  // quadrants, row-major
    rng.shuffle(slots);

    float bg = static_cast<float>(kBackground.r) / 255.0f;
    ImageRGB img = make_image(cfg.side, cfg.side, bg, bg, bg);
    LabelImage mask = make_labels(cfg.side, cfg.side, 0);

    for (size_t k = 0; k < chosen.size(); ++k) {
      const int cat = chosen[k];
      const int slot = slots[k];
      const int qx = (slot % 2) * q;
      const int qy = (slot / 2) * q;
      int w, h;
      bbox_of(cat, w, h);
      const int x0 = qx + lattice_offset(q - w, rng);
      const int y0 = qy + lattice_offset(q - h, rng);
      draw_shape(img, mask, cat, x0, y0);
    }

    char name[32];
    std::snprintf(name, sizeof(name), "img_%03d", i);
    const std::string image_rel = std::string("images/") + name + ".ppm";
    const std::string mask_rel = std::string("masks/") + name + ".pgm";
    save_ppm(img, (fs::path(dir) / image_rel).string());
    save_pgm(mask, (fs::path(dir) / mask_rel).string());

    ordered_json rec;
    rec["image_path"] = image_rel;
    rec["mask_path"] = mask_rel;
    ordered_json names = ordered_json::array();
    for (int c : chosen) names.push_back(cats[static_cast<size_t>(c)]);
    rec["categories"] = names;
    manifest << rec.dump() << "\n";
  }

  Palette palette;
  palette.names.push_back("background");
  for (const auto& c : cats) palette.names.push_back(c);
  palette.background_index = 0;
  palette.ignore_index = 255;
  save_palette(palette, (fs::path(dir) / "palette.json").string());
}

}  // namespace synseg

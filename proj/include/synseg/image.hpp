#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace synseg {

// RGB image, row-major, channels interleaved, values in [0, 1].
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // size = width * height * 3

  float get(int x, int y, int c) const {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
  void set(int x, int y, int c, float v) {
    rgb[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)] = v;
  }
};

// Single-channel label image; 255 is the ignore value by convention.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> labels;  // size = width * height

  uint8_t get(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
  void set(int x, int y, uint8_t v) { labels[static_cast<size_t>(y) * width + x] = v; }
};

ImageRGB make_image(int width, int height, float r = 0, float g = 0, float b = 0);
LabelImage make_labels(int width, int height, uint8_t fill = 0);

// Binary netpbm I/O (P6 for RGB, P5 for labels, maxval 255).
ImageRGB load_ppm(const std::string& path);
void save_ppm(const ImageRGB& img, const std::string& path);
LabelImage load_pgm(const std::string& path);
void save_pgm(const LabelImage& img, const std::string& path);

// Bilinear upsampling of a single-channel map (row-major, in_h x in_w) to
// out_h x out_w, half-pixel-center convention, borders clamped.
std::vector<float> bilinear_resize(const std::vector<float>& in, int in_w, int in_h,
                                   int out_w, int out_h);

}  // namespace synseg

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace synseg {

// Four flat-color shape classes on a dark background. Pixel label = index+1;
// 0 is background.
const std::vector<std::string>& synthetic_categories();

struct SynthConfig {
  int n_images = 8;
  int side = 32;  // square images; multiple of 8, at least 32
  uint64_t seed = 42;
};

// Writes images/*.ppm, masks/*.pgm, manifest.jsonl (relative paths) and
// palette.json under dir. Each image carries 2-3 shapes in distinct
// quadrants; the first four images each pin one class so every class is
// present regardless of n_images or seed. Deterministic in seed.
void generate_synthetic_dataset(const std::string& dir, const SynthConfig& cfg);

}  // namespace synseg

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "synseg/image.hpp"
#include "synseg/tensor.hpp"

namespace synseg {

enum class EncoderKind { seeded_mock, toy_patch, pretrained_adapter };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

struct EncoderConfig {
  EncoderKind kind = EncoderKind::toy_patch;
  int image_side = 32;       // square inputs only
  int patch_size = 4;        // must divide image_side
  int visual_channels = 64;  // C_v
  int text_dim = 64;         // d
  uint64_t seed = 42;
  std::string prompt_template;  // "" = raw category; "{}" substitutes it
  double position_scale = 0.0;  // toy encoder position offsets; 0 keeps the
                                // patch embed translation-invariant
  std::string adapter_path;     // pretrained_adapter weights container

  int grid_side() const { return image_side / patch_size; }
  int tokens() const { return grid_side() * grid_side(); }
  void validate() const;
};

void to_json(nlohmann::ordered_json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// Per-patch feature tokens: shape [grid_h*grid_w, channels], rows in
// row-major spatial order (y major, x minor).
struct VisualFeatureGrid {
  DenseArray tokens;
  int grid_h = 0;
  int grid_w = 0;
  int channels = 0;
};

struct TextEmbedding {
  DenseArray vec;  // [1, d]
  std::string category;
};

// Encoders are frozen: they expose weight snapshots for inspection but no
// trainable parameters, and training never touches them.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual VisualFeatureGrid encode(const ImageRGB& image) const = 0;
  virtual std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual TextEmbedding encode(const std::string& category) const = 0;
  virtual std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const = 0;
};

struct EncoderPair {
  std::unique_ptr<ImageEncoder> image;
  std::unique_ptr<TextEncoder> text;
};

// Builds the encoder pair for the config. pretrained_adapter reads
// cfg.adapter_path (a tensor container; see save_pretrained_adapter).
EncoderPair make_encoders(const EncoderConfig& cfg);

// Writes an adapter weights container: visual.patch_weight [patch^2*3, C_v],
// visual.pos_offset [tokens, C_v] (applied as stored), and a text embedding
// table text.embeddings [|vocab|, d] with the vocabulary in the manifest.
void save_pretrained_adapter(const std::string& path, const EncoderConfig& cfg,
                             const DenseArray& patch_weight, const DenseArray& pos_offset,
                             const std::vector<std::string>& vocab, const DenseArray& text_table);

}  // namespace synseg

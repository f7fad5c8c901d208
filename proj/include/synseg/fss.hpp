#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "synseg/encoders.hpp"
#include "synseg/graph.hpp"

namespace synseg {

struct ModelDims {
  int decoder_blocks = 2;
  int decoder_heads = 4;
  int ff_mult = 4;
  int film_hidden = 64;

  void validate() const;  // positive extents; head divisibility checks at init
};

void to_json(nlohmann::ordered_json& j, const ModelDims& d);
void from_json(const nlohmann::json& j, ModelDims& d);

// Text-conditioned channel modulation: out[p,c] = (1 + gamma[c]) * in[p,c] + beta[c]
// with (gamma, beta) produced by a two-layer MLP from the text embedding.
// The final layer is zero-initialised, so at initialisation the fusion is an
// exact identity for every category.
struct FilmModule {
  Parameter w1, b1, w2, b2;
  void init(int text_dim, int visual_channels, int hidden, uint64_t seed);
};

Value film_fuse(Graph& g, Value grid, Value text_row, FilmModule& film);

// Per-position linear map (1x1-convolution semantics) from visual channels to
// the text embedding dimension. Trainable.
struct ProjectorModule {
  Parameter weight, bias;
  void init(int visual_channels, int text_dim, uint64_t seed);
};

Value project(Graph& g, Value cond_tokens, ProjectorModule& proj);

// Transformer decoder over the token sequence: pre-norm blocks
// (self-attention + feed-forward), then a linear head to one logit per token.
struct DecoderBlock {
  Parameter ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln2_gain, ln2_bias, ff1_w, ff1_b, ff2_w, ff2_b;
};

struct DecoderModule {
  std::vector<DecoderBlock> blocks;
  Parameter head_w, head_b;
  int heads = 4;
  void init(int visual_channels, const ModelDims& dims, uint64_t seed);
};

Value decode_logits(Graph& g, Value tokens, DecoderModule& dec);

struct ActivationMap {
  Value logits;      // [grid_h, grid_w]
  Value activation;  // sigmoid(logits)
};

ActivationMap decode_activation(Graph& g, Value cond_tokens, DecoderModule& dec, int grid_h,
                                int grid_w);

// Synergy features: with a the flattened activation map (row vector) and P
// the projected tokens, fg = a.P selects foreground mass and bg = (1-a).P the
// complement; fg + bg always equals the column sums of P.
struct SynergyPair {
  Value fg;  // [1, d]
  Value bg;  // [1, d]
};

SynergyPair build_synergy_pair(Graph& g, Value activation_map, Value projected);

struct CategoryForward {
  std::string category;
  Value logits;
  Value activation;        // [grid_h, grid_w]
  Value fg, bg;            // [1, d]
  Value text;              // [1, d], constant leaf (encoders are frozen)
  DenseArray activation_arr;
};

struct ImageForward {
  std::vector<CategoryForward> categories;
  int grid_h = 0;
  int grid_w = 0;
};

// The full trainable model: frozen encoders plus FiLM, projector and decoder.
class SynSegModel {
 public:
  SynSegModel(EncoderConfig enc_cfg, ModelDims dims, uint64_t init_seed);

  // Runs encode -> film -> decode -> project -> synergy for each distinct
  // category (duplicates are collapsed, first occurrence wins).
  ImageForward forward_image(Graph& g, const ImageRGB& image,
                             const std::vector<std::string>& categories);

  // Trainable tensors in fixed registry order (checkpoint order).
  std::vector<std::pair<std::string, Parameter*>> parameters();
  std::vector<std::pair<std::string, DenseArray>> encoder_snapshot() const;

  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const ModelDims& model_dims() const { return dims_; }
  const ImageEncoder& image_encoder() const { return *encoders_.image; }
  const TextEncoder& text_encoder() const { return *encoders_.text; }

  FilmModule& film() { return film_; }
  ProjectorModule& projector() { return proj_; }
  DecoderModule& decoder() { return dec_; }

  int64_t steps_trained = 0;

 private:
  EncoderConfig enc_cfg_;
  ModelDims dims_;
  EncoderPair encoders_;
  FilmModule film_;
  ProjectorModule proj_;
  DecoderModule dec_;
};

}  // namespace synseg

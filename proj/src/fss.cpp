#include "synseg/fss.hpp"

#include <cmath>
#include <stdexcept>

#include "synseg/errors.hpp"
#include "synseg/rng.hpp"

namespace synseg {

void to_json(nlohmann::ordered_json& j, const ModelDims& d) {
  j = nlohmann::ordered_json{{"decoder_blocks", d.decoder_blocks},
                             {"decoder_heads", d.decoder_heads},
                             {"ff_mult", d.ff_mult},
                             {"film_hidden", d.film_hidden}};
}

void from_json(const nlohmann::json& j, ModelDims& d) {
  if (j.contains("decoder_blocks")) d.decoder_blocks = j.at("decoder_blocks").get<int>();
  if (j.contains("decoder_heads")) d.decoder_heads = j.at("decoder_heads").get<int>();
  if (j.contains("ff_mult")) d.ff_mult = j.at("ff_mult").get<int>();
  if (j.contains("film_hidden")) d.film_hidden = j.at("film_hidden").get<int>();
}

void ModelDims::validate() const {
  if (decoder_blocks < 1) throw InputError("decoder_blocks must be >= 1");
  if (decoder_heads < 1) throw InputError("decoder_heads must be >= 1");
  if (ff_mult < 1) throw InputError("ff_mult must be >= 1");
  if (film_hidden < 1) throw InputError("film_hidden must be >= 1");
}

namespace {

DenseArray xavier_uniform(int rows, int cols, uint64_t seed, std::string_view name) {
  DenseArray w({rows, cols});
  Rng rng = seeded_stream(seed, name);
  const double a = std::sqrt(6.0 / (rows + cols));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(rng.uniform(-a, a));
  return w;
}

Parameter weight_param(int rows, int cols, uint64_t seed, std::string_view name) {
  return Parameter(xavier_uniform(rows, cols, seed, name), /*trainable=*/true, /*decay=*/true);
}

Parameter bias_param(int len) {
  return Parameter(DenseArray::zeros({1, len}), /*trainable=*/true, /*decay=*/false);
}

Parameter norm_param(int len, float fill) {
  return Parameter(DenseArray::full({1, len}, fill), /*trainable=*/true, /*decay=*/false);
}

}  // namespace

// ---------------------------------------------------------------------------
// FiLM
// ---------------------------------------------------------------------------

void FilmModule::init(int text_dim, int visual_channels, int hidden, uint64_t seed) {
  if (hidden <= 0) throw std::invalid_argument("film: hidden width must be positive");
  w1 = weight_param(text_dim, hidden, seed, "film.mlp.w1");
  b1 = bias_param(hidden);
  // Zero final layer: gamma = beta = 0 at init, i.e. exact identity fusion.
  w2 = Parameter(DenseArray::zeros({hidden, 2 * visual_channels}), true, true);
  b2 = bias_param(2 * visual_channels);
}

Value film_fuse(Graph& g, Value grid, Value text_row, FilmModule& film) {
  const auto& gs = g.shape(grid);
  if (gs.size() != 2) throw std::invalid_argument("film_fuse: grid must be [tokens, channels]");
  const int cv = gs[1];
  Value h = g.gelu(g.linear(text_row, g.param(film.w1), g.param(film.b1)));
  Value gb = g.linear(h, g.param(film.w2), g.param(film.b2));  // [1, 2*cv]
  Value gamma = g.slice_cols(gb, 0, cv);
  Value beta = g.slice_cols(gb, cv, cv);
  return g.add_rowvec(g.mul_rowvec(grid, g.affine(gamma, 1.0, 1.0)), beta);
}

// ---------------------------------------------------------------------------
// Projector
// ---------------------------------------------------------------------------

void ProjectorModule::init(int visual_channels, int text_dim, uint64_t seed) {
  if (visual_channels == text_dim) {
    DenseArray eye = DenseArray::zeros({visual_channels, text_dim});
    for (int i = 0; i < visual_channels; ++i) eye.at(i, i) = 1.0f;
    weight = Parameter(std::move(eye), true, true);
  } else {
    weight = weight_param(visual_channels, text_dim, seed, "projector.weight");
  }
  bias = bias_param(text_dim);
}

Value project(Graph& g, Value cond_tokens, ProjectorModule& proj) {
  return g.linear(cond_tokens, g.param(proj.weight), g.param(proj.bias));
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

void DecoderModule::init(int visual_channels, const ModelDims& dims, uint64_t seed) {
  if (dims.decoder_blocks < 1) throw std::invalid_argument("decoder: needs at least one block");
  if (dims.decoder_heads < 1 || visual_channels % dims.decoder_heads != 0)
    throw std::invalid_argument("decoder: head count " + std::to_string(dims.decoder_heads) +
                                " must divide channel width " + std::to_string(visual_channels));
  if (dims.ff_mult < 1) throw std::invalid_argument("decoder: ff_mult must be positive");
  heads = dims.decoder_heads;
  const int cv = visual_channels;
  const int ff = dims.ff_mult * cv;
  blocks.clear();
  blocks.resize(static_cast<size_t>(dims.decoder_blocks));
  for (int i = 0; i < dims.decoder_blocks; ++i) {
    DecoderBlock& b = blocks[static_cast<size_t>(i)];
    const std::string p = "decoder.block" + std::to_string(i) + ".";
    b.ln1_gain = norm_param(cv, 1.0f);
    b.ln1_bias = norm_param(cv, 0.0f);
    b.wq = weight_param(cv, cv, seed, p + "wq");
    b.bq = bias_param(cv);
    b.wk = weight_param(cv, cv, seed, p + "wk");
    b.bk = bias_param(cv);
    b.wv = weight_param(cv, cv, seed, p + "wv");
    b.bv = bias_param(cv);
    b.wo = weight_param(cv, cv, seed, p + "wo");
    b.bo = bias_param(cv);
    b.ln2_gain = norm_param(cv, 1.0f);
    b.ln2_bias = norm_param(cv, 0.0f);
    b.ff1_w = weight_param(cv, ff, seed, p + "ff1");
    b.ff1_b = bias_param(ff);
    b.ff2_w = weight_param(ff, cv, seed, p + "ff2");
    b.ff2_b = bias_param(cv);
  }
  head_w = weight_param(cv, 1, seed, "decoder.head");
  head_b = bias_param(1);
}

Value decode_logits(Graph& g, Value tokens, DecoderModule& dec) {
  const auto& ts = g.shape(tokens);
  if (ts.size() != 2) throw std::invalid_argument("decode: tokens must be [tokens, channels]");
  const int cv = ts[1];
  const int dh = cv / dec.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Value x = tokens;
  for (DecoderBlock& b : dec.blocks) {
    Value h = g.layer_norm_rows(x, g.param(b.ln1_gain), g.param(b.ln1_bias));
    Value q = g.linear(h, g.param(b.wq), g.param(b.bq));
    Value k = g.linear(h, g.param(b.wk), g.param(b.bk));
    Value v = g.linear(h, g.param(b.wv), g.param(b.bv));
    std::vector<Value> heads_out;
    heads_out.reserve(static_cast<size_t>(dec.heads));
    for (int i = 0; i < dec.heads; ++i) {
      Value qi = g.slice_cols(q, i * dh, dh);
      Value ki = g.slice_cols(k, i * dh, dh);
      Value vi = g.slice_cols(v, i * dh, dh);
      Value scores = g.scale(g.matmul(qi, g.transpose(ki)), att_scale);
      Value attn = g.softmax_rows(scores);
      heads_out.push_back(g.matmul(attn, vi));
    }
    Value o = g.linear(g.concat_cols(heads_out), g.param(b.wo), g.param(b.bo));
    x = g.add(x, o);

    Value h2 = g.layer_norm_rows(x, g.param(b.ln2_gain), g.param(b.ln2_bias));
    Value f = g.linear(g.gelu(g.linear(h2, g.param(b.ff1_w), g.param(b.ff1_b))),
                       g.param(b.ff2_w), g.param(b.ff2_b));
    x = g.add(x, f);
  }
  return g.linear(x, g.param(dec.head_w), g.param(dec.head_b));  // [tokens, 1]
}

ActivationMap decode_activation(Graph& g, Value cond_tokens, DecoderModule& dec, int grid_h,
                                int grid_w) {
  Value logits = g.reshape(decode_logits(g, cond_tokens, dec), {grid_h, grid_w});
  return ActivationMap{logits, g.sigmoid(logits)};
}

// ---------------------------------------------------------------------------
// Synergy features
// ---------------------------------------------------------------------------

SynergyPair build_synergy_pair(Graph& g, Value activation_map, Value projected) {
  const auto& ps = g.shape(projected);
  if (ps.size() != 2) throw std::invalid_argument("build_synergy_pair: projected must be 2-D");
  const int tokens = ps[0];
  if (shape_numel(g.shape(activation_map)) != tokens)
    throw std::invalid_argument(
        "build_synergy_pair: activation element count does not match token count");
  Value a = g.reshape(activation_map, {1, tokens});
  Value fg = g.matmul(a, projected);
  Value bg = g.matmul(g.affine(a, -1.0, 1.0), projected);
  return SynergyPair{fg, bg};
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

SynSegModel::SynSegModel(EncoderConfig enc_cfg, ModelDims dims, uint64_t init_seed)
    : enc_cfg_(std::move(enc_cfg)), dims_(dims) {
  enc_cfg_.validate();
  encoders_ = make_encoders(enc_cfg_);
  film_.init(enc_cfg_.text_dim, enc_cfg_.visual_channels, dims_.film_hidden, init_seed);
  proj_.init(enc_cfg_.visual_channels, enc_cfg_.text_dim, init_seed);
  dec_.init(enc_cfg_.visual_channels, dims_, init_seed);
}

ImageForward SynSegModel::forward_image(Graph& g, const ImageRGB& image,
                                        const std::vector<std::string>& categories) {
  std::vector<std::string> distinct;
  for (const auto& c : categories) {
    bool seen = false;
    for (const auto& d : distinct) seen = seen || d == c;
    if (!seen) distinct.push_back(c);
  }
  if (distinct.empty())
    throw std::invalid_argument("forward_image: at least one category is required");

  VisualFeatureGrid grid = encoders_.image->encode(image);
  Value grid_v = g.input(grid.tokens);

  ImageForward fwd;
  fwd.grid_h = grid.grid_h;
  fwd.grid_w = grid.grid_w;
  for (const auto& cat : distinct) {
    TextEmbedding t = encoders_.text->encode(cat);
    Value text_v = g.input(t.vec);
    Value cond = film_fuse(g, grid_v, text_v, film_);
    ActivationMap map = decode_activation(g, cond, dec_, grid.grid_h, grid.grid_w);
    Value proj = project(g, cond, proj_);
    SynergyPair pair = build_synergy_pair(g, map.activation, proj);
    fwd.categories.push_back(CategoryForward{cat, map.logits, map.activation, pair.fg, pair.bg,
                                             text_v, g.value(map.activation)});
  }
  return fwd;
}

std::vector<std::pair<std::string, Parameter*>> SynSegModel::parameters() {
  std::vector<std::pair<std::string, Parameter*>> out;
  out.emplace_back("film.mlp.w1", &film_.w1);
  out.emplace_back("film.mlp.b1", &film_.b1);
  out.emplace_back("film.mlp.w2", &film_.w2);
  out.emplace_back("film.mlp.b2", &film_.b2);
  out.emplace_back("projector.weight", &proj_.weight);
  out.emplace_back("projector.bias", &proj_.bias);
  for (size_t i = 0; i < dec_.blocks.size(); ++i) {
    DecoderBlock& b = dec_.blocks[i];
    const std::string p = "decoder.block" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1.gain", &b.ln1_gain);
    out.emplace_back(p + "ln1.bias", &b.ln1_bias);
    out.emplace_back(p + "attn.wq", &b.wq);
    out.emplace_back(p + "attn.bq", &b.bq);
    out.emplace_back(p + "attn.wk", &b.wk);
    out.emplace_back(p + "attn.bk", &b.bk);
    out.emplace_back(p + "attn.wv", &b.wv);
    out.emplace_back(p + "attn.bv", &b.bv);
    out.emplace_back(p + "attn.wo", &b.wo);
    out.emplace_back(p + "attn.bo", &b.bo);
    out.emplace_back(p + "ln2.gain", &b.ln2_gain);
    out.emplace_back(p + "ln2.bias", &b.ln2_bias);
    out.emplace_back(p + "ff1.weight", &b.ff1_w);
    out.emplace_back(p + "ff1.bias", &b.ff1_b);
    out.emplace_back(p + "ff2.weight", &b.ff2_w);
    out.emplace_back(p + "ff2.bias", &b.ff2_b);
  }
  out.emplace_back("decoder.head.weight", &dec_.head_w);
  out.emplace_back("decoder.head.bias", &dec_.head_b);
  return out;
}

std::vector<std::pair<std::string, DenseArray>> SynSegModel::encoder_snapshot() const {
  std::vector<std::pair<std::string, DenseArray>> out;
  for (auto& [name, t] : encoders_.image->weight_snapshot())
    out.emplace_back("encoder.image." + name, t);
  for (auto& [name, t] : encoders_.text->weight_snapshot())
    out.emplace_back("encoder.text." + name, t);
  return out;
}

}  // namespace synseg

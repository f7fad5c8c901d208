#include "synseg/encoders.hpp"

#include <cmath>
#include <cstring>

#include "synseg/checkpoint.hpp"
#include "synseg/errors.hpp"
#include "synseg/rng.hpp"

namespace synseg {

std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::seeded_mock: return "seeded_mock";
    case EncoderKind::toy_patch: return "toy_patch";
    case EncoderKind::pretrained_adapter: return "pretrained_adapter";
  }
  return "?";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
  if (name == "seeded_mock") return EncoderKind::seeded_mock;
  if (name == "toy_patch") return EncoderKind::toy_patch;
  if (name == "pretrained_adapter") return EncoderKind::pretrained_adapter;
  throw InputError("encoder: unknown kind '" + name +
                   "' (expected seeded_mock, toy_patch, or pretrained_adapter)");
}

void EncoderConfig::validate() const {
  if (image_side <= 0) throw InputError("encoder: image_side must be positive");
  if (patch_size <= 0 || patch_size > image_side)
    throw InputError("encoder: patch_size must be in [1, image_side]");
  if (image_side % patch_size != 0)
    throw InputError("encoder: patch_size " + std::to_string(patch_size) +
                     " does not divide image_side " + std::to_string(image_side));
  if (visual_channels <= 0) throw InputError("encoder: visual_channels must be positive");
  if (text_dim <= 0) throw InputError("encoder: text_dim must be positive");
  if (kind == EncoderKind::pretrained_adapter && adapter_path.empty())
    throw InputError("encoder: pretrained_adapter requires adapter_path");
}

void to_json(nlohmann::ordered_json& j, const EncoderConfig& c) {
  j = nlohmann::ordered_json{{"kind", encoder_kind_name(c.kind)},
                             {"image_side", c.image_side},
                             {"patch_size", c.patch_size},
                             {"visual_channels", c.visual_channels},
                             {"text_dim", c.text_dim},
                             {"seed", c.seed},
                             {"prompt_template", c.prompt_template},
                             {"position_scale", c.position_scale},
                             {"adapter_path", c.adapter_path}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  if (j.contains("kind")) c.kind = encoder_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("image_side")) c.image_side = j.at("image_side").get<int>();
  if (j.contains("patch_size")) c.patch_size = j.at("patch_size").get<int>();
  if (j.contains("visual_channels")) c.visual_channels = j.at("visual_channels").get<int>();
  if (j.contains("text_dim")) c.text_dim = j.at("text_dim").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("prompt_template")) c.prompt_template = j.at("prompt_template").get<std::string>();
  if (j.contains("position_scale")) c.position_scale = j.at("position_scale").get<double>();
  if (j.contains("adapter_path")) c.adapter_path = j.at("adapter_path").get<std::string>();
}

namespace {

uint64_t hash_image_bytes(const ImageRGB& img) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : img.rgb) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void check_image_dims(const ImageRGB& img, const EncoderConfig& cfg) {
  if (img.width != cfg.image_side || img.height != cfg.image_side)
    throw InputError("encoder: image is " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " but config expects " +
                     std::to_string(cfg.image_side) + "x" + std::to_string(cfg.image_side));
}

// Shared patch-linear kernel: token[p, c] = flat(patch_p) . W[:, c] + pos[p, c].
// Used by both the toy encoder and loaded adapters so that a saved snapshot
// reproduces the original outputs bit for bit.
VisualFeatureGrid patch_linear_encode(const ImageRGB& img, int side, int patch,
                                      const DenseArray& weight, const DenseArray& pos) {
  const int g = side / patch;
  const int tokens = g * g;
  const int in_dim = patch * patch * 3;
  const int channels = weight.cols();
  DenseArray out({tokens, channels});
  std::vector<double> flat(static_cast<size_t>(in_dim));
  for (int py = 0; py < g; ++py)
    for (int px = 0; px < g; ++px) {
      const int p = py * g + px;
      int k = 0;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          for (int c = 0; c < 3; ++c)
            flat[static_cast<size_t>(k++)] = img.get(px * patch + x, py * patch + y, c);
      for (int c = 0; c < channels; ++c) {
        double acc = pos.at(p, c);
        for (int i = 0; i < in_dim; ++i) acc += flat[static_cast<size_t>(i)] * weight.at(i, c);
        out.at(p, c) = static_cast<float>(acc);
      }
    }
  return VisualFeatureGrid{std::move(out), g, g, channels};
}

std::string apply_prompt(const std::string& tmpl, const std::string& category) {
  if (tmpl.empty()) return category;
  const auto pos = tmpl.find("{}");
  if (pos == std::string::npos) return tmpl + " " + category;
  std::string s = tmpl;
  s.replace(pos, 2, category);
  return s;
}

DenseArray unit_vector_for(const std::string& text, uint64_t seed, int dim) {
  Rng rng = seeded_stream(seed, text);
  DenseArray v({1, dim});
  double norm2 = 0.0;
  for (int i = 0; i < dim; ++i) {
    v[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    norm2 += static_cast<double>(v[i]) * v[i];
  }
  double norm = std::sqrt(norm2);
  if (norm < 1e-9) {
    v[0] = 1.0f;
    norm = 1.0;
  }
  for (int i = 0; i < dim; ++i) v[i] = static_cast<float>(v[i] / norm);
  return v;
}

// ---------------------------------------------------------------------------
// seeded_mock
// ---------------------------------------------------------------------------

class MockImageEncoder : public ImageEncoder {
 public:
  explicit MockImageEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {}

  VisualFeatureGrid encode(const ImageRGB& img) const override {
    check_image_dims(img, cfg_);
    uint64_t s = cfg_.seed;
    splitmix64(s);
    Rng rng(s ^ hash_image_bytes(img));
    const int g = cfg_.grid_side();
    DenseArray tokens({cfg_.tokens(), cfg_.visual_channels});
    for (int64_t i = 0; i < tokens.numel(); ++i)
      tokens[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return VisualFeatureGrid{std::move(tokens), g, g, cfg_.visual_channels};
  }

  std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const override { return {}; }

 private:
  EncoderConfig cfg_;
};

class MockTextEncoder : public TextEncoder {
 public:
  explicit MockTextEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {}

  TextEmbedding encode(const std::string& category) const override {
    if (category.empty()) throw InputError("encoder: empty category name");
    const std::string prompted = apply_prompt(cfg_.prompt_template, category);
    return TextEmbedding{unit_vector_for(prompted, cfg_.seed, cfg_.text_dim), category};
  }

  std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const override { return {}; }

 private:
  EncoderConfig cfg_;
};

// ---------------------------------------------------------------------------
// toy_patch
// ---------------------------------------------------------------------------

class ToyPatchImageEncoder : public ImageEncoder {
 public:
  explicit ToyPatchImageEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    const int in_dim = cfg_.patch_size * cfg_.patch_size * 3;
    weight_ = DenseArray({in_dim, cfg_.visual_channels});
    Rng wrng = seeded_stream(cfg_.seed, "toy_patch.weight");
    const double a = std::sqrt(6.0 / (in_dim + cfg_.visual_channels));
    for (int64_t i = 0; i < weight_.numel(); ++i)
      weight_[i] = static_cast<float>(wrng.uniform(-a, a));
    // Position offsets are materialised with the scale baked in, so a saved
    // snapshot reproduces this encoder exactly.
    pos_ = DenseArray({cfg_.tokens(), cfg_.visual_channels});
    Rng prng = seeded_stream(cfg_.seed, "toy_patch.pos");
    for (int64_t i = 0; i < pos_.numel(); ++i)
      pos_[i] = static_cast<float>(cfg_.position_scale * prng.uniform(-1.0, 1.0));
  }

  VisualFeatureGrid encode(const ImageRGB& img) const override {
    check_image_dims(img, cfg_);
    return patch_linear_encode(img, cfg_.image_side, cfg_.patch_size, weight_, pos_);
  }

  std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const override {
    return {{"visual.patch_weight", weight_}, {"visual.pos_offset", pos_}};
  }

 private:
  EncoderConfig cfg_;
  DenseArray weight_;
  DenseArray pos_;
};

// ---------------------------------------------------------------------------
// pretrained_adapter: tensors loaded from a container, same compute paths
// ---------------------------------------------------------------------------

class AdapterImageEncoder : public ImageEncoder {
 public:
  AdapterImageEncoder(EncoderConfig cfg, DenseArray weight, DenseArray pos)
      : cfg_(std::move(cfg)), weight_(std::move(weight)), pos_(std::move(pos)) {}

  VisualFeatureGrid encode(const ImageRGB& img) const override {
    check_image_dims(img, cfg_);
    return patch_linear_encode(img, cfg_.image_side, cfg_.patch_size, weight_, pos_);
  }

  std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const override {
    return {{"visual.patch_weight", weight_}, {"visual.pos_offset", pos_}};
  }

 private:
  EncoderConfig cfg_;
  DenseArray weight_;
  DenseArray pos_;
};

class AdapterTextEncoder : public TextEncoder {
 public:
  AdapterTextEncoder(std::vector<std::string> vocab, DenseArray table)
      : vocab_(std::move(vocab)), table_(std::move(table)) {}

  TextEmbedding encode(const std::string& category) const override {
    if (category.empty()) throw InputError("encoder: empty category name");
    for (size_t i = 0; i < vocab_.size(); ++i) {
      if (vocab_[i] == category) {
        const int d = table_.cols();
        DenseArray v({1, d});
        for (int j = 0; j < d; ++j) v[j] = table_.at(static_cast<int>(i), j);
        return TextEmbedding{std::move(v), category};
      }
    }
    throw InputError("encoder: category '" + category + "' not in adapter embedding table");
  }

  std::vector<std::pair<std::string, DenseArray>> weight_snapshot() const override {
    return {{"text.embeddings", table_}};
  }

 private:
  std::vector<std::string> vocab_;
  DenseArray table_;
};

const DenseArray& require_tensor(const CheckpointData& ck, const std::string& name,
                                 const std::string& path) {
  const DenseArray* t = ck.find(name);
  if (!t) throw InputError("adapter: required tensor '" + name + "' missing in " + path);
  return *t;
}

EncoderPair load_adapter(const EncoderConfig& cfg) {
  CheckpointData ck = read_checkpoint(cfg.adapter_path);
  const DenseArray& weight = require_tensor(ck, "visual.patch_weight", cfg.adapter_path);
  const DenseArray& pos = require_tensor(ck, "visual.pos_offset", cfg.adapter_path);
  const DenseArray& table = require_tensor(ck, "text.embeddings", cfg.adapter_path);
  if (!ck.manifest.contains("text_vocab"))
    throw InputError("adapter: manifest field 'text_vocab' missing in " + cfg.adapter_path);
  auto vocab = ck.manifest["text_vocab"].get<std::vector<std::string>>();

  const int in_dim = cfg.patch_size * cfg.patch_size * 3;
  if (weight.shape() != std::vector<int>{in_dim, cfg.visual_channels})
    throw InputError("adapter: visual.patch_weight shape " + weight.shape_str() +
                     " does not match config (expected [" + std::to_string(in_dim) + "x" +
                     std::to_string(cfg.visual_channels) + "])");
  if (pos.shape() != std::vector<int>{cfg.tokens(), cfg.visual_channels})
    throw InputError("adapter: visual.pos_offset shape " + pos.shape_str() +
                     " does not match config");
  if (table.shape().size() != 2 || table.cols() != cfg.text_dim ||
      table.rows() != static_cast<int>(vocab.size()))
    throw InputError("adapter: text.embeddings shape " + table.shape_str() +
                     " does not match text_vocab size and text_dim");

  EncoderPair pair;
  pair.image = std::make_unique<AdapterImageEncoder>(cfg, weight, pos);
  pair.text = std::make_unique<AdapterTextEncoder>(std::move(vocab), table);
  return pair;
}

}  // namespace

EncoderPair make_encoders(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderPair pair;
  switch (cfg.kind) {
    case EncoderKind::seeded_mock:
      pair.image = std::make_unique<MockImageEncoder>(cfg);
      pair.text = std::make_unique<MockTextEncoder>(cfg);
      break;
    case EncoderKind::toy_patch:
      pair.image = std::make_unique<ToyPatchImageEncoder>(cfg);
      pair.text = std::make_unique<MockTextEncoder>(cfg);
      break;
    case EncoderKind::pretrained_adapter:
      pair = load_adapter(cfg);
      break;
  }
  return pair;
}

void save_pretrained_adapter(const std::string& path, const EncoderConfig& cfg,
                             const DenseArray& patch_weight, const DenseArray& pos_offset,
                             const std::vector<std::string>& vocab, const DenseArray& text_table) {
  if (text_table.shape().size() != 2 || text_table.rows() != static_cast<int>(vocab.size()) ||
      text_table.cols() != cfg.text_dim)
    throw std::invalid_argument("save_pretrained_adapter: text table shape " +
                                text_table.shape_str() + " does not match vocab/text_dim");
  nlohmann::ordered_json manifest;
  manifest["kind"] = "encoder_adapter";
  nlohmann::ordered_json enc;
  to_json(enc, cfg);
  manifest["encoder"] = enc;
  manifest["text_vocab"] = vocab;
  write_checkpoint(path, manifest,
                   {{"visual.patch_weight", patch_weight},
                    {"visual.pos_offset", pos_offset},
                    {"text.embeddings", text_table}});
}

}  // namespace synseg

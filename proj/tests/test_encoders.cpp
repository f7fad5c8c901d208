#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "synseg/encoders.hpp"
#include "synseg/errors.hpp"
#include "synseg/checkpoint.hpp"
#include "synseg/image.hpp"
#include "synseg/tensor.hpp"

using namespace synseg;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::toy_patch;
  cfg.image_side = 16;
  cfg.patch_size = 4;
  cfg.visual_channels = 12;
  cfg.text_dim = 10;
  cfg.seed = 7;
  return cfg;
}

bool bit_equal(const DenseArray& a, const DenseArray& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double cosine(const DenseArray& a, const DenseArray& b) {
  double ab = 0, aa = 0, bb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

// ============================================================================
// kind names
// ============================================================================

TEST_CASE("encoder kind names round-trip and unknown names are rejected") {
  for (auto k : {EncoderKind::seeded_mock, EncoderKind::toy_patch, EncoderKind::pretrained_adapter})
    CHECK(encoder_kind_from_name(encoder_kind_name(k)) == k);
  CHECK_THROWS_AS(encoder_kind_from_name("resnet"), InputError);
}

TEST_CASE("config validation rejects inconsistent geometry") {
  EncoderConfig cfg = small_config();
  cfg.patch_size = 5;  // does not divide 16
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = small_config();
  cfg.kind = EncoderKind::pretrained_adapter;  // no adapter_path
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

// ============================================================================
// toy_patch visual encoder
// ============================================================================

TEST_CASE("toy encoder is deterministic across separately built instances") {
  EncoderConfig cfg = small_config();
  auto a = make_encoders(cfg);
  auto b = make_encoders(cfg);
  ImageRGB img = make_image(16, 16, 0.2f, 0.5f, 0.8f);
  img.set(3, 7, 0, 0.9f);
  CHECK(bit_equal(a.image->encode(img).tokens, b.image->encode(img).tokens));
  CHECK(bit_equal(a.text->encode("dog").vec, b.text->encode("dog").vec));
}

TEST_CASE("solid-color image yields identical tokens when position offsets are off") {
  EncoderConfig cfg = small_config();
  cfg.position_scale = 0.0;
  auto enc = make_encoders(cfg);
  VisualFeatureGrid grid = enc.image->encode(make_image(16, 16, 0.3f, 0.6f, 0.1f));
  CHECK(grid.grid_h == 4);
  CHECK(grid.grid_w == 4);
  CHECK(grid.channels == cfg.visual_channels);
  for (int t = 1; t < grid.tokens.rows(); ++t)
    for (int c = 0; c < grid.channels; ++c)
      CHECK(grid.tokens.at(t, c) == grid.tokens.at(0, c));
}

TEST_CASE("nonzero position scale breaks translation invariance") {
  EncoderConfig cfg = small_config();
  cfg.position_scale = 0.5;
  auto enc = make_encoders(cfg);
  VisualFeatureGrid grid = enc.image->encode(make_image(16, 16, 0.3f, 0.6f, 0.1f));
  bool any_differs = false;
  for (int c = 0; c < grid.channels && !any_differs; ++c)
    any_differs = grid.tokens.at(0, c) != grid.tokens.at(1, c);
  CHECK(any_differs);
}

TEST_CASE("differently colored halves produce different tokens") {
  EncoderConfig cfg = small_config();
  auto enc = make_encoders(cfg);
  ImageRGB img = make_image(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      img.set(x, y, 0, x < 8 ? 1.0f : 0.0f);
      img.set(x, y, 2, x < 8 ? 0.0f : 1.0f);
    }
  VisualFeatureGrid grid = enc.image->encode(img);
  // token 0 is a left patch, token 3 a right patch
  bool differs = false;
  for (int c = 0; c < grid.channels && !differs; ++c)
    differs = grid.tokens.at(0, c) != grid.tokens.at(3, c);
  CHECK(differs);
}

TEST_CASE("toy encoder is affine in pixel values") {
  EncoderConfig cfg = small_config();
  cfg.position_scale = 0.25;  // offsets must cancel in the convex combination
  auto enc = make_encoders(cfg);
  ImageRGB a = make_image(16, 16, 0.9f, 0.1f, 0.4f);
  ImageRGB b = make_image(16, 16, 0.0f, 0.7f, 0.2f);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) a.set(x, y, 1, static_cast<float>(x) / 16.0f);
  const double alpha = 0.3;
  ImageRGB mix = make_image(16, 16);
  for (size_t i = 0; i < mix.rgb.size(); ++i)
    mix.rgb[i] = static_cast<float>(alpha * a.rgb[i] + (1.0 - alpha) * b.rgb[i]);
  DenseArray ta = enc.image->encode(a).tokens;
  DenseArray tb = enc.image->encode(b).tokens;
  DenseArray tm = enc.image->encode(mix).tokens;
  for (int64_t i = 0; i < tm.numel(); ++i) {
    const double expect = alpha * ta[i] + (1.0 - alpha) * tb[i];
    CHECK(std::abs(tm[i] - expect) <= 1e-5);
  }
}

TEST_CASE("wrong image dimensions are rejected with the expected size in the message") {
  auto enc = make_encoders(small_config());
  try {
    enc.image->encode(make_image(8, 16));
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("16x16") != std::string::npos);
  }
}

// ============================================================================
// text encoder
// ============================================================================

TEST_CASE("text embeddings are unit norm and distinct across categories") {
  auto enc = make_encoders(small_config());
  DenseArray dog = enc.text->encode("dog").vec;
  DenseArray cat = enc.text->encode("cat").vec;
  double n2 = 0;
  for (int64_t i = 0; i < dog.numel(); ++i) n2 += static_cast<double>(dog[i]) * dog[i];
  CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-5);
  CHECK(cosine(dog, cat) < 0.9);
}

TEST_CASE("prompt template changes the embedding and {} substitutes the category") {
  EncoderConfig plain = small_config();
  EncoderConfig prompted = small_config();
  prompted.prompt_template = "a photo of a {}";
  auto a = make_encoders(plain);
  auto b = make_encoders(prompted);
  CHECK_FALSE(bit_equal(a.text->encode("dog").vec, b.text->encode("dog").vec));

  // "{}" substitution must match the literal expansion under the same seed.
  EncoderConfig literal = small_config();
  auto c = make_encoders(literal);
  CHECK(bit_equal(b.text->encode("dog").vec, c.text->encode("a photo of a dog").vec));
}

TEST_CASE("empty category name is rejected") {
  auto enc = make_encoders(small_config());
  CHECK_THROWS_AS(enc.text->encode(""), InputError);
}

// ============================================================================
// seeded_mock
// ============================================================================

TEST_CASE("mock encoder tokens depend on image content but not call order") {
  EncoderConfig cfg = small_config();
  cfg.kind = EncoderKind::seeded_mock;
  auto enc = make_encoders(cfg);
  ImageRGB a = make_image(16, 16, 0.1f, 0.2f, 0.3f);
  ImageRGB b = make_image(16, 16, 0.1f, 0.2f, 0.35f);
  DenseArray ta1 = enc.image->encode(a).tokens;
  DenseArray tb = enc.image->encode(b).tokens;
  DenseArray ta2 = enc.image->encode(a).tokens;
  CHECK(bit_equal(ta1, ta2));
  CHECK_FALSE(bit_equal(ta1, tb));
}

// ============================================================================
// pretrained_adapter
// ============================================================================

TEST_CASE("toy snapshot round-trips through an adapter bit for bit") {
  EncoderConfig cfg = small_config();
  cfg.position_scale = 0.1;
  auto toy = make_encoders(cfg);

  auto snapshot = toy.image->weight_snapshot();
  REQUIRE(snapshot.size() == 2);
  const DenseArray& weight = snapshot[0].second;
  const DenseArray& pos = snapshot[1].second;

  std::vector<std::string> vocab = {"square", "disk", "bar"};
  DenseArray table({static_cast<int>(vocab.size()), cfg.text_dim});
  for (size_t i = 0; i < vocab.size(); ++i) {
    DenseArray v = toy.text->encode(vocab[i]).vec;
    for (int j = 0; j < cfg.text_dim; ++j) table.at(static_cast<int>(i), j) = v[j];
  }

  const std::string path = temp_path("synseg_adapter_roundtrip.bin");
  save_pretrained_adapter(path, cfg, weight, pos, vocab, table);

  EncoderConfig acfg = cfg;
  acfg.kind = EncoderKind::pretrained_adapter;
  acfg.adapter_path = path;
  auto adapter = make_encoders(acfg);

  ImageRGB img = make_image(16, 16, 0.6f, 0.2f, 0.9f);
  img.set(11, 2, 1, 0.05f);
  CHECK(bit_equal(adapter.image->encode(img).tokens, toy.image->encode(img).tokens));
  for (const auto& word : vocab)
    CHECK(bit_equal(adapter.text->encode(word).vec, toy.text->encode(word).vec));
  CHECK_THROWS_AS(adapter.text->encode("zebra"), InputError);
  std::filesystem::remove(path);
}

TEST_CASE("missing adapter file and missing tensors give errors naming the problem") {
  EncoderConfig cfg = small_config();
  cfg.kind = EncoderKind::pretrained_adapter;
  cfg.adapter_path = temp_path("synseg_no_such_adapter.bin");
  CHECK_THROWS_AS(make_encoders(cfg), InputError);

  // Container with one required tensor absent.
  const std::string path = temp_path("synseg_broken_adapter.bin");
  nlohmann::ordered_json manifest;
  manifest["kind"] = "encoder_adapter";
  manifest["text_vocab"] = std::vector<std::string>{"dog"};
  const int in_dim = cfg.patch_size * cfg.patch_size * 3;
  write_checkpoint(path, manifest,
                   {{"visual.patch_weight", DenseArray::zeros({in_dim, cfg.visual_channels})},
                    {"text.embeddings", DenseArray::zeros({1, cfg.text_dim})}});
  cfg.adapter_path = path;
  try {
    make_encoders(cfg);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("visual.pos_offset") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("adapter shape mismatches are rejected") {
  EncoderConfig cfg = small_config();
  auto toy = make_encoders(cfg);
  auto snapshot = toy.image->weight_snapshot();
  std::vector<std::string> vocab = {"dog"};
  DenseArray table({1, cfg.text_dim});
  const std::string path = temp_path("synseg_mismatch_adapter.bin");
  save_pretrained_adapter(path, cfg, snapshot[0].second, snapshot[1].second, vocab, table);

  EncoderConfig acfg = cfg;
  acfg.kind = EncoderKind::pretrained_adapter;
  acfg.adapter_path = path;
  acfg.visual_channels = cfg.visual_channels + 1;  // stale config vs stored tensors
  CHECK_THROWS_AS(make_encoders(acfg), InputError);
  std::filesystem::remove(path);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "synseg/encoders.hpp"
#include "synseg/fss.hpp"
#include "synseg/graph.hpp"
#include "synseg/image.hpp"
#include "synseg/rng.hpp"
#include "synseg/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace synseg;
using namespace synseg::testing;

namespace {

DenseArray random_array(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DenseArray a(std::move(shape));
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng.uniform(lo, hi));
  return a;
}

bool bit_equal(const DenseArray& a, const DenseArray& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

void fill(Parameter& p, float v) {
  for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = v;
}

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.image_side = 8;
  cfg.patch_size = 4;  // 2x2 grid
  cfg.visual_channels = 8;
  cfg.text_dim = 8;
  cfg.seed = 5;
  return cfg;
}

ModelDims tiny_dims() {
  ModelDims d;
  d.decoder_blocks = 1;
  d.decoder_heads = 2;
  d.ff_mult = 2;
  d.film_hidden = 6;
  return d;
}

}  // namespace

// ============================================================================
// FiLM fusion
// ============================================================================

TEST_CASE("film fusion is an exact identity at initialisation") {
  FilmModule film;
  film.init(6, 5, 7, /*seed=*/11);
  Rng rng(3);
  DenseArray grid = random_array({4, 5}, rng);
  DenseArray text = random_array({1, 6}, rng);
  Graph g;
  Value out = film_fuse(g, g.input(grid), g.input(text), film);
  CHECK(bit_equal(g.value(out), grid));
}

TEST_CASE("film applies (1+gamma)*x+beta channel-wise") {
  FilmModule film;
  film.init(3, 2, 4, /*seed=*/1);
  // Force the MLP output: h = gelu(0) = 0, so gamma|beta = b2.
  fill(film.w1, 0.0f);
  fill(film.b1, 0.0f);
  film.b2.value[0] = 1.0f;   // gamma c0
  film.b2.value[1] = 0.0f;   // gamma c1
  film.b2.value[2] = 0.5f;   // beta c0
  film.b2.value[3] = -2.0f;  // beta c1

  Graph g;
  DenseArray grid({1, 2});
  grid[0] = 2.0f;
  grid[1] = 3.0f;
  DenseArray text = DenseArray::zeros({1, 3});
  Value out = film_fuse(g, g.input(grid), g.input(text), film);
  CHECK(g.value(out)[0] == doctest::Approx(4.5).epsilon(1e-7));   // (1+1)*2+0.5
  CHECK(g.value(out)[1] == doctest::Approx(1.0).epsilon(1e-7));   // (1+0)*3-2
}

TEST_CASE("gamma=-1 erases the input and leaves rows equal to beta") {
  const int cv = 4;
  FilmModule film;
  film.init(3, cv, 4, /*seed=*/2);
  fill(film.w1, 0.0f);
  fill(film.b1, 0.0f);
  for (int c = 0; c < cv; ++c) {
    film.b2.value[c] = -1.0f;       // gamma
    film.b2.value[cv + c] = 0.7f;   // beta
  }
  Rng rng(9);
  DenseArray grid = random_array({5, cv}, rng);
  Graph g;
  Value out = film_fuse(g, g.input(grid), g.input(DenseArray::zeros({1, 3})), film);
  const DenseArray& o = g.value(out);
  for (int64_t i = 0; i < o.numel(); ++i) CHECK(o[i] == doctest::Approx(0.7).epsilon(1e-7));
}

// ============================================================================
// Projector
// ============================================================================

TEST_CASE("projector starts as identity when widths match") {
  ProjectorModule proj;
  proj.init(6, 6, /*seed=*/4);
  Rng rng(8);
  DenseArray tokens = random_array({3, 6}, rng);
  Graph g;
  Value out = project(g, g.input(tokens), proj);
  CHECK(bit_equal(g.value(out), tokens));
}

TEST_CASE("projector maps channel width to text width") {
  ProjectorModule proj;
  proj.init(6, 4, /*seed=*/4);
  Graph g;
  Value out = project(g, g.input(DenseArray::zeros({3, 6})), proj);
  CHECK(g.shape(out) == std::vector<int>{3, 4});
}

// ============================================================================
// Decoder
// ============================================================================

TEST_CASE("zeroed head gives 0.5 activation everywhere") {
  DecoderModule dec;
  ModelDims dims = tiny_dims();
  dec.init(8, dims, /*seed=*/21);
  fill(dec.head_w, 0.0f);
  fill(dec.head_b, 0.0f);
  Rng rng(2);
  DenseArray tokens = random_array({4, 8}, rng);
  Graph g;
  ActivationMap map = decode_activation(g, g.input(tokens), dec, 2, 2);
  CHECK(g.shape(map.activation) == std::vector<int>{2, 2});
  const DenseArray& a = g.value(map.activation);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == 0.5f);
}

TEST_CASE("decoder rejects head counts that do not divide the channel width") {
  DecoderModule dec;
  ModelDims dims = tiny_dims();
  dims.decoder_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(dec.init(8, dims, 1), std::invalid_argument);
}

TEST_CASE("decoder logits agree with finite differences") {
  DecoderModule dec;
  dec.init(8, tiny_dims(), /*seed=*/33);
  Rng rng(14);
  DenseArray tokens = random_array({4, 8}, rng, -0.8, 0.8);

  Graph g(Graph::Precision::f32, true);
  Value logits = decode_logits(g, g.input(tokens), dec);
  Value loss = g.mean(logits);
  g.backward(loss);

  auto fd_forward = [&]() {
    Graph h(Graph::Precision::f64, false);
    return h.scalar_value(h.mean(decode_logits(h, h.input(tokens), dec)));
  };

  GradAgreement agg;
  std::vector<std::pair<std::string, Parameter*>> checked = {
      {"wq", &dec.blocks[0].wq}, {"wv", &dec.blocks[0].wv},  {"wo", &dec.blocks[0].wo},
      {"ff1", &dec.blocks[0].ff1_w}, {"ln1.gain", &dec.blocks[0].ln1_gain},
      {"head", &dec.head_w}, {"head.bias", &dec.head_b}};
  Rng pick(77);
  for (auto& [name, p] : checked) {
    for (int probe = 0; probe < 4; ++probe) {
      const int64_t i = static_cast<int64_t>(pick.below(static_cast<uint64_t>(p->value.numel())));
      const double fd = fd_grad_entry(*p, i, fd_forward, 1e-3);
      update_agreement(agg, name + "[" + std::to_string(i) + "]", p->grad[i], fd);
    }
  }
  INFO("worst " << agg.worst_where << " analytic=" << agg.worst_analytic
                << " fd=" << agg.worst_fd);
  CHECK(agg.max_rel <= 1e-3);
  CHECK(agg.checked == 28);
}

// ============================================================================
// Synergy features
// ============================================================================

TEST_CASE("one-hot activation selects a single projected row") {
  Rng rng(4);
  DenseArray proj = random_array({6, 5}, rng);
  DenseArray act = DenseArray::zeros({2, 3});
  act[4] = 1.0f;  // token index 4
  Graph g;
  SynergyPair pair = build_synergy_pair(g, g.input(act), g.input(proj));
  const DenseArray& fg = g.value(pair.fg);
  const DenseArray& bg = g.value(pair.bg);
  for (int c = 0; c < 5; ++c) {
    CHECK(std::abs(fg[c] - proj.at(4, c)) <= 1e-6);
    double colsum_minus = 0;
    for (int t = 0; t < 6; ++t)
      if (t != 4) colsum_minus += proj.at(t, c);
    CHECK(std::abs(bg[c] - colsum_minus) <= 2e-6);
  }
}

TEST_CASE("foreground plus background equals the projected column sums") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int tokens = 1 + static_cast<int>(rng.below(9));
    const int d = 1 + static_cast<int>(rng.below(7));
    DenseArray proj = random_array({tokens, d}, rng, -2.0, 2.0);
    DenseArray act({1, tokens});
    for (int t = 0; t < tokens; ++t) act[t] = static_cast<float>(rng.uniform(0.0, 1.0));
    Graph g;
    SynergyPair pair = build_synergy_pair(g, g.input(act), g.input(proj));
    for (int c = 0; c < d; ++c) {
      double colsum = 0;
      for (int t = 0; t < tokens; ++t) colsum += proj.at(t, c);
      CHECK(std::abs((g.value(pair.fg)[c] + g.value(pair.bg)[c]) - colsum) <= 1e-5);
    }
  }
}

TEST_CASE("uniform 0.5 activation makes both synergy vectors identical") {
  Rng rng(6);
  DenseArray proj = random_array({4, 3}, rng);
  DenseArray act = DenseArray::full({2, 2}, 0.5f);
  Graph g;
  SynergyPair pair = build_synergy_pair(g, g.input(act), g.input(proj));
  CHECK(bit_equal(g.value(pair.fg), g.value(pair.bg)));
}

TEST_CASE("synergy pair rejects mismatched token counts") {
  Graph g;
  Value act = g.input(DenseArray::zeros({2, 2}));
  Value proj = g.input(DenseArray::zeros({5, 3}));
  CHECK_THROWS_AS(build_synergy_pair(g, act, proj), std::invalid_argument);
}

// ============================================================================
// Full model
// ============================================================================

TEST_CASE("model init is seed deterministic and seed sensitive") {
  SynSegModel a(tiny_encoder(), tiny_dims(), 9);
  SynSegModel b(tiny_encoder(), tiny_dims(), 9);
  SynSegModel c(tiny_encoder(), tiny_dims(), 10);
  auto pa = a.parameters();
  auto pb = b.parameters();
  auto pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_same = true, any_differs = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    all_same = all_same && bit_equal(pa[i].second->value, pb[i].second->value);
    any_differs = any_differs || !bit_equal(pa[i].second->value, pc[i].second->value);
  }
  CHECK(all_same);
  CHECK(any_differs);
  CHECK(a.steps_trained == 0);
}

TEST_CASE("forward_image collapses duplicate categories and keeps first order") {
  SynSegModel model(tiny_encoder(), tiny_dims(), 9);
  Graph g;
  ImageRGB img = make_image(8, 8, 0.4f, 0.3f, 0.2f);
  ImageForward fwd = model.forward_image(g, img, {"dog", "cat", "dog", "cat"});
  REQUIRE(fwd.categories.size() == 2);
  CHECK(fwd.categories[0].category == "dog");
  CHECK(fwd.categories[1].category == "cat");
  CHECK(fwd.grid_h == 2);
  CHECK(fwd.grid_w == 2);
  CHECK(g.shape(fwd.categories[0].activation) == std::vector<int>{2, 2});
  CHECK(g.shape(fwd.categories[0].fg) == std::vector<int>{1, 8});
  CHECK(bit_equal(fwd.categories[0].activation_arr, g.value(fwd.categories[0].activation)));
}

TEST_CASE("at init all categories share one activation map") {
  // FiLM starts as identity, so the decoder sees the same tokens for every
  // category and the maps coincide bit for bit.
  SynSegModel model(tiny_encoder(), tiny_dims(), 9);
  Graph g;
  ImageRGB img = make_image(8, 8, 0.1f, 0.8f, 0.5f);
  img.set(2, 2, 0, 0.9f);
  ImageForward fwd = model.forward_image(g, img, {"dog", "cat", "bird"});
  REQUIRE(fwd.categories.size() == 3);
  CHECK(bit_equal(fwd.categories[0].activation_arr, fwd.categories[1].activation_arr));
  CHECK(bit_equal(fwd.categories[0].activation_arr, fwd.categories[2].activation_arr));
}

TEST_CASE("encoder snapshot names are namespaced and training never lists them") {
  SynSegModel model(tiny_encoder(), tiny_dims(), 9);
  auto snap = model.encoder_snapshot();
  REQUIRE_FALSE(snap.empty());
  for (auto& [name, t] : snap) {
    CHECK(name.rfind("encoder.", 0) == 0);
    (void)t;
  }
  for (auto& [name, p] : model.parameters()) {
    CHECK(name.rfind("encoder.", 0) != 0);
    CHECK(p->trainable);
  }
}

TEST_CASE("empty category list is rejected") {
  SynSegModel model(tiny_encoder(), tiny_dims(), 9);
  Graph g;
  ImageRGB img = make_image(8, 8);
  CHECK_THROWS_AS(model.forward_image(g, img, {}), std::invalid_argument);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "synseg/graph.hpp"
#include "synseg/mccl.hpp"
#include "synseg/rng.hpp"
#include "synseg/tensor.hpp"
#include "support/oracles.hpp"

using namespace synseg;
using namespace synseg::testing;

namespace {

// Every pair term is bounded by the clip: cos in [0.005, 0.995] before the
// log, measured on the float32 representation of the bounds.
const double kClipLo = -std::log(0.995);  // ~0.0050125
const double kClipHi = -std::log(0.005);  // ~5.29832

struct Batch {
  std::vector<std::vector<double>> fg, bg, text;
  std::vector<Value> fg_v, bg_v, text_v;
};

DenseArray row_of(const std::vector<double>& v) {
  DenseArray a({1, static_cast<int>(v.size())});
  for (size_t i = 0; i < v.size(); ++i) a[static_cast<int64_t>(i)] = static_cast<float>(v[i]);
  return a;
}

std::vector<double> random_vec(int d, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(d));
  // Values pass through float32 graph storage; keep the oracle's inputs at
  // float precision so both sides see identical bits.
  for (auto& x : v) x = static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
  return v;
}

Batch random_batch(Graph& g, int n, int d, Rng& rng) {
  Batch b;
  for (int i = 0; i < n; ++i) {
    b.fg.push_back(random_vec(d, rng));
    b.bg.push_back(random_vec(d, rng));
    b.text.push_back(random_vec(d, rng));
    b.fg_v.push_back(g.input(row_of(b.fg.back())));
    b.bg_v.push_back(g.input(row_of(b.bg.back())));
    b.text_v.push_back(g.input(row_of(b.text.back())));
  }
  return b;
}

}  // namespace

// ============================================================================
// hand-worked examples
// ============================================================================

TEST_CASE("align of a perfectly aligned pair sits at the clip bound") {
  Graph g;
  std::vector<double> u = {1.0, 2.0, -0.5};
  Value a = g.input(row_of(u));
  Value b = g.input(row_of(u));
  const double align = g.scalar_value(loss_align(g, {a}, {b}));
  CHECK(align == doctest::Approx(kClipLo).epsilon(1e-6));
}

TEST_CASE("sep for two orthogonal foregrounds mixes diagonal and cross terms") {
  // Ordered pairs: (0,0) and (1,1) saturate high (cos=1 clips to 0.995, term
  // -log(0.005)), (0,1) and (1,0) saturate low. Mean of the four terms.
  Graph g;
  Value f0 = g.input(row_of({1.0, 0.0}));
  Value f1 = g.input(row_of({0.0, 1.0}));
  const double sep = g.scalar_value(loss_sep(g, {f0, f1}));
  const double expect = (2.0 * kClipHi + 2.0 * kClipLo) / 4.0;
  CHECK(sep == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("back of identical backgrounds is the low clip bound") {
  Graph g;
  Value b0 = g.input(row_of({0.3, -0.7, 0.2}));
  Value b1 = g.input(row_of({0.3, -0.7, 0.2}));
  const double back = g.scalar_value(loss_back(g, {b0, b1}));
  CHECK(back == doctest::Approx(kClipLo).epsilon(1e-6));
}

TEST_CASE("cont of an orthogonal fg/bg pair sits at the low bound") {
  Graph g;
  Value f = g.input(row_of({1.0, 0.0}));
  Value b = g.input(row_of({0.0, -2.0}));
  // cos = 0 clips up to 0.005: term is -log(1 - 0.005).
  const double cont = g.scalar_value(loss_cont(g, {f}, {b}));
  CHECK(cont == doctest::Approx(kClipLo).epsilon(1e-6));
}

TEST_CASE("losses at 45 degrees match a direct evaluation") {
  Graph g;
  Value f = g.input(row_of({1.0, 0.0}));
  Value t = g.input(row_of({1.0, 1.0}));
  const double expect = -std::log(std::sqrt(0.5));
  CHECK(g.scalar_value(loss_align(g, {f}, {t})) == doctest::Approx(expect).epsilon(1e-5));
}

// ============================================================================
// oracle agreement
// ============================================================================

TEST_CASE("graph losses match the scalar-loop oracle over random batches") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const int d = 4 + static_cast<int>(rng.below(13));
    Graph g;
    Batch b = random_batch(g, n, d, rng);
    NaiveLossTerms expect = naive_loss_terms(b.fg, b.bg, b.text);

    CHECK(std::abs(g.scalar_value(loss_align(g, b.fg_v, b.text_v)) - expect.align) <= 1e-6);
    CHECK(std::abs(g.scalar_value(loss_cont(g, b.fg_v, b.bg_v)) - expect.cont) <= 1e-6);
    CHECK(std::abs(g.scalar_value(loss_back(g, b.bg_v)) - expect.back) <= 1e-6);
    CHECK(std::abs(g.scalar_value(loss_sep(g, b.fg_v)) - expect.sep) <= 1e-6);
  }
}

TEST_CASE("total is the weighted recombination of the four terms") {
  Rng rng(77);
  LossWeights w;
  w.lambda1 = 0.5;
  w.lambda2 = 2.0;
  w.lambda3 = 10.0;
  w.lambda4 = 0.25;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(4));
    Graph g;
    Batch b = random_batch(g, n, 6, rng);
    ImageLossValues v = image_losses(g, b.fg_v, b.bg_v, b.text_v, w);
    const double recombined = w.lambda1 * g.scalar_value(v.align) +
                              w.lambda2 * g.scalar_value(v.cont) +
                              w.lambda3 * g.scalar_value(v.back) +
                              w.lambda4 * g.scalar_value(v.sep);
    // Graph nodes store float32: at total magnitudes around 40 the storage
    // quantum alone is ~2e-6, so both recombination checks get 5e-6. The
    // double-precision report recombines exactly; see the report test.
    CHECK(std::abs(g.scalar_value(v.total) - recombined) <= 5e-6);
    NaiveLossTerms expect = naive_loss_terms(b.fg, b.bg, b.text);
    CHECK(std::abs(g.scalar_value(v.total) -
                   naive_total(expect, w.lambda1, w.lambda2, w.lambda3, w.lambda4)) <= 5e-6);
  }
}

// ============================================================================
// structural properties
// ============================================================================

TEST_CASE("category order does not change any loss") {
  Rng rng(5);
  Graph g;
  Batch b = random_batch(g, 4, 8, rng);
  LossWeights w;
  ImageLossValues fwdv = image_losses(g, b.fg_v, b.bg_v, b.text_v, w);

  std::vector<Value> fg_r(b.fg_v.rbegin(), b.fg_v.rend());
  std::vector<Value> bg_r(b.bg_v.rbegin(), b.bg_v.rend());
  std::vector<Value> text_r(b.text_v.rbegin(), b.text_v.rend());
  ImageLossValues revv = image_losses(g, fg_r, bg_r, text_r, w);

  CHECK(std::abs(g.scalar_value(fwdv.align) - g.scalar_value(revv.align)) <= 1e-6);
  CHECK(std::abs(g.scalar_value(fwdv.cont) - g.scalar_value(revv.cont)) <= 1e-6);
  CHECK(std::abs(g.scalar_value(fwdv.back) - g.scalar_value(revv.back)) <= 1e-6);
  CHECK(std::abs(g.scalar_value(fwdv.sep) - g.scalar_value(revv.sep)) <= 1e-6);
}

TEST_CASE("duplicating one category shifts pair losses by the predicted amount") {
  // With two identical categories every ordered pair behaves like the
  // diagonal, so back and sep both sit exactly at their saturated values.
  Rng rng(9);
  Graph g;
  Batch b = random_batch(g, 1, 8, rng);
  std::vector<Value> fg2 = {b.fg_v[0], b.fg_v[0]};
  std::vector<Value> bg2 = {b.bg_v[0], b.bg_v[0]};
  CHECK(g.scalar_value(loss_back(g, bg2)) == doctest::Approx(kClipLo).epsilon(1e-6));
  CHECK(g.scalar_value(loss_sep(g, fg2)) == doctest::Approx(kClipHi).epsilon(1e-6));
}

TEST_CASE("scaling either vector of a pair leaves cosine losses unchanged") {
  Rng rng(31);
  for (double alpha : {0.01, 0.25, 1.0}) {
    Graph g;
    Batch b = random_batch(g, 3, 8, rng);
    std::vector<Value> fg_s, bg_s;
    for (int i = 0; i < 3; ++i) {
      fg_s.push_back(g.scale(b.fg_v[static_cast<size_t>(i)], alpha));
      bg_s.push_back(g.scale(b.bg_v[static_cast<size_t>(i)], alpha));
    }
    LossWeights w;
    ImageLossValues base = image_losses(g, b.fg_v, b.bg_v, b.text_v, w);
    ImageLossValues scaled = image_losses(g, fg_s, bg_s, b.text_v, w);
    CHECK(std::abs(g.scalar_value(base.total) - g.scalar_value(scaled.total)) <= 1e-6);
  }
}

TEST_CASE("diagonal pairs contribute no gradient") {
  // Gradient of sep for a single category (the only pair is the diagonal)
  // must be exactly zero in every coordinate.
  Rng rng(13);
  Graph g;
  Parameter p(row_of(random_vec(6, rng)));
  Value f = g.param(p);
  Value loss = loss_sep(g, {f});
  g.backward(loss);
  for (int64_t i = 0; i < p.grad.numel(); ++i) CHECK(std::abs(p.grad[i]) <= 1e-7);

  // Same for back with one category.
  Parameter q(row_of(random_vec(6, rng)));
  Graph g2;
  Value bv = g2.param(q);
  g2.backward(loss_back(g2, {bv}));
  for (int64_t i = 0; i < q.grad.numel(); ++i) CHECK(std::abs(q.grad[i]) <= 1e-7);
}

TEST_CASE("diagonal terms are inert: off-diagonal-only gradient matches") {
  // N=3 sep: compare the full loss gradient against a hand-built loss using
  // only ordered pairs with j != k. The diagonal is saturated, so gradients
  // agree coordinate by coordinate.
  Rng rng(29);
  std::vector<Parameter> params;
  for (int i = 0; i < 3; ++i) params.emplace_back(row_of(random_vec(6, rng)));

  Graph full;
  std::vector<Value> fg;
  for (auto& p : params) fg.push_back(full.param(p));
  full.backward(loss_sep(full, fg));
  std::vector<DenseArray> grads_full;
  for (auto& p : params) {
    grads_full.push_back(p.grad);
    p.zero_grad();
  }

  Graph off;
  std::vector<Value> fg2;
  for (auto& p : params) fg2.push_back(off.param(p));
  std::vector<Value> terms;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      if (j == k) continue;
      Value c = off.clipped_cosine_complement(fg2[static_cast<size_t>(j)], fg2[static_cast<size_t>(k)]);
      terms.push_back(off.log(c));
    }
  off.backward(off.scale(off.add_scalars(terms), -1.0 / 9.0));

  for (size_t i = 0; i < params.size(); ++i)
    for (int64_t j = 0; j < params[i].grad.numel(); ++j)
      CHECK(std::abs(params[i].grad[j] - grads_full[i][j]) <= 1e-7);
}

TEST_CASE("pulling a foreground toward its text lowers align") {
  Graph g;
  std::vector<double> t = {1.0, 0.2, -0.3};
  std::vector<double> far = {0.1, 1.0, 0.8};
  std::vector<double> near = {0.9, 0.3, -0.1};
  Value tv = g.input(row_of(t));
  const double worse = g.scalar_value(loss_align(g, {g.input(row_of(far))}, {tv}));
  const double better = g.scalar_value(loss_align(g, {g.input(row_of(near))}, {tv}));
  CHECK(better < worse);
}

TEST_CASE("all pair terms stay inside the clip range over 1000 random pairs") {
  Rng rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(15));
    Graph g;
    Value u = g.input(row_of(random_vec(d, rng, -3.0, 3.0)));
    Value v = g.input(row_of(random_vec(d, rng, -3.0, 3.0)));
    const double c = g.scalar_value(g.clipped_cosine(u, v));
    CHECK(c >= static_cast<double>(0.005f));
    CHECK(c <= static_cast<double>(0.995f));
    // Saturated terms evaluate the log at the float32 image of the bounds,
    // which sits ~2e-8 outside the exact-decimal interval.
    const double align = g.scalar_value(loss_align(g, {u}, {v}));
    CHECK(align >= kClipLo - 1e-6);
    CHECK(align <= kClipHi + 1e-6);
    CHECK(std::isfinite(align));
  }
}

// ============================================================================
// batch report
// ============================================================================

TEST_CASE("report means and total recombine the per-image terms") {
  std::vector<PerImageLosses> imgs(2);
  imgs[0] = {1.0, 2.0, 0.5, 4.0, 0.0};
  imgs[1] = {3.0, 0.0, 1.5, 2.0, 0.0};
  LossWeights w;
  w.lambda1 = 1.0;
  w.lambda2 = 2.0;
  w.lambda3 = 10.0;
  w.lambda4 = 0.5;
  imgs[0].total = 1.0 + 2.0 * 2.0 + 10.0 * 0.5 + 0.5 * 4.0;
  imgs[1].total = 3.0 + 0.0 + 10.0 * 1.5 + 0.5 * 2.0;
  LossReport r = make_report(imgs, {3, 2}, w);
  CHECK(r.align == doctest::Approx(2.0));
  CHECK(r.cont == doctest::Approx(1.0));
  CHECK(r.back == doctest::Approx(1.0));
  CHECK(r.sep == doctest::Approx(3.0));
  CHECK(r.total == doctest::Approx(2.0 + 2.0 * 1.0 + 10.0 * 1.0 + 0.5 * 3.0));
  CHECK(r.total == doctest::Approx((imgs[0].total + imgs[1].total) / 2.0));

  auto j = r.to_json();
  for (const char* key : {"align", "cont", "back", "sep", "total", "per_image", "n_categories"})
    CHECK(j.contains(key));
  CHECK(j["per_image"].size() == 2);
  CHECK(j["n_categories"][0] == 3);
}

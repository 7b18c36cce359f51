#include "speakloc/camloc.hpp"
#include "speakloc/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace speakloc;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.conv_blocks = {{4, {3, 5, 5}, {2, 2, 2}}, {4, {3, 3, 3}, {2, 2, 2}}, {4, {3, 3, 3}, {1, 1, 1}}};
  c.recurrent_filters = {2, 2};
  return c;
}

Volume<float> noise_clip(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Volume<float> v(c.input_extent(), c.channels);
  for (Index i = 0; i < v.values.size(); ++i) v.values.data()[i] = u(rng);
  return v;
}

ClassActivationMap cam_of(Volume<double> values) {
  ClassActivationMap cam;
  cam.values = std::move(values);
  return cam;
}

FaceBox box(Index frame, double x1, double y1, double x2, double y2) {
  FaceBox b;
  b.frame_index = frame;
  b.x1 = x1;
  b.y1 = y1;
  b.x2 = x2;
  b.y2 = y2;
  return b;
}

// Closed-form trilinear weight of source cell c for target index j, pixel
// centres aligned, coordinates clamped to the source range.
double hat(Index j, Index target, Index source, Index c) {
  const double s = std::clamp((j + 0.5) * source / target - 0.5, 0.0, source - 1.0);
  return std::max(0.0, 1.0 - std::abs(s - c));
}

}  // namespace

TEST_SUITE("camloc") {

TEST_CASE("negative weighted sums clamp to zero") {
  Volume<double> f({2, 3, 3}, 2);
  f.values.setConstant(1.0);
  Vec<double> w(2);
  w << -1.0, 0.5;
  CHECK(combine_filters(f, w).values.maxCoeff() == 0.0);
}

TEST_CASE("a single non-negative filter with unit weight is its own map") {
  Volume<double> f({2, 3, 3}, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = u(rng);
  CHECK(combine_filters(f, Vec<double>::Ones(1)).values == f.values);
}

TEST_CASE("layers without spatial axes are rejected") {
  Volume<double> f({4, 1, 1}, 2);
  CHECK_THROWS_AS(combine_filters(f, Vec<double>::Ones(2)), ArgumentError);
  Volume<double> g({1, 2, 2}, 3);
  CHECK_THROWS_AS(combine_filters(g, Vec<double>::Ones(2)), ArgumentError);
}

TEST_CASE("normalisation divides by the range") {
  Volume<double> v({1, 2, 2}, 1);
  v.values << 0.0, 2.0, 1.0, 0.5;
  const auto n = normalize_and_upsample(cam_of(v), v.extent);
  CHECK_FALSE(n.degenerate);
  CHECK(n.values.values(1, 0) == 1.0);
  CHECK(n.values.values(2, 0) == 0.5);
  CHECK(n.values.values(3, 0) == 0.25);
}

TEST_CASE("constant maps are degenerate") {
  Volume<double> v({2, 2, 2}, 1);
  v.values.setConstant(0.7);
  const auto n = normalize_and_upsample(cam_of(v), {4, 4, 4});
  CHECK(n.degenerate);
  CHECK(n.values.values.maxCoeff() == 0.0);
  CHECK_THROWS_AS(normalize_and_upsample(cam_of(v), {1, 4, 4}), ArgumentError);
}

TEST_CASE("a bright cell upsamples to the closed-form trilinear bump") {
  const Extent src{2, 4, 5};
  const Extent dst{6, 12, 15};
  const Index ct = 1, cy = 2, cx = 3;
  Volume<double> v(src, 1);
  v.values(v.row(ct, cy, cx), 0) = 2.0;
  const auto n = normalize_and_upsample(cam_of(v), dst);
  double worst = 0.0;
  for (Index t = 0; t < dst.frames; ++t)
    for (Index y = 0; y < dst.height; ++y)
      for (Index x = 0; x < dst.width; ++x) {
        const double want = hat(t, dst.frames, src.frames, ct) *
                            hat(y, dst.height, src.height, cy) * hat(x, dst.width, src.width, cx);
        worst = std::max(worst, std::abs(n.values.values(n.values.row(t, y, x), 0) - want));
      }
  CHECK(worst <= 1e-12);
  CHECK(n.values.values(n.values.row(3 * ct + 1, 3 * cy + 1, 3 * cx + 1), 0) == doctest::Approx(1.0));
}

TEST_CASE("box scores") {
  Volume<double> v({2, 4, 4}, 1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < v.values.size(); ++i) v.values.data()[i] = u(rng);
  NormalizedCam cam{v, false};
  CHECK(score_face(cam, box(1, 0, 0, 1, 1)).score == v.frame(1).maxCoeff());

  NormalizedCam zero{Volume<double>({2, 4, 4}, 1), true};
  CHECK(score_face(zero, box(0, 0.2, 0.2, 0.6, 0.9)).score == 0.0);

  for (int trial = 0; trial < 300; ++trial) {
    const double x1 = u(rng) * 0.5, y1 = u(rng) * 0.5;
    const auto inner = box(trial % 2, x1, y1, x1 + 0.05 + u(rng) * 0.3, y1 + 0.05 + u(rng) * 0.3);
    const auto outer = box(trial % 2, inner.x1 * u(rng), inner.y1 * u(rng),
                           inner.x2 + (1 - inner.x2) * u(rng), inner.y2 + (1 - inner.y2) * u(rng));
    CHECK(score_face(cam, inner).score <= score_face(cam, outer).score);
  }
  CHECK_THROWS_AS(score_face(cam, box(5, 0, 0, 1, 1)), ArgumentError);
}

TEST_CASE("overlay blends by the map") {
  Volume<float> frames({1, 2, 3}, 1);
  frames.values << 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f;
  NormalizedCam zero{Volume<double>({1, 2, 3}, 1), true};
  const auto plain = render_overlay(frames, zero);
  REQUIRE(plain.channels() == 3);
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 3; ++c) CHECK(plain.values(r, c) == frames.values(r, 0));

  NormalizedCam full{Volume<double>({1, 2, 3}, 1), false};
  full.values.values.setOnes();
  OverlayOptions opts;
  opts.opacity = 1.0;
  const auto tinted = render_overlay(frames, full, opts);
  const auto hot = jet(1.0);
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 3; ++c) CHECK(tinted.values(r, c) == doctest::Approx(hot[c]));
}

TEST_CASE("jet runs from blue to red") {
  const auto lo = jet(0.0), hi = jet(1.0);
  CHECK(lo[2] > lo[0]);
  CHECK(hi[0] > hi[2]);
}

TEST_CASE("CAM available on convolutional and recurrent layers") {
  const auto c = tiny();
  const auto model = HicaModel<float>::build(c, 3);
  const auto clip = noise_clip(c, 5);
  for (const auto& tag : {LayerTag::last_conv(c), LayerTag::last_recurrent(c)}) {
    const auto cam = compute_cam(model, clip, tag, "x");
    CHECK(cam.source_layer == tag);
    CHECK(cam.values.channels() == 1);
    CHECK(cam.values.values.minCoeff() >= 0.0);
    const auto n = normalize_and_upsample(cam, c.input_extent());
    CHECK(n.values.values.minCoeff() >= 0.0);
    if (!n.degenerate) CHECK(n.values.values.maxCoeff() == doctest::Approx(1.0));
  }
}

TEST_CASE("scaling the logit scales the filter weights") {
  const auto c = tiny();
  auto model = HicaModel<float>::build(c, 7).cast<double>();
  const auto clip = noise_clip(c, 9).cast<double>();
  const auto tag = LayerTag::last_recurrent(c);
  const auto trace = model.forward(clip, true);
  const Mat<double> base = filter_weights(model, trace, tag, CamTarget::kLogit);
  const double scale = 2.5;
  auto scaled = model;
  scaled.head.weight *= scale;
  scaled.head.bias *= scale;
  const auto scaled_trace = scaled.forward(clip, true);
  const Mat<double> moved = filter_weights(scaled, scaled_trace, tag, CamTarget::kLogit);
  CHECK((moved - scale * base).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + base.cwiseAbs().maxCoeff()));

  // The rectified map keeps its argmax.
  const Volume<double> act = trace.activation(tag);
  const auto a = combine_filters(act, base.row(0).transpose());
  const auto b = combine_filters(act, moved.row(0).transpose());
  Index ia = 0, ib = 0;
  a.values.col(0).maxCoeff(&ia);
  b.values.col(0).maxCoeff(&ib);
  CHECK(ia == ib);
}

TEST_CASE("the last recurrent layer receives gradient") {
  const auto c = tiny();
  const auto model = HicaModel<float>::build(c, 11);
  const auto trace = model.forward(noise_clip(c, 13), true);
  const Mat<double> w = filter_weights(model, trace, LayerTag::last_recurrent(c));
  CHECK(w.cwiseAbs().maxCoeff() > 0.0);
}

}

#include "speakloc/errors.hpp"
#include "speakloc/milhead.hpp"
#include "speakloc/nn.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace speakloc;

namespace {

double squared(const std::vector<double>& frame_max) {
  double num = 0.0, den = 0.0;
  for (double m : frame_max) {
    num += m * m;
    den += m;
  }
  return den > 0.0 ? num / den : 0.0;
}

std::vector<std::vector<double>> random_bag(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> bag(1 + rng() % 5);
  for (auto& frame : bag) {
    frame.resize(1 + rng() % 4);
    for (auto& s : frame) s = u(rng);
  }
  return bag;
}

std::vector<double> maxima(const std::vector<std::vector<double>>& bag) {
  std::vector<double> m;
  for (const auto& f : bag) m.push_back(*std::max_element(f.begin(), f.end()));
  return m;
}

FaceBox box(Index frame, double x1, double y1, double x2, double y2) {
  FaceBox b;
  b.clip_id = "c";
  b.frame_index = frame;
  b.x1 = x1;
  b.y1 = y1;
  b.x2 = x2;
  b.y2 = y2;
  return b;
}

MilClip random_clip(std::uint64_t seed, const ModelConfig& mc) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  MilClip clip;
  clip.clip_id = "c";
  clip.embedding = Volume<float>(mc.embed_extent(), mc.embed_channels());
  for (Index i = 0; i < clip.embedding.values.size(); ++i) clip.embedding.values.data()[i] = n(rng);
  for (Index f = 0; f < mc.input_frames(); f += 3) {
    clip.boxes.push_back(box(f, 0.1, 0.2, 0.4, 0.7));
    clip.boxes.push_back(box(f, 0.5, 0.1, 0.9, 0.6));
  }
  for (Index s = 0; s < mc.segments; ++s) {
    clip.pos_labels.push_back(static_cast<int>(s % 2));
    clip.vad_labels.push_back(static_cast<int>(s % 3 == 0));
    Vec<double> a(8);
    for (auto& x : a) x = n(rng);
    clip.audio.push_back(a);
  }
  return clip;
}

MilConfig small_head() {
  MilConfig c;
  c.hidden = {16, 8};
  return c;
}

double grad_norm(const nn::Dense<float>& d) {
  return d.weight.squaredNorm() + d.bias.squaredNorm();
}

}  // namespace

TEST_SUITE("milhead") {

TEST_CASE("equal frames pool to their common value") {
  CHECK(pool_bag({{0.3}, {0.3, 0.1}, {0.3}}).value == doctest::Approx(0.3));
}

TEST_CASE("two frame arithmetic") {
  CHECK(pool_bag({{0.8}, {0.2}}).value == doctest::Approx(0.68));
}

TEST_CASE("empty bags are flagged") {
  const auto p = pool_bag({});
  CHECK(p.empty);
  CHECK(p.value == 0.0);
  CHECK(pool_bag({{}, {}}).empty);
}

TEST_CASE("pooling bounds, emphasis and within-frame max") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    auto bag = random_bag(rng);
    const auto m = maxima(bag);
    const double p = pool_bag(bag).value;
    CHECK(std::abs(p - squared(m)) <= 1e-12);
    CHECK(p >= *std::min_element(m.begin(), m.end()) - 1e-12);
    CHECK(p <= *std::max_element(m.begin(), m.end()) + 1e-12);
    bag[0].push_back(m[0] * u(rng));
    CHECK(pool_bag(bag).value == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(pool_bag({{0.37, 0.2}}).value == doctest::Approx(0.37));
  CHECK(pool_bag({{1.0}, {1.0, 0.5}}).value == doctest::Approx(1.0));
  CHECK(pool_bag({{0.7}, {0.4}}).value > 0.55);
}

TEST_CASE("pooling gradient matches finite differences") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = maxima(random_bag(rng));
    const auto g = pool_bag_gradient(m);
    for (std::size_t f = 0; f < m.size(); ++f) {
      auto hi = m, lo = m;
      hi[f] += 1e-6;
      lo[f] -= 1e-6;
      CHECK(g[f] == doctest::Approx((squared(hi) - squared(lo)) / 2e-6).epsilon(1e-5));
    }
  }
}

TEST_CASE("whole frame pooled to one cell is the spatial max") {
  Volume<double> e({2, 3, 4}, 2);
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index i = 0; i < e.values.size(); ++i) e.values.data()[i] = u(rng);
  const auto r = roi_pool(e, 1, box(1, 0, 0, 1, 1), 1);
  REQUIRE(r.features.size() == 2);
  for (Index c = 0; c < 2; ++c) CHECK(r.features(c) == e.frame(1).col(c).maxCoeff());
  CHECK(roi_pool(e, 0, box(0, 0.1, 0.1, 0.6, 0.9), 3).features ==
        roi_pool(e, 0, box(0, 0.1, 0.1, 0.6, 0.9), 3).features);
}

TEST_CASE("pooled activation follows a shifted impulse") {
  const Extent ex{1, 4, 8};
  for (Index x = 0; x < 8; ++x) {
    Volume<double> e(ex, 1);
    e.values(e.row(0, 2, x), 0) = 1.0;
    // A two-cell-wide box around the impulse sees it, one beside it does not.
    const double left = x / 8.0;
    const auto on = roi_pool(e, 0, box(0, left, 0.5, left + 0.125, 0.75), 1);
    CHECK(on.features(0) == 1.0);
    const double away = x < 4 ? 0.75 : 0.0;
    const auto off = roi_pool(e, 0, box(0, away, 0.0, away + 0.25, 1.0), 1);
    CHECK(off.features(0) == 0.0);
  }
}

TEST_CASE("nearest embedding frame") {
  CHECK(nearest_embed_frame(0, 8.0, 2.0, 20) == 0);
  CHECK(nearest_embed_frame(3, 8.0, 2.0, 20) == 0);
  CHECK(nearest_embed_frame(4, 8.0, 2.0, 20) == 1);
  CHECK(nearest_embed_frame(79, 8.0, 2.0, 20) == 19);
}

TEST_CASE("instance and VAD posteriors") {
  const auto model = MilModel::build(small_head(), 3);
  const Index d = 9 * model.config().channels;
  const auto zero = model.instance_scores(Mat<double>::Zero(2, d));
  CHECK(zero(0) > 0.0);
  CHECK(zero(0) < 1.0);
  CHECK(zero(0) == zero(1));

  const auto vad = model.vad_posteriors(Mat<double>::Zero(1, 8), Mat<double>::Zero(1, 8),
                                        VadInputs::kFused);
  CHECK(vad(0) > 0.0);
  CHECK(vad(0) < 1.0);

  std::mt19937_64 rng(53);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<double> audio(4, 8), visual(4, 8);
  for (Index i = 0; i < audio.size(); ++i) audio.data()[i] = n(rng);
  for (Index i = 0; i < visual.size(); ++i) visual.data()[i] = n(rng);
  const auto fwd = model.vad_posteriors(audio, visual, VadInputs::kFused);
  const Mat<double> ra = audio.colwise().reverse(), rv = visual.colwise().reverse();
  const auto rev = model.vad_posteriors(ra, rv, VadInputs::kFused);
  for (Index i = 0; i < 4; ++i) CHECK(rev(3 - i) == doctest::Approx(fwd(i)));
}

TEST_CASE("loss weight endpoints silence one head") {
  const ModelConfig mc;
  const MilGeometry geometry{mc.input_fps, mc.embed_fps, mc.segments};
  const auto model = MilModel::build(small_head(), 5);
  const auto clip = random_clip(59, mc);

  auto g1 = model.zeros_like();
  mil_clip_loss(model, clip, geometry, 1.0, VadInputs::kFused, &g1);
  CHECK(grad_norm(g1.audio_fc) == 0.0);
  for (const auto& d : g1.fusion) CHECK(grad_norm(d) == 0.0);
  double scorer1 = 0.0;
  for (const auto& d : g1.scorer) scorer1 += grad_norm(d);
  CHECK(scorer1 > 0.0);

  auto g0 = model.zeros_like();
  mil_clip_loss(model, clip, geometry, 0.0, VadInputs::kFused, &g0);
  for (const auto& d : g0.scorer) CHECK(grad_norm(d) == 0.0);
  CHECK(grad_norm(g0.audio_fc) > 0.0);

  CHECK_THROWS_AS(mil_clip_loss(model, clip, geometry, 1.5, VadInputs::kFused, nullptr),
                  ArgumentError);
}

TEST_CASE("head gradients match finite differences") {
  const ModelConfig mc;
  const MilGeometry geometry{mc.input_fps, mc.embed_fps, mc.segments};
  auto model = MilModel::build(small_head(), 7);
  const auto clip = random_clip(61, mc);
  auto grad = model.zeros_like();
  mil_clip_loss(model, clip, geometry, 0.5, VadInputs::kFused, &grad);

  // Smooth parameters only: the last scorer layer and the fusion output.
  auto check_entry = [&](Mat<float>& p, const Mat<float>& g, Index i) {
    const float keep = p.data()[i];
    const float eps = 1e-2f;
    p.data()[i] = keep + eps;
    const double hi = mil_clip_loss(model, clip, geometry, 0.5, VadInputs::kFused, nullptr).total;
    p.data()[i] = keep - eps;
    const double lo = mil_clip_loss(model, clip, geometry, 0.5, VadInputs::kFused, nullptr).total;
    p.data()[i] = keep;
    const double fd = (hi - lo) / (2.0 * eps);
    CHECK(std::abs(fd - g.data()[i]) <= 2e-3 + 2e-2 * std::abs(fd));
  };
  for (Index i = 0; i < model.scorer.back().weight.size(); ++i)
    check_entry(model.scorer.back().weight, grad.scorer.back().weight, i);
  check_entry(model.scorer.back().bias, grad.scorer.back().bias, 0);
  for (Index i = 0; i < model.fusion.back().weight.size(); ++i)
    check_entry(model.fusion.back().weight, grad.fusion.back().weight, i);
}

TEST_CASE("joint training lowers both loss terms and keeps the embedding") {
  const ModelConfig mc;
  const MilGeometry geometry{mc.input_fps, mc.embed_fps, mc.segments};
  auto model = MilModel::build(small_head(), 9);
  std::vector<MilClip> clips;
  for (int i = 0; i < 6; ++i) clips.push_back(random_clip(100 + i, mc));
  const auto before = clips[0].embedding.values;
  MilTrainConfig config;
  config.epochs = 15;
  config.batch_size = 2;
  const auto report = joint_train(model, clips, geometry, config);
  REQUIRE(report.epochs.size() == 15);
  CHECK(report.epochs.back().mil < report.epochs.front().mil);
  CHECK(report.epochs.back().av < report.epochs.front().av);
  CHECK(clips[0].embedding.values == before);
}

TEST_CASE("head configuration is validated") {
  MilConfig c;
  CHECK_NOTHROW(c.validate());
  c.pool = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}

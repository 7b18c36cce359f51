#include "speakloc/digest.hpp"
#include "speakloc/errors.hpp"
#include "speakloc/hica.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace speakloc;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.conv_blocks = {{4, {3, 5, 5}, {2, 2, 2}}, {4, {3, 3, 3}, {2, 2, 2}}, {4, {3, 3, 3}, {1, 1, 1}}};
  c.recurrent_filters = {2, 2};
  return c;
}

template <typename Scalar>
Volume<Scalar> noise_clip(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Volume<Scalar> v(c.input_extent(), c.channels);
  for (Index i = 0; i < v.values.size(); ++i) v.values.data()[i] = static_cast<Scalar>(u(rng));
  return v;
}

std::vector<HicaSample> memorable(const ModelConfig& c, int n, bool all_zero) {
  std::vector<HicaSample> out;
  for (int i = 0; i < n; ++i) {
    HicaSample s;
    s.frames = noise_clip<float>(c, 1000 + i);
    s.labels = Eigen::VectorXi::Zero(c.segments);
    if (!all_zero)
      for (Index k = 0; k < c.segments; ++k) s.labels(k) = (i + k) % 2;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_SUITE("hica") {

TEST_CASE("full-scale geometry") {
  const auto c = ModelConfig::full_scale();
  CHECK_NOTHROW(c.validate());
  CHECK(c.input_extent() == Extent{240, 180, 360});
  CHECK(c.embed_extent() == Extent{60, 12, 23});
  CHECK(c.embed_frames_per_segment() == 6);
}

TEST_CASE("toy geometry follows the strides") {
  ModelConfig c;
  c.input_height = 36;
  c.input_width = 72;
  c.embed_height = 9;
  c.embed_width = 18;
  CHECK_NOTHROW(c.validate());
  const auto model = HicaModel<float>::build(c, 1);
  const auto trace = model.forward(noise_clip<float>(c, 2), false);
  CHECK(trace.embedding().extent == Extent{20, 9, 18});
  CHECK(trace.embedding().channels() == c.embed_channels());
}

TEST_CASE("default toy model size") {
  CHECK(nn::parameter_count(HicaModel<float>::build(ModelConfig::toy(), 7)) == 14553);
}

TEST_CASE("zero recurrent layers leave no CAM source") {
  ModelConfig c;
  c.recurrent_filters.clear();
  CHECK_THROWS_AS(HicaModel<float>::build(c, 1), ConfigError);
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("CAM source undefined"));
}

TEST_CASE("inconsistent rates are configuration errors") {
  ModelConfig c;
  c.embed_fps = 3.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig d;
  d.embed_width = 11;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("zero frames give finite posteriors") {
  const auto c = tiny();
  const auto model = HicaModel<float>::build(c, 3);
  const Volume<float> zero(c.input_extent(), c.channels);
  const auto trace = model.forward(zero, false);
  const auto p = trace.posteriors();
  CHECK(p.allFinite());
  CHECK(p.minCoeff() > 0.0f);
  CHECK(p.maxCoeff() < 1.0f);
  CHECK(trace.embedding().all_finite());
}

TEST_CASE("duplicated batch rows give identical outputs") {
  const auto c = tiny();
  const auto model = HicaModel<float>::build(c, 3);
  SegmentBatch<float> batch;
  batch.clips = {noise_clip<float>(c, 4), noise_clip<float>(c, 4)};
  batch.labels = Eigen::MatrixXi::Zero(2, c.segments);
  const auto out = forward(model, batch);
  CHECK(out.posteriors.row(0) == out.posteriors.row(1));
  CHECK(out.embeddings[0].values == out.embeddings[1].values);

  batch.clips[1] = Volume<float>({3, 3, 3}, 1);
  CHECK_THROWS_AS(forward(model, batch), ArgumentError);
}

TEST_CASE("recurrent layers keep their spatial axes") {
  const auto c = tiny();
  const auto model = HicaModel<float>::build(c, 3);
  const auto trace = model.forward(noise_clip<float>(c, 5), false);
  for (const auto& r : trace.recurrent_outputs) CHECK(r.extent == c.embed_extent());
}

TEST_CASE("future frames influence earlier outputs") {
  const auto c = tiny();
  const auto model = HicaModel<float>::build(c, 3);
  auto clip = noise_clip<float>(c, 6);
  const auto before = model.forward(clip, false);
  const Index last = c.input_frames() - 8;
  clip.frames(last, 8).setZero();
  const auto after = model.forward(clip, false);
  const Index plane = c.embed_extent().plane();
  CHECK((before.embedding().values.topRows(plane) - after.embedding().values.topRows(plane))
            .cwiseAbs()
            .maxCoeff() > 0.0f);
  CHECK(before.logits(0) != after.logits(0));
}

TEST_CASE("segment loss gradient") {
  Vec<double> logits(4);
  logits << -1.2, 0.3, 2.0, 0.0;
  Eigen::VectorXi labels(4);
  labels << 0, 1, 1, 0;
  Vec<double> d;
  segment_loss(logits, labels, &d);
  for (Index i = 0; i < 4; ++i) {
    auto hi = logits, lo = logits;
    hi(i) += 1e-6;
    lo(i) -= 1e-6;
    const double fd = (segment_loss<double>(hi, labels, nullptr) - segment_loss<double>(lo, labels, nullptr)) / 2e-6;
    CHECK(d(i) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("parameter gradients match central differences") {
  const auto c = tiny();
  auto model = HicaModel<float>::build(c, 21).cast<double>();
  const auto clip = noise_clip<double>(c, 22);
  Eigen::VectorXi labels(c.segments);
  for (Index k = 0; k < c.segments; ++k) labels(k) = static_cast<int>(k % 3 == 0);

  auto loss_of = [&](const HicaModel<double>& m) {
    const auto trace = m.forward(clip, false);
    return segment_loss<double>(trace.logits, labels, nullptr);
  };
  const auto trace = model.forward(clip, true);
  Vec<double> dlogits;
  segment_loss<double>(trace.logits, labels, &dlogits);
  auto grad = model.zeros_like();
  model.backward(trace, dlogits, &grad);

  std::vector<Mat<double>*> params;
  model.visit([&](Mat<double>& m) { params.push_back(&m); });
  std::vector<const Mat<double>*> grads;
  grad.visit([&](const Mat<double>& m) { grads.push_back(&m); });
  REQUIRE(params.size() == grads.size());

  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (int draw = 0; draw < 3; ++draw) {
      const Index i = static_cast<Index>(rng() % static_cast<std::uint64_t>(params[t]->size()));
      double& p = params[t]->data()[i];
      const double keep = p;
      const double eps = 1e-7;
      p = keep + eps;
      const double hi = loss_of(model);
      p = keep - eps;
      const double lo = loss_of(model);
      p = keep;
      const double fd = (hi - lo) / (2.0 * eps);
      const double g = grads[t]->data()[i];
      worst = std::max(worst, std::abs(fd - g) / std::max(1e-6, std::abs(fd) + std::abs(g)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("training lowers the loss on memorable samples") {
  const auto c = tiny();
  auto model = HicaModel<float>::build(c, 31);
  const auto data = memorable(c, 10, false);
  HicaTrainConfig config;
  config.epochs = 5;
  config.batch_size = 1;
  const auto report = train(model, data, config);
  CHECK(report.curve.size() == 50);
  CHECK(report.final_loss < report.initial_loss);
}

TEST_CASE("all-negative labels drive posteriors down") {
  const auto c = tiny();
  auto model = HicaModel<float>::build(c, 33);
  const auto data = memorable(c, 10, true);
  HicaTrainConfig config;
  config.epochs = 40;
  config.batch_size = 2;
  config.lr_decay = 1.0;
  train(model, data, config);
  double mean = 0.0;
  for (const auto& s : data) mean += model.forward(s.frames, false).posteriors().mean();
  CHECK(mean / data.size() < 0.1);
}

TEST_CASE("inference is deterministic and checkpoints round trip") {
  const auto c = tiny();
  const auto a = HicaModel<float>::build(c, 41);
  const auto b = HicaModel<float>::build(c, 41);
  CHECK(parameter_digest(a) == parameter_digest(b));
  CHECK(parameter_digest(a) != parameter_digest(HicaModel<float>::build(c, 42)));
  const auto clip = noise_clip<float>(c, 43);
  CHECK(a.forward(clip, false).logits == b.forward(clip, false).logits);

  const auto path = (std::filesystem::temp_directory_path() / "speakloc_hica_roundtrip.ckpt").string();
  save_checkpoint(path, a);
  const auto loaded = load_hica_checkpoint(path);
  CHECK(parameter_digest(loaded) == parameter_digest(a));
  CHECK(loaded.config().recurrent_filters == c.recurrent_filters);
  std::filesystem::remove(path);
}

TEST_CASE("layer names") {
  const auto c = tiny();
  CHECK(LayerTag::parse("conv2", c) == LayerTag{LayerTag::Kind::kConv, 1});
  CHECK(LayerTag::parse("last_lstm", c) == LayerTag::last_recurrent(c));
  CHECK(LayerTag::last_recurrent(c).name() == "lstm2");
  CHECK_THROWS(LayerTag::parse("lstm9", c));
  CHECK_THROWS(LayerTag::parse("pool", c));
}

}

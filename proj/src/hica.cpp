#include "speakloc/hica.hpp"

#include "speakloc/errors.hpp"
#include "speakloc/formats.hpp"
#include "speakloc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace speakloc {

// ------------------------------------------------------------ ModelConfig

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.input_height = 180;
  c.input_width = 360;
  c.channels = 3;
  c.input_fps = 24.0;
  c.embed_height = 12;
  c.embed_width = 23;
  c.embed_fps = 6.0;
  c.conv_blocks = {{32, {3, 5, 5}, {2, 4, 4}}, {64, {3, 3, 3}, {2, 4, 4}}, {64, {3, 3, 3}, {1, 1, 1}}};
  c.recurrent_filters = {32, 32, 32};
  return c;
}

namespace {

Index whole(double v, const char* what) {
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-6 || r <= 0) {
    throw ConfigError(std::string(what) + " must be a positive whole number of frames");
  }
  return static_cast<Index>(r);
}

}  // namespace

Index ModelConfig::input_frames() const {
  return whole(static_cast<double>(segments) * segment_seconds * input_fps, "k * t * input_fps");
}

Index ModelConfig::embed_frames() const {
  return whole(static_cast<double>(segments) * segment_seconds * embed_fps, "k * t * embed_fps");
}

Index ModelConfig::embed_channels() const {
  return recurrent_filters.empty() ? 0 : 2 * recurrent_filters.back();
}

void ModelConfig::validate() const {
  if (input_height <= 0 || input_width <= 0 || channels <= 0) {
    throw ConfigError("input resolution and channels must be positive");
  }
  if (!(input_fps > 0) || !(embed_fps > 0)) throw ConfigError("frame rates must be positive");
  if (segments < 1) throw ConfigError("k (segments per sample) must be at least 1");
  if (!(segment_seconds > 0)) throw ConfigError("t (segment length) must be positive");
  if (conv_blocks.empty()) throw ConfigError("at least one 3D convolution block is required");
  if (recurrent_filters.empty()) {
    throw ConfigError("at least one recurrent layer is required (CAM source undefined)");
  }
  if (recurrent_kernel < 1 || recurrent_kernel % 2 == 0) {
    throw ConfigError("recurrent kernel must be odd and positive");
  }
  for (const auto& b : conv_blocks) {
    if (b.filters <= 0) throw ConfigError("convolution filters must be positive");
    for (int a = 0; a < 3; ++a) {
      if (b.kernel[a] < 1 || b.stride[a] < 1) {
        throw ConfigError("convolution kernels and strides must be positive");
      }
    }
  }
  for (Index f : recurrent_filters) {
    if (f <= 0) throw ConfigError("recurrent filter counts must be positive");
  }
  Extent e = input_extent();
  for (const auto& b : conv_blocks) e = conv_output_extent(e, b.kernel, b.stride);
  const Extent want = embed_extent();
  if (!(e == want)) {
    throw ConfigError("convolution strides map the input to " + std::to_string(e.frames) + "x" +
                      std::to_string(e.height) + "x" + std::to_string(e.width) +
                      " but the embedding is configured as " + std::to_string(want.frames) + "x" +
                      std::to_string(want.height) + "x" + std::to_string(want.width));
  }
  if (embed_frames() % segments != 0) {
    throw ConfigError("embedding frames must divide evenly into k segments");
  }
  if (input_frames() % segments != 0) {
    throw ConfigError("input frames must divide evenly into k segments");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.conv_blocks) {
    blocks.push_back({{"filters", b.filters}, {"kernel", b.kernel}, {"stride", b.stride}});
  }
  j = {{"input_hw", {c.input_height, c.input_width}},
       {"channels", c.channels},
       {"input_fps", c.input_fps},
       {"embed_hw", {c.embed_height, c.embed_width}},
       {"embed_fps", c.embed_fps},
       {"conv_blocks", blocks},
       {"recurrent_filters", c.recurrent_filters},
       {"recurrent_kernel", c.recurrent_kernel},
       {"t_s", c.segment_seconds},
       {"k", c.segments}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.input_height = j.at("input_hw").at(0).get<Index>();
  c.input_width = j.at("input_hw").at(1).get<Index>();
  c.channels = j.at("channels").get<Index>();
  c.input_fps = j.at("input_fps").get<double>();
  c.embed_height = j.at("embed_hw").at(0).get<Index>();
  c.embed_width = j.at("embed_hw").at(1).get<Index>();
  c.embed_fps = j.at("embed_fps").get<double>();
  c.conv_blocks.clear();
  for (const auto& b : j.at("conv_blocks")) {
    c.conv_blocks.push_back({b.at("filters").get<Index>(), b.at("kernel").get<Triple>(),
                             b.at("stride").get<Triple>()});
  }
  c.recurrent_filters = j.at("recurrent_filters").get<std::vector<Index>>();
  c.recurrent_kernel = j.at("recurrent_kernel").get<Index>();
  c.segment_seconds = j.at("t_s").get<double>();
  c.segments = j.at("k").get<Index>();
}

// --------------------------------------------------------------- LayerTag

std::string LayerTag::name() const {
  return (kind == Kind::kConv ? "conv" : "lstm") + std::to_string(index + 1);
}

LayerTag LayerTag::last_conv(const ModelConfig& config) {
  return {Kind::kConv, static_cast<Index>(config.conv_blocks.size()) - 1};
}

LayerTag LayerTag::last_recurrent(const ModelConfig& config) {
  return {Kind::kRecurrent, static_cast<Index>(config.recurrent_filters.size()) - 1};
}

LayerTag LayerTag::parse(const std::string& text, const ModelConfig& config) {
  if (text == "last_conv") return last_conv(config);
  if (text == "last_lstm" || text == "last_recurrent") return last_recurrent(config);
  LayerTag tag;
  std::string digits;
  if (text.rfind("conv", 0) == 0) {
    tag.kind = Kind::kConv;
    digits = text.substr(4);
  } else if (text.rfind("lstm", 0) == 0) {
    tag.kind = Kind::kRecurrent;
    digits = text.substr(4);
  } else {
    throw ArgumentError("unknown layer tag '" + text + "'");
  }
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    throw ArgumentError("unknown layer tag '" + text + "'");
  }
  tag.index = std::stol(digits) - 1;
  const auto count = static_cast<Index>(tag.kind == Kind::kConv ? config.conv_blocks.size()
                                                                : config.recurrent_filters.size());
  if (tag.index < 0 || tag.index >= count) {
    throw ArgumentError("layer tag '" + text + "' is out of range");
  }
  return tag;
}

// ------------------------------------------------------------ SegmentHead

template <typename Scalar>
SegmentHead<Scalar>::SegmentHead(Index channels)
    : weight(Mat<Scalar>::Zero(channels, 1)), bias(Mat<Scalar>::Zero(1, 1)) {}

template <typename Scalar>
void SegmentHead<Scalar>::init(std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(weight.rows() + 1));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < weight.size(); ++i) weight(i) = static_cast<Scalar>(dist(rng));
  bias.setZero();
}

template <typename Scalar>
Vec<Scalar> SegmentHead<Scalar>::forward(const Volume<Scalar>& features, Index segments,
                                         Cache* cache) const {
  const Extent& e = features.extent;
  const Index per_segment = e.frames / segments;
  const Vec<Scalar> projection = features.values * weight;
  Vec<Scalar> logits = Vec<Scalar>::Zero(segments);
  if (cache != nullptr) {
    cache->argmax_rows.assign(static_cast<std::size_t>(e.frames), 0);
    cache->segments = segments;
  }
  for (Index t = 0; t < e.frames; ++t) {
    Index best = 0;
    const Scalar peak = projection.segment(t * e.plane(), e.plane()).maxCoeff(&best);
    logits(t / per_segment) += peak;
    if (cache != nullptr) cache->argmax_rows[static_cast<std::size_t>(t)] = t * e.plane() + best;
  }
  logits /= static_cast<Scalar>(per_segment);
  logits.array() += bias(0, 0);
  return logits;
}

template <typename Scalar>
Volume<Scalar> SegmentHead<Scalar>::backward(const Cache& cache, const Volume<Scalar>& features,
                                             const Vec<Scalar>& dlogits, SegmentHead* grad) const {
  const Extent& e = features.extent;
  const Index per_segment = e.frames / cache.segments;
  Volume<Scalar> dfeatures(e, features.channels());
  for (Index t = 0; t < e.frames; ++t) {
    const Scalar d = dlogits(t / per_segment) / static_cast<Scalar>(per_segment);
    const Index r = cache.argmax_rows[static_cast<std::size_t>(t)];
    dfeatures.values.row(r) += d * weight.col(0).transpose();
    if (grad != nullptr) grad->weight.col(0) += d * features.values.row(r).transpose();
  }
  if (grad != nullptr) grad->bias(0, 0) += dlogits.sum();
  return dfeatures;
}

template <typename Scalar>
SegmentHead<Scalar> SegmentHead<Scalar>::zeros_like() const {
  return SegmentHead(weight.rows());
}

// -------------------------------------------------------------- HicaModel

template <typename Scalar>
Vec<Scalar> HicaModel<Scalar>::Trace::posteriors() const {
  return logits.unaryExpr([](Scalar z) { return nn::sigmoid(z); });
}

template <typename Scalar>
const Volume<Scalar>& HicaModel<Scalar>::Trace::activation(const LayerTag& tag) const {
  const auto i = static_cast<std::size_t>(tag.index);
  if (tag.kind == LayerTag::Kind::kConv) return conv_outputs.at(i);
  return recurrent_outputs.at(i);
}

template <typename Scalar>
HicaModel<Scalar> HicaModel<Scalar>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  HicaModel m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  Index channels = config.channels;
  for (const auto& b : config.conv_blocks) {
    m.convs.emplace_back(channels, b.filters, b.kernel, b.stride);
    m.convs.back().init(rng);
    channels = b.filters;
  }
  for (Index hidden : config.recurrent_filters) {
    m.recurrent.emplace_back(channels, hidden, config.recurrent_kernel);
    m.recurrent.back().init(rng);
    channels = 2 * hidden;
  }
  m.head = SegmentHead<Scalar>(channels);
  m.head.init(rng);
  return m;
}

template <typename Scalar>
typename HicaModel<Scalar>::Trace HicaModel<Scalar>::forward(const Volume<Scalar>& clip,
                                                             bool keep_caches) const {
  if (!(clip.extent == config_.input_extent()) || clip.channels() != config_.channels) {
    throw ArgumentError("clip shape " + std::to_string(clip.extent.frames) + "x" +
                        std::to_string(clip.extent.height) + "x" +
                        std::to_string(clip.extent.width) + "x" +
                        std::to_string(clip.channels()) + " does not match the model input");
  }
  Trace trace;
  trace.conv_caches.resize(keep_caches ? convs.size() : 0);
  trace.recurrent_caches.resize(keep_caches ? recurrent.size() : 0);

  const Volume<Scalar>* x = &clip;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    Volume<Scalar> y = convs[i].forward(*x, keep_caches ? &trace.conv_caches[i] : nullptr);
    nn::relu_inplace(y.values);
    trace.conv_outputs.push_back(std::move(y));
    x = &trace.conv_outputs.back();
  }
  for (std::size_t i = 0; i < recurrent.size(); ++i) {
    trace.recurrent_outputs.push_back(
        recurrent[i].forward(*x, keep_caches ? &trace.recurrent_caches[i] : nullptr));
    x = &trace.recurrent_outputs.back();
  }
  trace.logits = head.forward(*x, config_.segments, keep_caches ? &trace.head_cache : nullptr);
  return trace;
}

template <typename Scalar>
Vec<Scalar> HicaModel<Scalar>::logits_from(const LayerTag& tag,
                                           const Volume<Scalar>& activation) const {
  Volume<Scalar> x = activation;
  std::size_t first_rec = 0;
  if (tag.kind == LayerTag::Kind::kConv) {
    for (std::size_t i = static_cast<std::size_t>(tag.index) + 1; i < convs.size(); ++i) {
      x = convs[i].forward(x, nullptr);
      nn::relu_inplace(x.values);
    }
  } else {
    first_rec = static_cast<std::size_t>(tag.index) + 1;
  }
  for (std::size_t i = first_rec; i < recurrent.size(); ++i) x = recurrent[i].forward(x, nullptr);
  return head.forward(x, config_.segments, nullptr);
}

template <typename Scalar>
void HicaModel<Scalar>::backward(const Trace& trace, const Vec<Scalar>& dlogits, HicaModel* grad,
                                 const BackwardOptions& options) const {
  if (trace.conv_caches.size() != convs.size()) {
    throw ArgumentError("backward requires a forward trace with caches");
  }
  auto capture = [&](LayerTag::Kind kind, std::size_t index, const Volume<Scalar>& d) {
    if (options.stop_at && options.stop_at->kind == kind &&
        options.stop_at->index == static_cast<Index>(index)) {
      if (options.activation_grad != nullptr) *options.activation_grad = d;
      return true;
    }
    return false;
  };

  Volume<Scalar> d =
      head.backward(trace.head_cache, trace.embedding(), dlogits, grad ? &grad->head : nullptr);
  if (options.embedding_grad != nullptr) d.values += options.embedding_grad->values;

  for (std::size_t i = recurrent.size(); i-- > 0;) {
    if (capture(LayerTag::Kind::kRecurrent, i, d)) return;
    d = recurrent[i].backward(trace.recurrent_caches[i], d, grad ? &grad->recurrent[i] : nullptr);
  }
  for (std::size_t i = convs.size(); i-- > 0;) {
    if (capture(LayerTag::Kind::kConv, i, d)) return;
    nn::relu_backward(trace.conv_outputs[i].values, d.values);
    d = convs[i].backward(trace.conv_caches[i], d, grad ? &grad->convs[i] : nullptr, i > 0);
  }
}

template <typename Scalar>
HicaModel<Scalar> HicaModel<Scalar>::zeros_like() const {
  HicaModel z;
  z.config_ = config_;
  for (const auto& c : convs) z.convs.push_back(c.zeros_like());
  for (const auto& r : recurrent) z.recurrent.push_back(r.zeros_like());
  z.head = head.zeros_like();
  return z;
}

template <typename Scalar>
template <typename Other>
HicaModel<Other> HicaModel<Scalar>::cast() const {
  HicaModel<Other> out = HicaModel<Other>::build(config_, 0);
  std::vector<const Mat<Scalar>*> src;
  visit([&](const Mat<Scalar>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](Mat<Other>& m) { m = src[i++]->template cast<Other>(); });
  return out;
}

template class SegmentHead<float>;
template class SegmentHead<double>;
template class HicaModel<float>;
template class HicaModel<double>;
template HicaModel<double> HicaModel<float>::cast<double>() const;
template HicaModel<float> HicaModel<double>::cast<float>() const;
template HicaModel<float> HicaModel<float>::cast<float>() const;

// ------------------------------------------------------------------ batch

template <typename Scalar>
BatchOutput<Scalar> forward(const HicaModel<Scalar>& model, const SegmentBatch<Scalar>& batch) {
  const auto n = static_cast<Index>(batch.clips.size());
  if (batch.labels.size() != 0 &&
      (batch.labels.rows() != n || batch.labels.cols() != model.config().segments)) {
    throw ArgumentError("label matrix must be batch x k");
  }
  BatchOutput<Scalar> out;
  out.posteriors.resize(n, model.config().segments);
  for (Index b = 0; b < n; ++b) {
    auto trace = model.forward(batch.clips[static_cast<std::size_t>(b)], false);
    out.posteriors.row(b) = trace.posteriors().transpose();
    out.embeddings.push_back(std::move(trace.recurrent_outputs.back()));
  }
  return out;
}

template BatchOutput<float> forward(const HicaModel<float>&, const SegmentBatch<float>&);
template BatchOutput<double> forward(const HicaModel<double>&, const SegmentBatch<double>&);

// --------------------------------------------------------------- training

template <typename Scalar>
Scalar segment_loss(const Vec<Scalar>& logits, const Eigen::VectorXi& labels,
                    Vec<Scalar>* dlogits) {
  if (labels.size() != logits.size()) throw ArgumentError("one label per segment is required");
  const auto k = static_cast<Scalar>(logits.size());
  Scalar loss = 0;
  if (dlogits != nullptr) dlogits->resize(logits.size());
  for (Index i = 0; i < logits.size(); ++i) {
    const auto y = static_cast<Scalar>(labels(i));
    loss += nn::bce_with_logit(logits(i), y);
    if (dlogits != nullptr) (*dlogits)(i) = (nn::sigmoid(logits(i)) - y) / k;
  }
  return loss / k;
}

template float segment_loss(const Vec<float>&, const Eigen::VectorXi&, Vec<float>*);
template double segment_loss(const Vec<double>&, const Eigen::VectorXi&, Vec<double>*);

double evaluate_loss(const HicaModel<float>& model, std::span<const HicaSample> data,
                     Index workers) {
  std::vector<double> losses(data.size(), 0.0);
  parallel_for(static_cast<Index>(data.size()), workers, [&](Index i) {
    const auto& s = data[static_cast<std::size_t>(i)];
    const auto trace = model.forward(s.frames, false);
    losses[static_cast<std::size_t>(i)] = segment_loss<float>(trace.logits, s.labels, nullptr);
  });
  return data.empty() ? 0.0 : std::accumulate(losses.begin(), losses.end(), 0.0) /
                                  static_cast<double>(data.size());
}

TrainReport train(HicaModel<float>& model, std::span<const HicaSample> data,
                  const HicaTrainConfig& config) {
  if (data.empty()) throw ArgumentError("training requires at least one sample");
  for (const auto& s : data) {
    if (s.labels.size() != model.config().segments) {
      throw ArgumentError("every training sample needs k PoS labels");
    }
  }
  nn::Optimizer<HicaModel<float>> optimizer(model, config.optimizer);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  Index iteration = 0;
  double lr = config.optimizer.learning_rate;
  const auto batch_size = static_cast<std::size_t>(std::max<Index>(1, config.batch_size));

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    Index epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      std::vector<HicaModel<float>> grads(count);
      std::vector<double> losses(count, 0.0);
      parallel_for(static_cast<Index>(count), config.workers, [&](Index b) {
        const auto ub = static_cast<std::size_t>(b);
        const HicaSample& s = data[order[start + ub]];
        const auto trace = model.forward(s.frames, true);
        Vec<float> dlogits;
        losses[ub] = segment_loss<float>(trace.logits, s.labels, &dlogits);
        grads[ub] = model.zeros_like();
        model.backward(trace, dlogits, &grads[ub]);
      });

      HicaModel<float> grad = model.zeros_like();
      double loss = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        nn::accumulate(grad, grads[b], 1.0 / static_cast<double>(count));
        loss += losses[b] / static_cast<double>(count);
      }
      if (!std::isfinite(loss) || !std::isfinite(nn::squared_norm(grad))) {
        throw NumericalError("training diverged at iteration " + std::to_string(iteration) +
                             " (epoch " + std::to_string(epoch) + "): loss is " +
                             std::to_string(loss));
      }
      optimizer.step(model, grad);

      const LossPoint point{iteration, loss};
      report.curve.push_back(point);
      if (iteration == 0) report.initial_loss = loss;
      if (config.on_iteration) config.on_iteration(point);
      epoch_loss += loss;
      ++epoch_batches;
      ++iteration;
    }
    report.final_loss = epoch_loss / static_cast<double>(std::max<Index>(1, epoch_batches));
    if (config.on_epoch) config.on_epoch(epoch, model);
    lr *= config.lr_decay;
    optimizer.set_learning_rate(lr);
  }
  return report;
}

// ------------------------------------------------------------ checkpoints

void save_checkpoint(const std::string& path, const HicaModel<float>& model) {
  nlohmann::json header;
  header["config"] = model.config();
  write_checkpoint(path, "hica", header, parameter_pointers(model));
}

HicaModel<float> load_hica_checkpoint(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path, "hica");
  ModelConfig config;
  try {
    config = ckpt.header.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad model config: " + e.what());
  }
  auto model = HicaModel<float>::build(config, 0);
  assign_parameters(model, ckpt.tensors);
  return model;
}

}  // namespace speakloc

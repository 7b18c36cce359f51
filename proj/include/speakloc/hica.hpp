#pragma once

// Cross-modal visual backbone: a short-context 3D convolution stack followed
// by stacked convolutional bidirectional LSTMs and a per-segment
// presence-of-speech head.

#include "speakloc/nn.hpp"
#include "speakloc/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace speakloc {

struct ConvBlockConfig {
  Index filters = 8;
  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
};

struct ModelConfig {
  Index input_height = 24;
  Index input_width = 48;
  Index channels = 1;
  double input_fps = 8.0;
  Index embed_height = 6;
  Index embed_width = 12;
  double embed_fps = 2.0;
  std::vector<ConvBlockConfig> conv_blocks{
      {8, {3, 5, 5}, {2, 2, 2}}, {8, {3, 3, 3}, {2, 2, 2}}, {8, {3, 3, 3}, {1, 1, 1}}};
  std::vector<Index> recurrent_filters{4, 4, 4};  // hidden channels per direction
  Index recurrent_kernel = 3;
  double segment_seconds = 1.0;  // t
  Index segments = 10;           // k

  /// 180x360 frames at 24 fps down to a 12x23 embedding at 6 fps.
  static ModelConfig full_scale();
  /// Desk-scale default: 24x48 frames at 8 fps down to 6x12 at 2 fps.
  static ModelConfig toy() { return {}; }

  Index input_frames() const;
  Index embed_frames() const;
  Index embed_frames_per_segment() const { return embed_frames() / segments; }
  Index input_frames_per_segment() const { return input_frames() / segments; }
  Extent input_extent() const { return {input_frames(), input_height, input_width}; }
  Extent embed_extent() const { return {embed_frames(), embed_height, embed_width}; }
  /// Channels M of the last recurrent layer (both directions).
  Index embed_channels() const;

  /// Throws ConfigError when strides, resolutions and rates disagree.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Names an intermediate activation: "conv1".."convN" (post-ReLU) or
/// "lstm1".."lstmN" (bidirectional outputs).
struct LayerTag {
  enum class Kind { kConv, kRecurrent };
  Kind kind = Kind::kRecurrent;
  Index index = 0;  // zero-based

  std::string name() const;
  /// Accepts convN / lstmN and the aliases last_conv / last_lstm.
  static LayerTag parse(const std::string& text, const ModelConfig& config);
  static LayerTag last_conv(const ModelConfig& config);
  static LayerTag last_recurrent(const ModelConfig& config);
  friend bool operator==(const LayerTag&, const LayerTag&) = default;
};

/// Shared 1x1x1 projection, global spatial max pooling per frame, and a mean
/// over the frames of each segment. Produces one logit per segment.
template <typename Scalar>
class SegmentHead {
 public:
  using scalar_type = Scalar;
  SegmentHead() = default;
  explicit SegmentHead(Index channels);

  struct Cache {
    std::vector<Index> argmax_rows;  // per frame
    Index segments = 0;
  };

  void init(std::mt19937_64& rng);
  Vec<Scalar> forward(const Volume<Scalar>& features, Index segments, Cache* cache) const;
  Volume<Scalar> backward(const Cache& cache, const Volume<Scalar>& features,
                          const Vec<Scalar>& dlogits, SegmentHead* grad) const;

  SegmentHead zeros_like() const;
  template <typename F>
  void visit(F&& f) { f(weight); f(bias); }
  template <typename F>
  void visit(F&& f) const { f(weight); f(bias); }

  Mat<Scalar> weight;  // M x 1
  Mat<Scalar> bias;    // 1 x 1
};

template <typename Scalar>
class HicaModel {
 public:
  using scalar_type = Scalar;

  struct Trace {
    std::vector<typename nn::Conv3d<Scalar>::Cache> conv_caches;
    std::vector<Volume<Scalar>> conv_outputs;
    std::vector<typename nn::BiConvLstm<Scalar>::Cache> recurrent_caches;
    std::vector<Volume<Scalar>> recurrent_outputs;
    typename SegmentHead<Scalar>::Cache head_cache;
    Vec<Scalar> logits;

    Vec<Scalar> posteriors() const;
    const Volume<Scalar>& embedding() const { return recurrent_outputs.back(); }
    const Volume<Scalar>& activation(const LayerTag& tag) const;
  };

  HicaModel() = default;
  /// Deterministic initialisation from `seed`. Throws ConfigError on an
  /// inconsistent configuration (including zero recurrent layers).
  static HicaModel build(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Full forward pass over one clip of k segments. Caches are kept only
  /// when `keep_caches` is set (required for backward()).
  Trace forward(const Volume<Scalar>& clip, bool keep_caches = true) const;

  /// Recomputes segment logits from a (possibly perturbed) activation at
  /// `tag`, running only the downstream layers.
  Vec<Scalar> logits_from(const LayerTag& tag, const Volume<Scalar>& activation) const;

  struct BackwardOptions {
    std::optional<LayerTag> stop_at;        // capture d/d activation here and stop
    Volume<Scalar>* activation_grad = nullptr;
    const Volume<Scalar>* embedding_grad = nullptr;  // extra gradient on the last recurrent output
  };

  /// Backpropagates d loss / d segment logits. Parameter gradients are
  /// accumulated into `grad` when non-null.
  void backward(const Trace& trace, const Vec<Scalar>& dlogits, HicaModel* grad,
                const BackwardOptions& options) const;
  void backward(const Trace& trace, const Vec<Scalar>& dlogits, HicaModel* grad) const {
    backward(trace, dlogits, grad, BackwardOptions{});
  }

  HicaModel zeros_like() const;
  template <typename Other>
  HicaModel<Other> cast() const;

  template <typename F>
  void visit(F&& f) {
    for (auto& c : convs) c.visit(f);
    for (auto& r : recurrent) r.visit(f);
    head.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    for (const auto& c : convs) c.visit(f);
    for (const auto& r : recurrent) r.visit(f);
    head.visit(f);
  }

  std::vector<nn::Conv3d<Scalar>> convs;
  std::vector<nn::BiConvLstm<Scalar>> recurrent;
  SegmentHead<Scalar> head;

 private:
  template <typename>
  friend class HicaModel;
  ModelConfig config_;
};

/// A batch of clips with their per-segment labels (batch x k).
template <typename Scalar>
struct SegmentBatch {
  std::vector<Volume<Scalar>> clips;
  Eigen::MatrixXi labels;
};

template <typename Scalar>
struct BatchOutput {
  Mat<Scalar> posteriors;                  // batch x k, each in (0, 1)
  std::vector<Volume<Scalar>> embeddings;  // last recurrent layer per clip
};

/// Inference over a batch; throws ArgumentError on shape mismatch.
template <typename Scalar>
BatchOutput<Scalar> forward(const HicaModel<Scalar>& model, const SegmentBatch<Scalar>& batch);

struct HicaSample {
  Volume<float> frames;
  Eigen::VectorXi labels;  // PoS, one per segment
};

struct LossPoint {
  Index iteration = 0;
  double loss = 0.0;
};

struct HicaTrainConfig {
  Index epochs = 10;
  Index batch_size = 8;
  nn::OptimizerConfig optimizer;
  double lr_decay = 0.9;  // multiplicative, per epoch
  std::uint64_t seed = 7;
  Index workers = 1;
  std::function<void(const LossPoint&)> on_iteration;
  std::function<void(Index epoch, const HicaModel<float>&)> on_epoch;  // checkpoint hook
};

struct TrainReport {
  std::vector<LossPoint> curve;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Mean per-segment sigmoid cross entropy for one sample, plus d/d logits.
template <typename Scalar>
Scalar segment_loss(const Vec<Scalar>& logits, const Eigen::VectorXi& labels, Vec<Scalar>* dlogits);

/// Minibatch training with the configured optimizer. Throws NumericalError when the loss
/// becomes non-finite.
TrainReport train(HicaModel<float>& model, std::span<const HicaSample> data,
                  const HicaTrainConfig& config);

/// Mean segment loss of `model` over `data` (inference only).
double evaluate_loss(const HicaModel<float>& model, std::span<const HicaSample> data,
                     Index workers = 1);

void save_checkpoint(const std::string& path, const HicaModel<float>& model);
HicaModel<float> load_hica_checkpoint(const std::string& path);

}  // namespace speakloc

#pragma once

// Multiple-instance head over frozen backbone embeddings: a trainable 3D
// convolution, ROI max pooling per face, an instance scorer, frame max /
// linear-softmax bag pooling, and a late-fusion audio-visual VAD head.

#include "speakloc/boxes.hpp"
#include "speakloc/hica.hpp"
#include "speakloc/nn.hpp"
#include "speakloc/volume.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace speakloc {

// ------------------------------------------------------------- bag pooling

struct BagPosterior {
  double value = 0.0;
  bool empty = false;  // no instances: value 0, excluded from the MIL loss
};

/// Linear-softmax pooling: m_f = max_i scores[f][i]; value = sum m_f^2 / sum m_f.
/// Frames without instances are skipped.
BagPosterior pool_bag(const std::vector<std::vector<double>>& scores);

/// d value / d m_f for each frame given the frame maxima.
std::vector<double> pool_bag_gradient(const std::vector<double>& frame_max);

// ---------------------------------------------------------------- ROI pool

/// ROI max pooling on one embedding frame. The box is rasterised on the
/// embedding grid (rounded outward, clipped, at least one cell) and split
/// into pool x pool bins; each bin takes the channel-wise max. Output is
/// pool*pool*channels values, bin-major.
struct RoiPoolResult {
  Vec<double> features;
  std::vector<Index> argmax_rows;  // per output value, row in the volume
};
template <typename Scalar>
RoiPoolResult roi_pool(const Volume<Scalar>& embedding, Index frame, const FaceBox& box,
                       Index pool);

/// Nearest embedding frame for an input frame (by frame centres).
Index nearest_embed_frame(Index input_frame, double input_fps, double embed_fps,
                          Index embed_frames);

// ------------------------------------------------------------------ model

struct MilConfig {
  Index channels = 8;       // embedding channels M
  Index pool = 3;
  std::vector<Index> hidden{256, 64};
  Index audio_dim = 8;
  Index audio_hidden = 16;
  Index fusion_hidden = 32;

  void validate() const;
};

void to_json(nlohmann::json& j, const MilConfig& c);
void from_json(const nlohmann::json& j, MilConfig& c);

enum class VadInputs { kFused, kAudioOnly, kVisualOnly };

class MilModel {
 public:
  using scalar_type = float;

  MilModel() = default;
  static MilModel build(const MilConfig& config, std::uint64_t seed);
  const MilConfig& config() const { return config_; }

  /// Fine-tune block applied to a frozen embedding (ReLU output).
  Volume<float> refine(const Volume<float>& embedding, nn::Conv3d<float>::Cache* cache) const;
  /// Instance posteriors for rows of pooled features.
  Vec<double> instance_scores(const Mat<double>& features) const;
  /// VAD posterior per row: audio rows (zeros when missing) and visual
  /// summaries.
  Vec<double> vad_posteriors(const Mat<double>& audio, const Mat<double>& visual,
                             VadInputs inputs) const;

  MilModel zeros_like() const;

  template <typename F>
  void visit(F&& f) {
    finetune.visit(f);
    for (auto& d : scorer) d.visit(f);
    audio_fc.visit(f);
    for (auto& d : fusion) d.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    finetune.visit(f);
    for (const auto& d : scorer) d.visit(f);
    audio_fc.visit(f);
    for (const auto& d : fusion) d.visit(f);
  }

  nn::Conv3d<float> finetune;
  std::vector<nn::Dense<float>> scorer;  // hidden..., 1
  nn::Dense<float> audio_fc;
  std::vector<nn::Dense<float>> fusion;  // fusion_hidden, 1

 private:
  MilConfig config_;
};

// --------------------------------------------------------------- training

/// One clip prepared for the head: its frozen embedding, face boxes (input
/// frame indices), per-segment labels and optional audio embeddings.
struct MilClip {
  std::string clip_id;
  Volume<float> embedding;
  Volume<float> frames;  // only needed for end-to-end training
  std::vector<FaceBox> boxes;
  std::vector<int> pos_labels;  // one per segment
  std::vector<int> vad_labels;  // one per segment
  std::vector<std::optional<Vec<double>>> audio;  // one per segment
};

struct MilGeometry {
  double input_fps = 8.0;
  double embed_fps = 2.0;
  Index segments = 10;
};

struct MilLosses {
  double total = 0.0;
  double mil = 0.0;  // mean over non-empty bags
  double av = 0.0;   // mean over segments
  Index bags = 0;
};

struct MilTrainConfig {
  double alpha = 0.9;
  Index epochs = 12;
  Index batch_size = 8;
  nn::OptimizerConfig optimizer{nn::OptimizerKind::kAdam, 0.001, 0.9, 0.999, 1e-8, 5.0};
  double lr_decay = 0.9;
  std::uint64_t seed = 11;
  Index workers = 1;
  VadInputs vad_inputs = VadInputs::kFused;
  bool end_to_end = false;  // also update the backbone
  std::function<void(Index epoch, const MilLosses&)> on_epoch;
};

struct MilTrainReport {
  std::vector<MilLosses> epochs;  // mean losses per epoch
};

/// Loss of one clip and, when `grad` is set, accumulation of its gradients.
/// `backbone_grad` (end-to-end only) receives d loss / d embedding.
MilLosses mil_clip_loss(const MilModel& model, const MilClip& clip, const MilGeometry& geometry,
                        double alpha, VadInputs inputs, MilModel* grad,
                        Volume<float>* embedding_grad = nullptr);

/// Joint training of the instance scorer and VAD head (convex
/// loss). The backbone stays untouched unless `end_to_end` is set, in which
/// case `backbone` must be non-null and embeddings are recomputed from frames.
MilTrainReport joint_train(MilModel& model, std::vector<MilClip>& clips,
                           const MilGeometry& geometry, const MilTrainConfig& config,
                           HicaModel<float>* backbone = nullptr);

// ---------------------------------------------------------------- scoring

/// Instance posteriors for every box of a clip (box order kept).
std::vector<InstanceScore> score_instances(const MilModel& model, const Volume<float>& embedding,
                                           const std::vector<FaceBox>& boxes,
                                           const MilGeometry& geometry);

struct VadPosterior {
  double value = 0.0;
  bool visual_only = false;  // audio embedding missing
};

/// Per-segment VAD posteriors.
std::vector<VadPosterior> vad_scores(const MilModel& model, const Volume<float>& embedding,
                                     const std::vector<std::optional<Vec<double>>>& audio,
                                     const MilGeometry& geometry,
                                     VadInputs inputs = VadInputs::kFused);

/// Per-segment visual summary: channel-wise spatial max per embedding frame,
/// averaged over the frames of the segment.
Mat<double> visual_summary(const Volume<float>& refined, Index segments);

void save_mil_checkpoint(const std::string& path, const MilModel& model,
                         const MilGeometry& geometry);
MilModel load_mil_checkpoint(const std::string& path, MilGeometry* geometry = nullptr);

}  // namespace speakloc

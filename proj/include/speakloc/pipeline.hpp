#pragma once

// Glue shared by the command line tool and the acceptance runner: dataset
// loading, embedding extraction and the scoring passes.

#include "speakloc/camloc.hpp"
#include "speakloc/formats.hpp"
#include "speakloc/hica.hpp"
#include "speakloc/labelgen.hpp"
#include "speakloc/milhead.hpp"
#include "speakloc/postproc.hpp"
#include "speakloc/synthbench.hpp"

#include <optional>
#include <string>
#include <vector>

namespace speakloc {

enum class Split { kTrain, kTest, kAll };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// Everything known about one clip.
struct ClipRecord {
  std::string id;
  bool train = true;
  Volume<float> frames;
  double fps = 0.0;
  WeakLabelSequence pos;
  WeakLabelSequence vad;
  std::vector<FaceBox> faces;
  std::vector<FaceBox> objects;
  std::vector<std::optional<Vec<double>>> audio;  // per segment
};

struct Corpus {
  std::vector<ClipRecord> clips;
  std::vector<VadMaskEntry> vad_mask;  // frame-level ground truth, may be empty

  std::vector<const ClipRecord*> select(Split split) const;
};

/// Reads a dataset directory (dataset.json index plus the shared box, audio
/// and mask tables).
Corpus load_corpus(const std::string& dir, Index workers = 1);
Corpus corpus_from(const SynthDataset& data);

std::vector<HicaSample> hica_samples(const std::vector<const ClipRecord*>& clips);

/// Geometry of the MIL head for a backbone configuration.
MilGeometry mil_geometry(const ModelConfig& config);

/// Frozen embeddings and labels of each clip.
std::vector<MilClip> mil_clips(const HicaModel<float>& backbone,
                               const std::vector<const ClipRecord*>& clips, Index workers = 1,
                               bool keep_frames = false);

/// CAM-assisted instance scores for `boxes` of one clip.
std::vector<InstanceScore> cam_scores(const HicaModel<float>& backbone, const ClipRecord& clip,
                                      const std::vector<FaceBox>& boxes, const LayerTag& tag);

inline constexpr double kDefaultIouThreshold = 0.3;

/// Scores over many clips in clip order; boxes are taken from `faces` (and
/// IOU-filtered `objects` when requested). Works per clip on `workers`
/// threads.
std::vector<InstanceScore> score_cam(const HicaModel<float>& backbone,
                                     const std::vector<const ClipRecord*>& clips,
                                     const LayerTag& tag, bool with_objects = false,
                                     double iou_threshold = kDefaultIouThreshold,
                                     Index workers = 1);
std::vector<InstanceScore> score_mil(const HicaModel<float>& backbone, const MilModel& head,
                                     const std::vector<const ClipRecord*>& clips,
                                     bool with_objects = false,
                                     double iou_threshold = kDefaultIouThreshold,
                                     Index workers = 1);

/// Boxes of a clip to score: faces, then objects kept by the IOU filter.
std::vector<FaceBox> boxes_to_score(const ClipRecord& clip, bool with_objects,
                                    double iou_threshold);

struct SegmentVad {
  std::string clip_id;
  Index segment = 0;
  double posterior = 0.0;
  int label = 0;
  bool visual_only = false;
};

std::vector<SegmentVad> score_vad(const HicaModel<float>& backbone, const MilModel& head,
                                  const std::vector<const ClipRecord*>& clips, VadInputs inputs,
                                  Index workers = 1);

/// Frame VAD from segment posteriors (posterior >= threshold means voice).
FrameVad system_frame_vad(const std::vector<SegmentVad>& segments,
                          const std::vector<const ClipRecord*>& clips, double threshold = 0.5);
/// Frame VAD from ground truth: the frame mask when present, otherwise the
/// VAD segment labels.
FrameVad oracle_frame_vad(const Corpus& corpus, const std::vector<const ClipRecord*>& clips);

}  // namespace speakloc

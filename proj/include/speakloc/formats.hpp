#pragma once

// Line-delimited text formats and binary containers shared by the tools.
// Text records are tab separated; blank lines and lines starting with '#'
// are ignored on input.

#include "speakloc/boxes.hpp"
#include "speakloc/errors.hpp"
#include "speakloc/labelgen.hpp"
#include "speakloc/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace speakloc {

// ---- face boxes: clip_id frame_index x1 y1 x2 y2 track_id [gt_label]
std::vector<FaceBox> read_boxes(std::istream& in);
std::vector<FaceBox> read_boxes_file(const std::string& path);
void write_boxes(std::ostream& out, const std::vector<FaceBox>& boxes);
void write_boxes_file(const std::string& path, const std::vector<FaceBox>& boxes);

// ---- instance scores: the box record followed by a score column
std::vector<InstanceScore> read_scores(std::istream& in);
std::vector<InstanceScore> read_scores_file(const std::string& path);
void write_scores(std::ostream& out, const std::vector<InstanceScore>& scores);
void write_scores_file(const std::string& path, const std::vector<InstanceScore>& scores);

// ---- alignment: word start_s end_s confidence, optional header line
std::vector<AlignedWord> read_alignment(std::istream& in);
std::vector<AlignedWord> read_alignment_file(const std::string& path);

// ---- weak labels: segment_index start_s label, plus a JSON sidecar
//      (<path>.meta.json) holding t, kind and threshold.
void write_labels(std::ostream& out, const WeakLabelSequence& labels);
nlohmann::json label_metadata(const WeakLabelSequence& labels);
void write_labels_file(const std::string& path, const WeakLabelSequence& labels);
/// Reads a label file; metadata comes from the sidecar when present.
WeakLabelSequence read_labels_file(const std::string& path);
std::string label_sidecar_path(const std::string& path);

// ---- audio embeddings: segment_id followed by D floats
using AudioEmbeddingTable = std::map<std::string, Vec<double>>;
AudioEmbeddingTable read_audio_embeddings(std::istream& in);
AudioEmbeddingTable read_audio_embeddings_file(const std::string& path);
void write_audio_embeddings_file(const std::string& path, const AudioEmbeddingTable& table);
std::string segment_id(const std::string& clip_id, Index segment);

// ---- VAD mask: [clip_id] frame_index {0,1}; a two-column record applies to
//      every clip.
struct VadMaskEntry {
  std::string clip_id;  // empty = any clip
  Index frame_index = 0;
  bool voice = false;
};
std::vector<VadMaskEntry> read_vad_mask(std::istream& in);
std::vector<VadMaskEntry> read_vad_mask_file(const std::string& path);
void write_vad_mask_file(const std::string& path, const std::vector<VadMaskEntry>& entries);

// ---- segment posteriors: segment_id posterior label
struct SegmentScore {
  std::string segment_id;
  double posterior = 0.0;
  int label = 0;
};
std::vector<SegmentScore> read_segment_scores_file(const std::string& path);
void write_segment_scores_file(const std::string& path, const std::vector<SegmentScore>& scores);

// ---- frames: one JSON header line, then frames*height*width*channels
//      bytes (u8, value / 255).
struct FrameFileHeader {
  Index frames = 0;
  Index height = 0;
  Index width = 0;
  Index channels = 1;
  double fps = 0.0;
};
void write_frames_file(const std::string& path, const FrameFileHeader& header,
                       const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_frames_file(const std::string& path, FrameFileHeader* header);
template <typename Scalar>
Volume<Scalar> frames_to_volume(const std::vector<std::uint8_t>& pixels, const FrameFileHeader& h);

// ---- checkpoints: JSON header line (format, version, kind, tensor shapes,
//      model metadata) followed by little-endian float32 tensor data.
struct Checkpoint {
  nlohmann::json header;
  std::vector<Mat<float>> tensors;
};
void write_checkpoint(const std::string& path, const std::string& kind, nlohmann::json header,
                      const std::vector<const Mat<float>*>& tensors);
Checkpoint read_checkpoint(const std::string& path, const std::string& expected_kind);

/// Copies checkpoint tensors into a model's parameters, checking shapes.
template <typename Model>
void assign_parameters(Model& model, const std::vector<Mat<float>>& tensors) {
  std::size_t i = 0;
  bool ok = true;
  model.visit([&](Mat<float>& m) {
    if (i >= tensors.size() || tensors[i].rows() != m.rows() || tensors[i].cols() != m.cols()) {
      ok = false;
    } else {
      m = tensors[i];
    }
    ++i;
  });
  if (!ok || i != tensors.size()) {
    throw DataError("checkpoint tensors do not match the model structure");
  }
}

template <typename Model>
std::vector<const Mat<float>*> parameter_pointers(const Model& model) {
  std::vector<const Mat<float>*> out;
  model.visit([&](const Mat<float>& m) { out.push_back(&m); });
  return out;
}

// ---- helpers
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::vector<std::string> split_tabs(const std::string& line);

}  // namespace speakloc

#pragma once

// Posterior refinement with the one-speaker-per-frame constraint and an
// audio voice-activity constraint.

#include "speakloc/boxes.hpp"
#include "speakloc/formats.hpp"
#include "speakloc/labelgen.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace speakloc {

enum class VadSource { kSystem, kOracle };

std::string to_string(VadSource source);
VadSource parse_vad_source(const std::string& text);

struct PostprocConfig {
  double beta = 10.0;   // divisor for non-maximal faces in a frame
  double gamma = 10.0;  // divisor for faces in frames without voice
  VadSource vad_source = VadSource::kSystem;

  /// Throws ConfigError unless beta > 1 and gamma > 1.
  void validate() const;
};

/// Scores of one frame: every entry except the first maximum is divided by
/// beta.
std::vector<double> video_pp(const std::vector<double>& frame_scores, double beta);

/// Scores of one frame: divided by gamma unless the frame has voice.
std::vector<double> audio_pp(const std::vector<double>& frame_scores, bool voice, double gamma);

/// Frame-level voice activity lookup, per clip.
class FrameVad {
 public:
  void set(const std::string& clip_id, Index frame, bool voice);
  /// Applies to clips without their own entries.
  void set_default(Index frame, bool voice);
  /// Broadcasts segment labels to frames: frame f lies in segment
  /// floor((f + 0.5) / fps / t).
  void set_segments(const std::string& clip_id, const WeakLabelSequence& labels, double fps,
                    Index frames);
  std::optional<bool> find(const std::string& clip_id, Index frame) const;

  static FrameVad from_mask(const std::vector<VadMaskEntry>& entries);

 private:
  std::map<std::pair<std::string, Index>, bool> frames_;
  std::map<Index, bool> default_;
};

/// Applies video_pp to every (clip, frame) group; input order is kept and
/// ties inside a frame go to the earliest record.
std::vector<InstanceScore> apply_video_pp(const std::vector<InstanceScore>& scores, double beta);

/// Applies audio_pp to every record. Throws ArgumentError when a frame has no
/// VAD entry.
std::vector<InstanceScore> apply_audio_pp(const std::vector<InstanceScore>& scores,
                                          const FrameVad& vad, double gamma);

/// Video then audio refinement.
std::vector<InstanceScore> postprocess(const std::vector<InstanceScore>& scores,
                                       const FrameVad& vad, const PostprocConfig& config);

}  // namespace speakloc

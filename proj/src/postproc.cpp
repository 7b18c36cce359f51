#include "speakloc/postproc.hpp"

#include "speakloc/errors.hpp"

#include <cmath>

namespace speakloc {

std::string to_string(VadSource source) {
  return source == VadSource::kSystem ? "system" : "oracle";
}

VadSource parse_vad_source(const std::string& text) {
  if (text == "system") return VadSource::kSystem;
  if (text == "oracle") return VadSource::kOracle;
  throw ConfigError("unknown VAD source '" + text + "' (expected system or oracle)");
}

void PostprocConfig::validate() const {
  if (!(beta > 1.0)) throw ConfigError("beta must be greater than 1");
  if (!(gamma > 1.0)) throw ConfigError("gamma must be greater than 1");
}

std::vector<double> video_pp(const std::vector<double>& frame_scores, double beta) {
  std::vector<double> out = frame_scores;
  if (out.size() < 2) return out;
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i] > out[best]) best = i;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i != best) out[i] /= beta;
  }
  return out;
}

std::vector<double> audio_pp(const std::vector<double>& frame_scores, bool voice, double gamma) {
  std::vector<double> out = frame_scores;
  if (!voice) {
    for (double& s : out) s /= gamma;
  }
  return out;
}

void FrameVad::set(const std::string& clip_id, Index frame, bool voice) {
  frames_[{clip_id, frame}] = voice;
}

void FrameVad::set_default(Index frame, bool voice) { default_[frame] = voice; }

void FrameVad::set_segments(const std::string& clip_id, const WeakLabelSequence& labels,
                            double fps, Index frames) {
  for (Index f = 0; f < frames; ++f) {
    const double time = (static_cast<double>(f) + 0.5) / fps;
    const auto s = static_cast<std::size_t>(std::floor(time / labels.segment_len_s));
    if (s >= labels.labels.size()) {
      throw ArgumentError("VAD labels of " + clip_id + " do not cover frame " + std::to_string(f));
    }
    set(clip_id, f, labels.labels[s] == 1);
  }
}

std::optional<bool> FrameVad::find(const std::string& clip_id, Index frame) const {
  if (auto it = frames_.find({clip_id, frame}); it != frames_.end()) return it->second;
  if (auto it = default_.find(frame); it != default_.end()) return it->second;
  return std::nullopt;
}

FrameVad FrameVad::from_mask(const std::vector<VadMaskEntry>& entries) {
  FrameVad vad;
  for (const auto& e : entries) {
    if (e.clip_id.empty()) {
      vad.set_default(e.frame_index, e.voice);
    } else {
      vad.set(e.clip_id, e.frame_index, e.voice);
    }
  }
  return vad;
}

std::vector<InstanceScore> apply_video_pp(const std::vector<InstanceScore>& scores, double beta) {
  std::map<std::pair<std::string, Index>, std::vector<std::size_t>> frames;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    frames[{scores[i].box.clip_id, scores[i].box.frame_index}].push_back(i);
  }
  std::vector<InstanceScore> out = scores;
  for (const auto& [key, idx] : frames) {
    std::vector<double> s;
    for (std::size_t i : idx) s.push_back(scores[i].score);
    const std::vector<double> adjusted = video_pp(s, beta);
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]].score = adjusted[j];
  }
  return out;
}

std::vector<InstanceScore> apply_audio_pp(const std::vector<InstanceScore>& scores,
                                          const FrameVad& vad, double gamma) {
  std::vector<InstanceScore> out = scores;
  for (auto& s : out) {
    const auto voice = vad.find(s.box.clip_id, s.box.frame_index);
    if (!voice) {
      throw ArgumentError("no VAD entry for " + s.box.clip_id + " frame " +
                          std::to_string(s.box.frame_index));
    }
    if (!*voice) s.score /= gamma;
  }
  return out;
}

std::vector<InstanceScore> postprocess(const std::vector<InstanceScore>& scores,
                                       const FrameVad& vad, const PostprocConfig& config) {
  config.validate();
  return apply_audio_pp(apply_video_pp(scores, config.beta), vad, config.gamma);
}

}  // namespace speakloc

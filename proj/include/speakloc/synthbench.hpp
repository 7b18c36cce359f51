#pragma once

// Deterministic synthetic audio-visual world with instance-level ground
// truth. Faces are drifting ellipses; the speaking face's mouth region
// flickers while it speaks, and a per-segment audio embedding carries a noisy
// copy of the speech fraction.

#include "speakloc/boxes.hpp"
#include "speakloc/labelgen.hpp"
#include "speakloc/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace speakloc {

struct ScheduledSpeech {
  Index entity = 0;
  Interval interval;
};

struct SynthConfig {
  std::uint64_t seed = 2024;
  Index n_clips = 500;
  Index train_clips = 400;  // the rest are held out
  double clip_len_s = 10.0;
  double segment_len_s = 1.0;
  Index frame_height = 24;
  Index frame_width = 48;
  double fps = 8.0;
  Index min_entities = 1;
  Index max_entities = 4;
  double drift = 0.02;    // max |velocity|, frame fractions per second
  double jitter = 0.004;  // per-frame positional jitter, frame fractions
  double mouth_flicker = 0.4;
  double sensor_noise = 0.04;
  double audio_noise_level = 0.3;
  Index audio_dim = 8;
  // Expected fraction of the clip each entity speaks, whatever the entity
  // count. Keeps a face's prior independent of how crowded its clip is.
  double speaking_share = 0.15;
  double speech_min_s = 0.5;
  double speech_max_s = 3.0;
  Index objects_per_frame = 2;  // extra non-face proposals
  /// Explicit schedule used for every clip instead of the random one.
  std::optional<std::vector<ScheduledSpeech>> schedule;
  std::optional<Index> entities;  // fixed entity count

  Index frames() const;
  Index segments() const;
  /// Throws ConfigError on invalid values or an overlapping schedule.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthEntity {
  std::vector<FaceBox> boxes;   // one per frame
  std::vector<bool> speaking;   // one per frame
};

struct SynthClip {
  std::string id;
  Index index = 0;
  Volume<float> frames;  // quantised to u8 levels
  std::vector<SynthEntity> entities;
  std::vector<FaceBox> objects;  // non-face proposals, gt = not speaking
  std::vector<Interval> speech;  // union over entities
  std::vector<AlignedWord> alignment;
  WeakLabelSequence pos;
  WeakLabelSequence vad;
  std::vector<bool> frame_voice;              // oracle VAD per frame
  std::vector<double> speech_fraction;        // per segment
  std::vector<Vec<double>> audio;             // per segment

  /// All face boxes, frame-major, with gt_speaking set.
  std::vector<FaceBox> face_boxes() const;
  std::vector<std::uint8_t> pixels() const;
};

struct SynthDataset {
  SynthConfig config;
  std::vector<SynthClip> clips;
  bool is_train(Index clip_index) const { return clip_index < config.train_clips; }
};

/// Bit-reproducible: each clip draws from its own generator seeded by
/// (seed, clip_index). `workers` only affects wall time.
SynthDataset generate(const SynthConfig& config, Index workers = 1);
SynthClip generate_clip(const SynthConfig& config, Index clip_index);

/// Audio embedding for one segment: speech_fraction * u + noise * N(0, 1),
/// where u is a fixed unit direction drawn from the dataset seed.
Vec<double> audio_direction(const SynthConfig& config);
std::vector<Vec<double>> synth_audio(const SynthConfig& config, const SynthClip& clip,
                                     double noise_level, std::uint64_t stream);

/// Writes the dataset in the shared file formats under `dir`:
///   dataset.json, frames/<id>.frames, labels/<id>.{pos,vad}.tsv,
///   alignment/<id>.tsv, boxes.tsv, objects.tsv, audio.tsv, vad_mask.tsv
void write_dataset(const std::string& dir, const SynthDataset& data);

/// Clip id of clip `index`, zero padded.
std::string clip_id(Index index);

}  // namespace speakloc

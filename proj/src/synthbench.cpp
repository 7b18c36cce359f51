#include "speakloc/synthbench.hpp"

#include "speakloc/errors.hpp"
#include "speakloc/formats.hpp"
#include "speakloc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

namespace speakloc {

Index SynthConfig::frames() const {
  return static_cast<Index>(std::llround(clip_len_s * fps));
}

Index SynthConfig::segments() const {
  return static_cast<Index>(std::ceil(clip_len_s / segment_len_s - 1e-9));
}

void SynthConfig::validate() const {
  if (n_clips < 1) throw ConfigError("synth: n_clips must be at least 1");
  if (train_clips < 0 || train_clips > n_clips) {
    throw ConfigError("synth: train_clips must lie in [0, n_clips]");
  }
  if (!(clip_len_s > 0) || !(segment_len_s > 0) || !(fps > 0)) {
    throw ConfigError("synth: clip length, segment length and fps must be positive");
  }
  if (std::abs(clip_len_s * fps - static_cast<double>(frames())) > 1e-6) {
    throw ConfigError("synth: clip_len_s * fps must be a whole number of frames");
  }
  if (frame_height < 8 || frame_width < 8) throw ConfigError("synth: frames must be at least 8x8");
  if (min_entities < 1 || max_entities > 4 || min_entities > max_entities) {
    throw ConfigError("synth: entity counts must satisfy 1 <= min <= max <= 4");
  }
  if (entities && (*entities < 1 || *entities > 4)) {
    throw ConfigError("synth: entities must be between 1 and 4");
  }
  if (mouth_flicker < 0 || sensor_noise < 0 || audio_noise_level < 0 || drift < 0 || jitter < 0) {
    throw ConfigError("synth: amplitudes and noise levels must be non-negative");
  }
  if (audio_dim < 1) throw ConfigError("synth: audio_dim must be at least 1");
  if (!(speaking_share > 0.0) ||
      !(speaking_share * static_cast<double>(entities.value_or(max_entities)) < 1.0)) {
    throw ConfigError("synth: speaking_share times the entity count must lie in (0, 1)");
  }
  if (!(speech_min_s > 0) || speech_max_s < speech_min_s) {
    throw ConfigError("synth: speech duration range is invalid");
  }
  if (objects_per_frame < 0) throw ConfigError("synth: objects_per_frame must be non-negative");
  if (schedule) {
    const Index n = entities.value_or(min_entities);
    std::vector<Interval> spans;
    for (const auto& s : *schedule) {
      if (s.entity < 0 || s.entity >= n) {
        throw ConfigError("synth: schedule names entity " + std::to_string(s.entity) +
                          " but clips have " + std::to_string(n));
      }
      if (!(s.interval.start_s < s.interval.end_s) || s.interval.start_s < 0) {
        throw ConfigError("synth: schedule intervals must have 0 <= start < end");
      }
      spans.push_back(s.interval);
    }
    std::sort(spans.begin(), spans.end(),
              [](const Interval& a, const Interval& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].start_s < spans[i - 1].end_s) {
        throw ConfigError("synth: infeasible schedule, speech intervals overlap at " +
                          std::to_string(spans[i].start_s) + " s (at most one speaker at a time)");
      }
    }
  }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"seed", c.seed},
       {"n_clips", c.n_clips},
       {"train_clips", c.train_clips},
       {"clip_len_s", c.clip_len_s},
       {"segment_len_s", c.segment_len_s},
       {"frame_hw", {c.frame_height, c.frame_width}},
       {"fps", c.fps},
       {"min_entities", c.min_entities},
       {"max_entities", c.max_entities},
       {"drift", c.drift},
       {"jitter", c.jitter},
       {"mouth_flicker", c.mouth_flicker},
       {"sensor_noise", c.sensor_noise},
       {"audio_noise_level", c.audio_noise_level},
       {"audio_dim", c.audio_dim},
       {"speaking_share", c.speaking_share},
       {"speech_s", {c.speech_min_s, c.speech_max_s}},
       {"objects_per_frame", c.objects_per_frame}};
  if (c.entities) j["entities"] = *c.entities;
  if (c.schedule) {
    auto s = nlohmann::json::array();
    for (const auto& e : *c.schedule) {
      s.push_back({{"entity", e.entity}, {"start_s", e.interval.start_s}, {"end_s", e.interval.end_s}});
    }
    j["schedule"] = s;
  }
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_clips = j.at("n_clips").get<Index>();
  c.train_clips = j.at("train_clips").get<Index>();
  c.clip_len_s = j.at("clip_len_s").get<double>();
  c.segment_len_s = j.at("segment_len_s").get<double>();
  c.frame_height = j.at("frame_hw").at(0).get<Index>();
  c.frame_width = j.at("frame_hw").at(1).get<Index>();
  c.fps = j.at("fps").get<double>();
  c.min_entities = j.at("min_entities").get<Index>();
  c.max_entities = j.at("max_entities").get<Index>();
  c.drift = j.at("drift").get<double>();
  c.jitter = j.at("jitter").get<double>();
  c.mouth_flicker = j.at("mouth_flicker").get<double>();
  c.sensor_noise = j.at("sensor_noise").get<double>();
  c.audio_noise_level = j.at("audio_noise_level").get<double>();
  c.audio_dim = j.at("audio_dim").get<Index>();
  c.speaking_share = j.at("speaking_share").get<double>();
  c.speech_min_s = j.at("speech_s").at(0).get<double>();
  c.speech_max_s = j.at("speech_s").at(1).get<double>();
  c.objects_per_frame = j.at("objects_per_frame").get<Index>();
  c.entities.reset();
  if (j.contains("entities")) c.entities = j.at("entities").get<Index>();
  c.schedule.reset();
  if (j.contains("schedule")) {
    std::vector<ScheduledSpeech> s;
    for (const auto& e : j.at("schedule")) {
      s.push_back({e.at("entity").get<Index>(),
                   {e.at("start_s").get<double>(), e.at("end_s").get<double>()}});
    }
    c.schedule = std::move(s);
  }
}

std::string clip_id(Index index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip%04ld", static_cast<long>(index));
  return buf;
}

std::vector<FaceBox> SynthClip::face_boxes() const {
  std::vector<FaceBox> out;
  if (entities.empty()) return out;
  const std::size_t n_frames = entities.front().boxes.size();
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (const auto& e : entities) out.push_back(e.boxes[f]);
  }
  return out;
}

std::vector<std::uint8_t> SynthClip::pixels() const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(frames.values.size()));
  for (Index i = 0; i < frames.values.size(); ++i) {
    out[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::lround(frames.values.data()[i] * 255.0f));
  }
  return out;
}

namespace {

std::mt19937_64 clip_rng(std::uint64_t seed, Index clip_index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(clip_index), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

struct FaceLayout {
  double cx, cy;      // centre at t = 0, pixels
  double vx, vy;      // pixels per second
  double half_w, half_h;
  double lo_x, hi_x;  // allowed centre range (slot)
  float skin;
};

std::vector<ScheduledSpeech> random_schedule(const SynthConfig& c, Index n_entities,
                                             std::mt19937_64& rng) {
  // Alternating renewal process. Mean silence is chosen so that all entities
  // together speak n * share of the time, and the process starts well before
  // t = 0 so the clip opening carries no timing cue.
  const double mean_speech = 0.5 * (c.speech_min_s + c.speech_max_s);
  const double share = c.speaking_share * static_cast<double>(n_entities);
  const double mean_silence = mean_speech * (1.0 / share - 1.0);
  std::uniform_real_distribution<double> silence(0.5 * mean_silence, 1.5 * mean_silence);
  std::uniform_real_distribution<double> speech(c.speech_min_s, c.speech_max_s);
  std::uniform_int_distribution<Index> who(0, n_entities - 1);
  std::vector<ScheduledSpeech> out;
  double t = -3.0 * (mean_speech + mean_silence) + silence(rng);
  while (t < c.clip_len_s) {
    const double end = t + speech(rng);
    const Index speaker = who(rng);
    if (end > 0.0) out.push_back({speaker, {std::max(0.0, t), std::min(c.clip_len_s, end)}});
    t = end + silence(rng);
  }
  return out;
}

}  // namespace

Vec<double> audio_direction(const SynthConfig& config) {
  auto rng = clip_rng(config.seed, -1, 0xA0D1);
  std::normal_distribution<double> normal;
  Vec<double> u(config.audio_dim);
  for (Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
  return u / u.norm();
}

std::vector<Vec<double>> synth_audio(const SynthConfig& config, const SynthClip& clip,
                                     double noise_level, std::uint64_t stream) {
  auto rng = clip_rng(config.seed, clip.index, 0xA0D10000ULL + stream);
  std::normal_distribution<double> normal;
  const Vec<double> u = audio_direction(config);
  std::vector<Vec<double>> out;
  for (double frac : clip.speech_fraction) {
    Vec<double> v = frac * u;
    for (Index i = 0; i < v.size(); ++i) v(i) += noise_level * normal(rng);
    out.push_back(std::move(v));
  }
  return out;
}

SynthClip generate_clip(const SynthConfig& c, Index clip_index) {
  c.validate();
  auto rng = clip_rng(c.seed, clip_index, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SynthClip clip;
  clip.index = clip_index;
  clip.id = clip_id(clip_index);
  const Index H = c.frame_height;
  const Index W = c.frame_width;
  const Index T = c.frames();
  const double Hd = static_cast<double>(H);
  const double Wd = static_cast<double>(W);

  Index n_entities = c.entities.value_or(
      std::uniform_int_distribution<Index>(c.min_entities, c.max_entities)(rng));

  // Static background: a tilted gradient plus fixed texture.
  Mat<float> background(H, W);
  {
    const double base = uniform(0.15, 0.4);
    const double gx = uniform(-0.15, 0.15);
    const double gy = uniform(-0.15, 0.15);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        background(y, x) = static_cast<float>(base + gx * (x / Wd - 0.5) + gy * (y / Hd - 0.5) +
                                              0.04 * normal(rng));
      }
    }
  }

  // Faces in horizontal slots.
  std::vector<FaceLayout> faces;
  const double slot_w = Wd / static_cast<double>(n_entities);
  for (Index e = 0; e < n_entities; ++e) {
    FaceLayout f;
    f.half_h = uniform(0.19, 0.27) * Hd;
    f.half_w = std::min(f.half_h * uniform(0.7, 0.85), 0.45 * slot_w);
    f.lo_x = e * slot_w + f.half_w;
    f.hi_x = (e + 1) * slot_w - f.half_w;
    f.cx = uniform(f.lo_x, std::max(f.lo_x, f.hi_x));
    f.cy = uniform(0.4, 0.6) * Hd;
    f.vx = uniform(-c.drift, c.drift) * Wd;
    f.vy = uniform(-c.drift, c.drift) * 0.5 * Hd;
    f.skin = static_cast<float>(uniform(0.6, 0.85));
    faces.push_back(f);
  }

  // Speech schedule.
  std::vector<ScheduledSpeech> schedule =
      c.schedule ? *c.schedule : random_schedule(c, n_entities, rng);
  for (const auto& s : schedule) {
    if (s.entity >= n_entities) throw ConfigError("synth: schedule entity out of range");
    const Interval iv{std::max(0.0, s.interval.start_s), std::min(c.clip_len_s, s.interval.end_s)};
    if (iv.end_s > iv.start_s) clip.speech.push_back(iv);
  }
  // Slivers too short to make their segment PoS-positive are dropped, so
  // every speaking frame lies in a positive segment.
  {
    const auto pos = make_labels(make_interval_set(clip.speech, c.clip_len_s, 0.0),
                                 c.segment_len_s, LabelKind::kPoS);
    std::vector<ScheduledSpeech> kept;
    for (const auto& s : schedule) {
      for (std::size_t i = 0; i < pos.labels.size(); ++i) {
        if (pos.labels[i] == 0) continue;
        const double a = std::max(s.interval.start_s, static_cast<double>(i) * c.segment_len_s);
        const double b = std::min(s.interval.end_s, static_cast<double>(i + 1) * c.segment_len_s);
        if (b > a) kept.push_back({s.entity, {a, b}});
      }
    }
    schedule = std::move(kept);
    clip.speech.clear();
    for (const auto& s : schedule) clip.speech.push_back(s.interval);
  }
  auto speaker_at = [&](double time) -> Index {
    for (const auto& s : schedule) {
      if (time >= s.interval.start_s && time < s.interval.end_s) return s.entity;
    }
    return -1;
  };

  clip.entities.resize(static_cast<std::size_t>(n_entities));
  clip.frames = Volume<float>(Extent{T, H, W}, 1);
  clip.frame_voice.assign(static_cast<std::size_t>(T), false);

  for (Index t = 0; t < T; ++t) {
    const double time = (static_cast<double>(t) + 0.5) / c.fps;
    const Index speaker = speaker_at(time);
    clip.frame_voice[static_cast<std::size_t>(t)] = speaker >= 0;
    Mat<float> img = background;
    const float phase = (t % 2 == 0) ? 1.0f : -1.0f;

    for (Index e = 0; e < n_entities; ++e) {
      const FaceLayout& f = faces[static_cast<std::size_t>(e)];
      const double sec = static_cast<double>(t) / c.fps;
      const double cx = std::clamp(f.cx + f.vx * sec + c.jitter * Wd * normal(rng), f.lo_x,
                                   std::max(f.lo_x, f.hi_x));
      const double cy = std::clamp(f.cy + f.vy * sec + c.jitter * Hd * normal(rng),
                                   f.half_h, Hd - f.half_h);
      const bool speaking = speaker == e;

      const double mouth_y0 = cy;
      const double mouth_y1 = cy + f.half_h;
      const double mouth_hw = f.half_w;
      const double eye_y = cy - 0.3 * f.half_h;
      for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
          const double px = x + 0.5;
          const double py = y + 0.5;
          const double dx = (px - cx) / f.half_w;
          const double dy = (py - cy) / f.half_h;
          if (dx * dx + dy * dy > 1.0) continue;
          float v = f.skin;
          if (std::abs(py - eye_y) < 0.12 * f.half_h + 0.5 &&
              std::abs(std::abs(px - cx) - 0.45 * f.half_w) < 0.5) {
            v -= 0.35f;
          }
          if (py >= mouth_y0 && py < mouth_y1 && std::abs(px - cx) < mouth_hw) {
            v -= 0.3f;
            if (speaking) v += phase * static_cast<float>(c.mouth_flicker);
          }
          img(y, x) = v;
        }
      }

      FaceBox box;
      box.clip_id = clip.id;
      box.frame_index = t;
      box.x1 = std::clamp((cx - f.half_w) / Wd, 0.0, 1.0);
      box.x2 = std::clamp((cx + f.half_w) / Wd, 0.0, 1.0);
      box.y1 = std::clamp((cy - f.half_h) / Hd, 0.0, 1.0);
      box.y2 = std::clamp((cy + f.half_h) / Hd, 0.0, 1.0);
      box.track_id = "face" + std::to_string(e);
      box.gt_speaking = speaking;
      auto& ent = clip.entities[static_cast<std::size_t>(e)];
      ent.boxes.push_back(box);
      ent.speaking.push_back(speaking);
    }

    for (Index o = 0; o < c.objects_per_frame; ++o) {
      FaceBox box;
      box.clip_id = clip.id;
      box.frame_index = t;
      box.track_id = "obj" + std::to_string(o);
      box.gt_speaking = false;
      if (unit(rng) < 0.5) {
        // A proposal near one of the faces.
        const auto& src = clip.entities[static_cast<std::size_t>(
            std::uniform_int_distribution<Index>(0, n_entities - 1)(rng))].boxes.back();
        const double w = src.x2 - src.x1;
        const double h = src.y2 - src.y1;
        const double sx = uniform(-0.6, 0.6) * w;
        const double sy = uniform(-0.6, 0.6) * h;
        const double sc = uniform(0.8, 1.4);
        const double mx = 0.5 * (src.x1 + src.x2) + sx;
        const double my = 0.5 * (src.y1 + src.y2) + sy;
        box.x1 = std::clamp(mx - 0.5 * sc * w, 0.0, 0.98);
        box.y1 = std::clamp(my - 0.5 * sc * h, 0.0, 0.98);
        box.x2 = std::clamp(mx + 0.5 * sc * w, box.x1 + 0.02, 1.0);
        box.y2 = std::clamp(my + 0.5 * sc * h, box.y1 + 0.02, 1.0);
      } else {
        const double w = uniform(0.08, 0.3);
        const double h = uniform(0.15, 0.5);
        box.x1 = uniform(0.0, 1.0 - w);
        box.y1 = uniform(0.0, 1.0 - h);
        box.x2 = box.x1 + w;
        box.y2 = box.y1 + h;
      }
      clip.objects.push_back(box);
    }

    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        const double v = img(y, x) + c.sensor_noise * normal(rng);
        clip.frames.values(clip.frames.row(t, y, x), 0) =
            static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
      }
    }
  }

  // Word-level alignment: confident words tile every speech interval; a few
  // low-confidence insertions land in silence.
  for (const auto& iv : clip.speech) {
    double t0 = iv.start_s;
    while (t0 < iv.end_s - 1e-9) {
      const double t1 = std::min(iv.end_s, t0 + uniform(0.2, 0.5));
      clip.alignment.push_back({"w", t0, t1, uniform(0.85, 1.0)});
      t0 = t1;
    }
  }
  const Index spurious = std::uniform_int_distribution<Index>(0, 2)(rng);
  for (Index i = 0; i < spurious; ++i) {
    const double s = uniform(0.0, c.clip_len_s - 0.3);
    clip.alignment.push_back({"uh", s, s + 0.2, uniform(0.0, 0.5)});
  }
  std::stable_sort(clip.alignment.begin(), clip.alignment.end(),
                   [](const AlignedWord& a, const AlignedWord& b) { return a.start_s < b.start_s; });

  const SpeechIntervalSet speech = make_interval_set(clip.speech, c.clip_len_s, 0.0);
  clip.speech = speech.intervals;
  clip.pos = make_labels(speech, c.segment_len_s, LabelKind::kPoS);
  clip.vad = make_labels(speech, c.segment_len_s, LabelKind::kVad);
  for (Index s = 0; s < c.segments(); ++s) {
    const double a = s * c.segment_len_s;
    clip.speech_fraction.push_back(speech.overlap(a, a + c.segment_len_s) / c.segment_len_s);
  }
  clip.audio = synth_audio(c, clip, c.audio_noise_level, 0);
  return clip;
}

SynthDataset generate(const SynthConfig& config, Index workers) {
  config.validate();
  SynthDataset data;
  data.config = config;
  data.clips.resize(static_cast<std::size_t>(config.n_clips));
  parallel_for(config.n_clips, workers, [&](Index i) {
    data.clips[static_cast<std::size_t>(i)] = generate_clip(config, i);
  });
  return data;
}

void write_dataset(const std::string& dir, const SynthDataset& data) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "frames");
  fs::create_directories(root / "labels");
  fs::create_directories(root / "alignment");

  nlohmann::json index;
  index["format"] = "speakloc-synth";
  index["config"] = data.config;
  index["clips"] = nlohmann::json::array();

  std::vector<FaceBox> boxes;
  std::vector<FaceBox> objects;
  AudioEmbeddingTable audio;
  std::vector<VadMaskEntry> mask;
  for (const auto& clip : data.clips) {
    const std::string frames_rel = "frames/" + clip.id + ".frames";
    const std::string pos_rel = "labels/" + clip.id + ".pos.tsv";
    const std::string vad_rel = "labels/" + clip.id + ".vad.tsv";
    const std::string align_rel = "alignment/" + clip.id + ".tsv";
    index["clips"].push_back({{"id", clip.id},
                              {"split", data.is_train(clip.index) ? "train" : "test"},
                              {"entities", clip.entities.size()},
                              {"frames", frames_rel},
                              {"pos", pos_rel},
                              {"vad", vad_rel},
                              {"alignment", align_rel}});

    FrameFileHeader h{clip.frames.extent.frames, clip.frames.extent.height,
                      clip.frames.extent.width, 1, data.config.fps};
    write_frames_file((root / frames_rel).string(), h, clip.pixels());
    write_labels_file((root / pos_rel).string(), clip.pos);
    write_labels_file((root / vad_rel).string(), clip.vad);

    std::string align = "word\tstart_s\tend_s\tconfidence\n";
    char buf[128];
    for (const auto& w : clip.alignment) {
      std::snprintf(buf, sizeof buf, "%s\t%.3f\t%.3f\t%.3f\n", w.word.c_str(), w.start_s, w.end_s,
                    w.confidence);
      align += buf;
    }
    write_text_file((root / align_rel).string(), align);

    const auto faces = clip.face_boxes();
    boxes.insert(boxes.end(), faces.begin(), faces.end());
    objects.insert(objects.end(), clip.objects.begin(), clip.objects.end());
    for (std::size_t s = 0; s < clip.audio.size(); ++s) {
      audio[segment_id(clip.id, static_cast<Index>(s))] = clip.audio[s];
    }
    for (std::size_t f = 0; f < clip.frame_voice.size(); ++f) {
      mask.push_back({clip.id, static_cast<Index>(f), clip.frame_voice[f]});
    }
  }
  write_boxes_file((root / "boxes.tsv").string(), boxes);
  write_boxes_file((root / "objects.tsv").string(), objects);
  write_audio_embeddings_file((root / "audio.tsv").string(), audio);
  write_vad_mask_file((root / "vad_mask.tsv").string(), mask);
  write_text_file((root / "dataset.json").string(), index.dump(2) + "\n");
}

}  // namespace speakloc

#include "speakloc/pipeline.hpp"

#include "speakloc/errors.hpp"
#include "speakloc/evalkit.hpp"
#include "speakloc/parallel.hpp"

#include <filesystem>
#include <map>

namespace speakloc {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kAll: return "all";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  if (text == "all") return Split::kAll;
  throw ConfigError("unknown split '" + text + "' (expected train, test or all)");
}

std::vector<const ClipRecord*> Corpus::select(Split split) const {
  std::vector<const ClipRecord*> out;
  for (const auto& c : clips) {
    if (split == Split::kAll || (split == Split::kTrain) == c.train) out.push_back(&c);
  }
  return out;
}

namespace {

std::map<std::string, std::vector<FaceBox>> group_by_clip(std::vector<FaceBox> boxes) {
  std::map<std::string, std::vector<FaceBox>> out;
  for (auto& b : boxes) out[b.clip_id].push_back(std::move(b));
  return out;
}

}  // namespace

Corpus load_corpus(const std::string& dir, Index workers) {
  const fs::path root(dir);
  const fs::path index_path = root / "dataset.json";
  if (!fs::exists(index_path)) throw DataError("no dataset.json in " + dir);
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_text_file(index_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(index_path.string() + ": " + e.what());
  }
  if (index.value("format", "") != "speakloc-synth") {
    throw DataError(index_path.string() + ": unknown dataset format");
  }

  auto faces = group_by_clip(read_boxes_file((root / "boxes.tsv").string()));
  std::map<std::string, std::vector<FaceBox>> objects;
  if (fs::exists(root / "objects.tsv")) {
    objects = group_by_clip(read_boxes_file((root / "objects.tsv").string()));
  }
  AudioEmbeddingTable audio;
  if (fs::exists(root / "audio.tsv")) audio = read_audio_embeddings_file((root / "audio.tsv").string());

  Corpus corpus;
  if (fs::exists(root / "vad_mask.tsv")) {
    corpus.vad_mask = read_vad_mask_file((root / "vad_mask.tsv").string());
  }

  const auto& entries = index.at("clips");
  corpus.clips.resize(entries.size());
  parallel_for(static_cast<Index>(entries.size()), workers, [&](Index i) {
    const auto& e = entries[static_cast<std::size_t>(i)];
    ClipRecord& c = corpus.clips[static_cast<std::size_t>(i)];
    c.id = e.at("id").get<std::string>();
    c.train = e.at("split").get<std::string>() == "train";
    FrameFileHeader h;
    const auto pixels = read_frames_file((root / e.at("frames").get<std::string>()).string(), &h);
    c.frames = frames_to_volume<float>(pixels, h);
    c.fps = h.fps;
    c.pos = read_labels_file((root / e.at("pos").get<std::string>()).string());
    c.vad = read_labels_file((root / e.at("vad").get<std::string>()).string());
  });
  for (auto& c : corpus.clips) {
    if (auto it = faces.find(c.id); it != faces.end()) c.faces = std::move(it->second);
    if (auto it = objects.find(c.id); it != objects.end()) c.objects = std::move(it->second);
    for (std::size_t s = 0; s < c.pos.labels.size(); ++s) {
      auto it = audio.find(segment_id(c.id, static_cast<Index>(s)));
      c.audio.push_back(it == audio.end() ? std::nullopt : std::optional<Vec<double>>(it->second));
    }
  }
  return corpus;
}

Corpus corpus_from(const SynthDataset& data) {
  Corpus corpus;
  for (const auto& clip : data.clips) {
    ClipRecord c;
    c.id = clip.id;
    c.train = data.is_train(clip.index);
    c.frames = clip.frames;
    c.fps = data.config.fps;
    c.pos = clip.pos;
    c.vad = clip.vad;
    c.faces = clip.face_boxes();
    c.objects = clip.objects;
    for (const auto& a : clip.audio) c.audio.emplace_back(a);
    corpus.clips.push_back(std::move(c));
    for (std::size_t f = 0; f < clip.frame_voice.size(); ++f) {
      corpus.vad_mask.push_back({clip.id, static_cast<Index>(f), clip.frame_voice[f]});
    }
  }
  return corpus;
}

std::vector<HicaSample> hica_samples(const std::vector<const ClipRecord*>& clips) {
  std::vector<HicaSample> out;
  out.reserve(clips.size());
  for (const ClipRecord* c : clips) {
    HicaSample s;
    s.frames = c->frames;
    s.labels = Eigen::Map<const Eigen::VectorXi>(c->pos.labels.data(),
                                                  static_cast<Index>(c->pos.labels.size()));
    out.push_back(std::move(s));
  }
  return out;
}

MilGeometry mil_geometry(const ModelConfig& config) {
  return {config.input_fps, config.embed_fps, config.segments};
}

std::vector<MilClip> mil_clips(const HicaModel<float>& backbone,
                               const std::vector<const ClipRecord*>& clips, Index workers,
                               bool keep_frames) {
  std::vector<MilClip> out(clips.size());
  parallel_for(static_cast<Index>(clips.size()), workers, [&](Index i) {
    const ClipRecord& c = *clips[static_cast<std::size_t>(i)];
    MilClip& m = out[static_cast<std::size_t>(i)];
    m.clip_id = c.id;
    m.embedding = backbone.forward(c.frames, false).embedding();
    if (keep_frames) m.frames = c.frames;
    m.boxes = c.faces;
    m.pos_labels = c.pos.labels;
    m.vad_labels = c.vad.labels;
    m.audio = c.audio;
  });
  return out;
}

std::vector<InstanceScore> cam_scores(const HicaModel<float>& backbone, const ClipRecord& clip,
                                      const std::vector<FaceBox>& boxes, const LayerTag& tag) {
  const ClassActivationMap cam = compute_cam(backbone, clip.frames, tag, clip.id);
  const NormalizedCam norm = normalize_and_upsample(cam, clip.frames.extent);
  std::vector<InstanceScore> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back(score_face(norm, b));
  return out;
}

std::vector<FaceBox> boxes_to_score(const ClipRecord& clip, bool with_objects,
                                    double iou_threshold) {
  std::vector<FaceBox> boxes = clip.faces;
  if (with_objects) {
    const auto kept = iou_filter(clip.objects, clip.faces, iou_threshold);
    boxes.insert(boxes.end(), kept.begin(), kept.end());
  }
  return boxes;
}

namespace {

std::vector<InstanceScore> flatten(std::vector<std::vector<InstanceScore>>& parts) {
  std::vector<InstanceScore> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

std::vector<InstanceScore> score_cam(const HicaModel<float>& backbone,
                                     const std::vector<const ClipRecord*>& clips,
                                     const LayerTag& tag, bool with_objects, double iou_threshold,
                                     Index workers) {
  std::vector<std::vector<InstanceScore>> parts(clips.size());
  parallel_for(static_cast<Index>(clips.size()), workers, [&](Index i) {
    const ClipRecord& c = *clips[static_cast<std::size_t>(i)];
    parts[static_cast<std::size_t>(i)] =
        cam_scores(backbone, c, boxes_to_score(c, with_objects, iou_threshold), tag);
  });
  return flatten(parts);
}

std::vector<InstanceScore> score_mil(const HicaModel<float>& backbone, const MilModel& head,
                                     const std::vector<const ClipRecord*>& clips,
                                     bool with_objects, double iou_threshold,
                                     Index workers) {
  const MilGeometry geometry = mil_geometry(backbone.config());
  std::vector<std::vector<InstanceScore>> parts(clips.size());
  parallel_for(static_cast<Index>(clips.size()), workers, [&](Index i) {
    const ClipRecord& c = *clips[static_cast<std::size_t>(i)];
    const Volume<float> embedding = backbone.forward(c.frames, false).embedding();
    parts[static_cast<std::size_t>(i)] =
        score_instances(head, embedding, boxes_to_score(c, with_objects, iou_threshold), geometry);
  });
  return flatten(parts);
}

std::vector<SegmentVad> score_vad(const HicaModel<float>& backbone, const MilModel& head,
                                  const std::vector<const ClipRecord*>& clips, VadInputs inputs,
                                  Index workers) {
  const MilGeometry geometry = mil_geometry(backbone.config());
  std::vector<std::vector<SegmentVad>> parts(clips.size());
  parallel_for(static_cast<Index>(clips.size()), workers, [&](Index i) {
    const ClipRecord& c = *clips[static_cast<std::size_t>(i)];
    const Volume<float> embedding = backbone.forward(c.frames, false).embedding();
    const auto post = vad_scores(head, embedding, c.audio, geometry, inputs);
    auto& dst = parts[static_cast<std::size_t>(i)];
    for (std::size_t s = 0; s < post.size(); ++s) {
      const int label = s < c.vad.labels.size() ? c.vad.labels[s] : 0;
      dst.push_back({c.id, static_cast<Index>(s), post[s].value, label, post[s].visual_only});
    }
  });
  std::vector<SegmentVad> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

FrameVad system_frame_vad(const std::vector<SegmentVad>& segments,
                          const std::vector<const ClipRecord*>& clips, double threshold) {
  std::map<std::string, std::vector<int>> decisions;
  for (const auto& s : segments) {
    auto& d = decisions[s.clip_id];
    if (static_cast<Index>(d.size()) <= s.segment) d.resize(static_cast<std::size_t>(s.segment) + 1, 0);
    d[static_cast<std::size_t>(s.segment)] = s.posterior >= threshold ? 1 : 0;
  }
  FrameVad vad;
  for (const ClipRecord* c : clips) {
    auto it = decisions.find(c->id);
    if (it == decisions.end()) continue;
    WeakLabelSequence seq = c->vad;
    seq.labels = it->second;
    vad.set_segments(c->id, seq, c->fps, c->frames.extent.frames);
  }
  return vad;
}

FrameVad oracle_frame_vad(const Corpus& corpus, const std::vector<const ClipRecord*>& clips) {
  if (!corpus.vad_mask.empty()) return FrameVad::from_mask(corpus.vad_mask);
  FrameVad vad;
  for (const ClipRecord* c : clips) vad.set_segments(c->id, c->vad, c->fps, c->frames.extent.frames);
  return vad;
}

}  // namespace speakloc

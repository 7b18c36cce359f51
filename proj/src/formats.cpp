#include "speakloc/formats.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace speakloc {

static_assert(std::endian::native == std::endian::little,
              "binary containers assume a little-endian host");

namespace {

std::string location(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

double to_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw DataError(where + "not a number: '" + field + "'");
  return v;
}

Index to_index(const std::string& field, const std::string& where) {
  long long v = 0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw DataError(where + "not an integer: '" + field + "'");
  return static_cast<Index>(v);
}

std::optional<bool> to_gt(const std::string& field, const std::string& where) {
  if (field == "-" || field.empty()) return std::nullopt;
  if (field == "1" || field == "speaking" || field == "SPEAKING") return true;
  if (field == "0" || field == "not-speaking" || field == "not_speaking" ||
      field == "NOT_SPEAKING") {
    return false;
  }
  throw DataError(where + "unknown gt_label '" + field + "'");
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

bool skip_line(const std::string& line) {
  return line.empty() || line[0] == '#' ||
         line.find_first_not_of(" \t\r") == std::string::npos;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

template <typename F>
void for_each_record(std::istream& in, const std::string& source, F&& f) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_line(line)) continue;
    f(split_tabs(line), location(source, n));
  }
  if (in.bad()) throw DataError(source + ": read error");
}

FaceBox parse_box(const std::vector<std::string>& f, std::size_t count, const std::string& where) {
  FaceBox b;
  b.clip_id = f[0];
  b.frame_index = to_index(f[1], where);
  b.x1 = to_double(f[2], where);
  b.y1 = to_double(f[3], where);
  b.x2 = to_double(f[4], where);
  b.y2 = to_double(f[5], where);
  b.track_id = f[6] == "-" ? std::string() : f[6];
  if (count == 8) b.gt_speaking = to_gt(f[7], where);
  if (!b.valid()) throw DataError(where + "box coordinates must satisfy 0<=x1<x2<=1, 0<=y1<y2<=1");
  return b;
}

std::string box_record(const FaceBox& b) {
  std::string s = b.clip_id + '\t' + std::to_string(b.frame_index) + '\t' + fmt("%.6f", b.x1) +
                  '\t' + fmt("%.6f", b.y1) + '\t' + fmt("%.6f", b.x2) + '\t' +
                  fmt("%.6f", b.y2) + '\t' + (b.track_id.empty() ? "-" : b.track_id) + '\t';
  s += b.gt_speaking ? (*b.gt_speaking ? "1" : "0") : "-";
  return s;
}

}  // namespace

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << text;
}

// ------------------------------------------------------------------ boxes

std::vector<FaceBox> read_boxes(std::istream& in) {
  std::vector<FaceBox> boxes;
  for_each_record(in, "boxes", [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() != 7 && f.size() != 8) throw DataError(where + "expected 7 or 8 fields");
    boxes.push_back(parse_box(f, f.size(), where));
  });
  return boxes;
}

std::vector<FaceBox> read_boxes_file(const std::string& path) {
  auto in = open_in(path);
  return read_boxes(in);
}

void write_boxes(std::ostream& out, const std::vector<FaceBox>& boxes) {
  for (const auto& b : boxes) out << box_record(b) << '\n';
}

void write_boxes_file(const std::string& path, const std::vector<FaceBox>& boxes) {
  auto out = open_out(path);
  write_boxes(out, boxes);
}

// ----------------------------------------------------------------- scores

std::vector<InstanceScore> read_scores(std::istream& in) {
  std::vector<InstanceScore> scores;
  for_each_record(in, "scores", [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() != 8 && f.size() != 9) throw DataError(where + "expected 8 or 9 fields");
    InstanceScore s;
    s.box = parse_box(f, f.size() - 1, where);
    s.score = to_double(f.back(), where);
    scores.push_back(std::move(s));
  });
  return scores;
}

std::vector<InstanceScore> read_scores_file(const std::string& path) {
  auto in = open_in(path);
  return read_scores(in);
}

void write_scores(std::ostream& out, const std::vector<InstanceScore>& scores) {
  for (const auto& s : scores) out << box_record(s.box) << '\t' << fmt("%.17g", s.score) << '\n';
}

void write_scores_file(const std::string& path, const std::vector<InstanceScore>& scores) {
  auto out = open_out(path);
  write_scores(out, scores);
}

// -------------------------------------------------------------- alignment

std::vector<AlignedWord> read_alignment(std::istream& in) {
  std::vector<AlignedWord> words;
  bool first = true;
  for_each_record(in, "alignment", [&](const std::vector<std::string>& f,
                                       const std::string& where) {
    if (f.size() != 4) throw DataError(where + "expected word, start_s, end_s, confidence");
    if (first) {
      first = false;
      double probe = 0.0;
      const auto& s = f[1];
      if (std::from_chars(s.data(), s.data() + s.size(), probe).ec != std::errc()) return;  // header
    }
    AlignedWord w;
    w.word = f[0];
    w.start_s = to_double(f[1], where);
    w.end_s = to_double(f[2], where);
    w.confidence = to_double(f[3], where);
    if (!(w.start_s <= w.end_s)) throw DataError(where + "word ends before it starts");
    if (!(w.confidence >= 0.0 && w.confidence <= 1.0)) {
      throw DataError(where + "confidence outside [0, 1]");
    }
    words.push_back(std::move(w));
  });
  return words;
}

std::vector<AlignedWord> read_alignment_file(const std::string& path) {
  auto in = open_in(path);
  return read_alignment(in);
}

// ----------------------------------------------------------------- labels

void write_labels(std::ostream& out, const WeakLabelSequence& labels) {
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    out << i << '\t' << fmt("%.3f", static_cast<double>(i) * labels.segment_len_s) << '\t'
        << labels.labels[i] << '\n';
  }
}

nlohmann::json label_metadata(const WeakLabelSequence& labels) {
  return {{"t", labels.segment_len_s},
          {"kind", to_string(labels.kind)},
          {"threshold", labels.fraction_threshold},
          {"segments", labels.labels.size()}};
}

std::string label_sidecar_path(const std::string& path) { return path + ".meta.json"; }

void write_labels_file(const std::string& path, const WeakLabelSequence& labels) {
  {
    auto out = open_out(path);
    write_labels(out, labels);
  }
  write_text_file(label_sidecar_path(path), label_metadata(labels).dump(2) + "\n");
}

WeakLabelSequence read_labels_file(const std::string& path) {
  WeakLabelSequence seq;
  const std::string meta_path = label_sidecar_path(path);
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = nlohmann::json::parse(read_text_file(meta_path));
      seq.segment_len_s = meta.at("t").get<double>();
      seq.kind = parse_label_kind(meta.at("kind").get<std::string>());
      seq.fraction_threshold = meta.at("threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(meta_path + ": " + e.what());
    }
  }
  auto in = open_in(path);
  for_each_record(in, path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() != 3) throw DataError(where + "expected segment_index, start_s, label");
    const Index idx = to_index(f[0], where);
    const Index label = to_index(f[2], where);
    if (idx != static_cast<Index>(seq.labels.size())) {
      throw DataError(where + "segment indices must be consecutive from 0");
    }
    if (label != 0 && label != 1) throw DataError(where + "label must be 0 or 1");
    seq.labels.push_back(static_cast<int>(label));
  });
  return seq;
}

// ------------------------------------------------------- audio embeddings

std::string segment_id(const std::string& clip_id, Index segment) {
  return clip_id + "/" + std::to_string(segment);
}

AudioEmbeddingTable read_audio_embeddings(std::istream& in) {
  AudioEmbeddingTable table;
  Index dim = -1;
  for_each_record(in, "audio", [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() < 2) throw DataError(where + "expected segment_id followed by values");
    const auto d = static_cast<Index>(f.size() - 1);
    if (dim >= 0 && d != dim) throw DataError(where + "inconsistent embedding dimension");
    dim = d;
    Vec<double> v(d);
    for (Index i = 0; i < d; ++i) v(i) = to_double(f[static_cast<std::size_t>(i + 1)], where);
    if (!v.allFinite()) throw DataError(where + "non-finite embedding value");
    table[f[0]] = std::move(v);
  });
  return table;
}

AudioEmbeddingTable read_audio_embeddings_file(const std::string& path) {
  auto in = open_in(path);
  return read_audio_embeddings(in);
}

void write_audio_embeddings_file(const std::string& path, const AudioEmbeddingTable& table) {
  auto out = open_out(path);
  for (const auto& [id, v] : table) {
    out << id;
    for (Index i = 0; i < v.size(); ++i) out << '\t' << fmt("%.6f", v(i));
    out << '\n';
  }
}

// --------------------------------------------------------------- VAD mask

std::vector<VadMaskEntry> read_vad_mask(std::istream& in) {
  std::vector<VadMaskEntry> entries;
  for_each_record(in, "vad mask", [&](const std::vector<std::string>& f,
                                      const std::string& where) {
    VadMaskEntry e;
    std::size_t off = 0;
    if (f.size() == 3) {
      e.clip_id = f[0];
      off = 1;
    } else if (f.size() != 2) {
      throw DataError(where + "expected [clip_id] frame_index flag");
    }
    e.frame_index = to_index(f[off], where);
    const Index flag = to_index(f[off + 1], where);
    if (flag != 0 && flag != 1) throw DataError(where + "VAD flag must be 0 or 1");
    e.voice = flag == 1;
    entries.push_back(std::move(e));
  });
  return entries;
}

std::vector<VadMaskEntry> read_vad_mask_file(const std::string& path) {
  auto in = open_in(path);
  return read_vad_mask(in);
}

void write_vad_mask_file(const std::string& path, const std::vector<VadMaskEntry>& entries) {
  auto out = open_out(path);
  for (const auto& e : entries) {
    if (!e.clip_id.empty()) out << e.clip_id << '\t';
    out << e.frame_index << '\t' << (e.voice ? 1 : 0) << '\n';
  }
}

// -------------------------------------------------------- segment scores

std::vector<SegmentScore> read_segment_scores_file(const std::string& path) {
  auto in = open_in(path);
  std::vector<SegmentScore> out;
  for_each_record(in, path, [&](const std::vector<std::string>& f, const std::string& where) {
    if (f.size() != 3) throw DataError(where + "expected segment_id, posterior, label");
    SegmentScore s;
    s.segment_id = f[0];
    s.posterior = to_double(f[1], where);
    s.label = static_cast<int>(to_index(f[2], where));
    out.push_back(std::move(s));
  });
  return out;
}

void write_segment_scores_file(const std::string& path, const std::vector<SegmentScore>& scores) {
  auto out = open_out(path);
  for (const auto& s : scores) {
    out << s.segment_id << '\t' << fmt("%.17g", s.posterior) << '\t' << s.label << '\n';
  }
}

// ----------------------------------------------------------------- frames

void write_frames_file(const std::string& path, const FrameFileHeader& h,
                       const std::vector<std::uint8_t>& pixels) {
  if (static_cast<Index>(pixels.size()) != h.frames * h.height * h.width * h.channels) {
    throw ArgumentError("frame buffer size does not match header");
  }
  auto out = open_out(path, std::ios::out | std::ios::binary);
  const nlohmann::json header = {{"format", "speakloc-frames"}, {"version", 1},
                                 {"frames", h.frames},          {"height", h.height},
                                 {"width", h.width},            {"channels", h.channels},
                                 {"fps", h.fps},                {"dtype", "u8"}};
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

std::vector<std::uint8_t> read_frames_file(const std::string& path, FrameFileHeader* h) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::string line;
  std::getline(in, line);
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.at("format") != "speakloc-frames") throw DataError(path + ": not a frames file");
    if (j.at("version").get<int>() != 1) throw DataError(path + ": unsupported frames version");
    h->frames = j.at("frames").get<Index>();
    h->height = j.at("height").get<Index>();
    h->width = j.at("width").get<Index>();
    h->channels = j.at("channels").get<Index>();
    h->fps = j.at("fps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad frames header: " + e.what());
  }
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h->frames * h->height * h->width *
                                                            h->channels));
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(pixels.size())) {
    throw DataError(path + ": truncated frame data");
  }
  return pixels;
}

template <typename Scalar>
Volume<Scalar> frames_to_volume(const std::vector<std::uint8_t>& pixels, const FrameFileHeader& h) {
  Volume<Scalar> v(Extent{h.frames, h.height, h.width}, h.channels);
  for (Index i = 0; i < v.values.size(); ++i) {
    v.values.data()[i] = static_cast<Scalar>(pixels[static_cast<std::size_t>(i)]) / Scalar(255);
  }
  return v;
}

template Volume<float> frames_to_volume(const std::vector<std::uint8_t>&, const FrameFileHeader&);
template Volume<double> frames_to_volume(const std::vector<std::uint8_t>&, const FrameFileHeader&);

// ------------------------------------------------------------ checkpoints

void write_checkpoint(const std::string& path, const std::string& kind, nlohmann::json header,
                      const std::vector<const Mat<float>*>& tensors) {
  header["format"] = "speakloc-checkpoint";
  header["version"] = 1;
  header["kind"] = kind;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto* t : tensors) shapes.push_back({t->rows(), t->cols()});
  header["tensors"] = shapes;

  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << header.dump() << '\n';
  for (const auto* t : tensors) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path, const std::string& expected_kind) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::string line;
  std::getline(in, line);
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(line);
    if (ckpt.header.at("format") != "speakloc-checkpoint") {
      throw DataError(path + ": not a checkpoint");
    }
    if (ckpt.header.at("version").get<int>() != 1) {
      throw DataError(path + ": unsupported checkpoint version");
    }
    if (ckpt.header.at("kind").get<std::string>() != expected_kind) {
      throw DataError(path + ": expected a '" + expected_kind + "' checkpoint, found '" +
                      ckpt.header.at("kind").get<std::string>() + "'");
    }
    for (const auto& shape : ckpt.header.at("tensors")) {
      Mat<float> m(shape.at(0).get<Index>(), shape.at(1).get<Index>());
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
      if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(float))) {
        throw DataError(path + ": truncated checkpoint");
      }
      ckpt.tensors.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  }
  return ckpt;
}

}  // namespace speakloc

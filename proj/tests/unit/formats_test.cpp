#include "speakloc/errors.hpp"
#include "speakloc/formats.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace speakloc;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "speakloc_formats";
  std::filesystem::create_directories(dir);
  return dir / name;
}

FaceBox sample_box(Index frame, std::optional<bool> gt) {
  FaceBox b;
  b.clip_id = "clip0001";
  b.frame_index = frame;
  b.x1 = 0.125;
  b.y1 = 0.25;
  b.x2 = 0.5;
  b.y2 = 0.875;
  b.track_id = "e1";
  b.gt_speaking = gt;
  return b;
}

}  // namespace

TEST_SUITE("formats") {

TEST_CASE("boxes round trip") {
  const std::vector<FaceBox> boxes{sample_box(0, true), sample_box(3, false), sample_box(4, {})};
  std::stringstream io;
  write_boxes(io, boxes);
  const auto back = read_boxes(io);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].frame_index == boxes[i].frame_index);
    CHECK(back[i].x2 == boxes[i].x2);
    CHECK(back[i].track_id == "e1");
    CHECK(back[i].gt_speaking == boxes[i].gt_speaking);
  }
}

TEST_CASE("malformed box records are data errors") {
  std::stringstream bad("clip0001\t0\t0.1\t0.1\t0.05\t0.5\te1\n");
  CHECK_THROWS_AS(read_boxes(bad), DataError);
  std::stringstream short_line("clip0001\t0\t0.1\n");
  CHECK_THROWS_AS(read_boxes(short_line), DataError);
}

TEST_CASE("scores round trip exactly") {
  InstanceScore s{sample_box(2, true), 0.1234567890123, ScoreSource::kCam};
  std::stringstream io;
  write_scores(io, {s});
  const auto back = read_scores(io);
  REQUIRE(back.size() == 1);
  CHECK(back[0].score == s.score);
  CHECK(back[0].box.gt_speaking == std::optional<bool>(true));
}

TEST_CASE("label files keep their metadata in a sidecar") {
  WeakLabelSequence labels;
  labels.segment_len_s = 0.5;
  labels.kind = LabelKind::kVad;
  labels.fraction_threshold = 0.5;
  labels.labels = {0, 1, 1, 0};
  const auto path = scratch("labels.vad.tsv").string();
  write_labels_file(path, labels);
  CHECK(std::filesystem::exists(label_sidecar_path(path)));
  const auto back = read_labels_file(path);
  CHECK(back.labels == labels.labels);
  CHECK(back.kind == LabelKind::kVad);
  CHECK(back.segment_len_s == 0.5);
  std::ostringstream text;
  write_labels(text, labels);
  CHECK(text.str() == "0\t0.000\t0\n1\t0.500\t1\n2\t1.000\t1\n3\t1.500\t0\n");
}

TEST_CASE("alignment with and without header") {
  std::stringstream with("word\tstart_s\tend_s\tconfidence\nhi\t0.5\t0.9\t0.95\n# note\n\nyo\t1\t1.2\t0.4\n");
  const auto words = read_alignment(with);
  REQUIRE(words.size() == 2);
  CHECK(words[1].word == "yo");
  CHECK(words[1].confidence == 0.4);
  std::stringstream bad("hi\t0.5\t0.9\t1.5\n");
  CHECK_THROWS_AS(read_alignment(bad), DataError);
}

TEST_CASE("vad masks and audio tables") {
  std::stringstream mask("0\t1\nclip0002\t3\t0\n");
  const auto entries = read_vad_mask(mask);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].clip_id.empty());
  CHECK(entries[0].voice);
  CHECK(entries[1].clip_id == "clip0002");
  CHECK(entries[1].frame_index == 3);

  std::stringstream audio("clip0001/0\t0.5\t-1\nclip0001/1\t0\t2\n");
  const auto table = read_audio_embeddings(audio);
  REQUIRE(table.size() == 2);
  CHECK(table.at(segment_id("clip0001", 1))(1) == 2.0);
  std::stringstream ragged("a/0\t1\t2\na/1\t1\n");
  CHECK_THROWS_AS(read_audio_embeddings(ragged), DataError);
}

TEST_CASE("frame files and checkpoints round trip") {
  FrameFileHeader h{2, 3, 4, 1, 8.0};
  std::vector<std::uint8_t> pixels(24);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>(i * 10);
  const auto fpath = scratch("x.frames").string();
  write_frames_file(fpath, h, pixels);
  FrameFileHeader back;
  CHECK(read_frames_file(fpath, &back) == pixels);
  CHECK(back.fps == 8.0);
  const auto v = frames_to_volume<float>(pixels, back);
  CHECK(v.extent == Extent{2, 3, 4});
  CHECK(v.values(23, 0) == doctest::Approx(230.0 / 255.0));

  Mat<float> a(2, 3), b(1, 1);
  a << 1, 2, 3, 4, 5, 6;
  b << -0.5f;
  const auto cpath = scratch("m.ckpt").string();
  write_checkpoint(cpath, "test", {{"note", "x"}}, {&a, &b});
  const auto ck = read_checkpoint(cpath, "test");
  REQUIRE(ck.tensors.size() == 2);
  CHECK(ck.tensors[0] == a);
  CHECK(ck.tensors[1] == b);
  CHECK_THROWS_AS(read_checkpoint(cpath, "other"), DataError);
}

}

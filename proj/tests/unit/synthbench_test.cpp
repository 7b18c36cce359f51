#include "speakloc/errors.hpp"
#include "speakloc/synthbench.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace speakloc;

namespace {

SynthConfig small(Index clips = 6) {
  SynthConfig c;
  c.n_clips = clips;
  c.train_clips = clips / 2;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("synthbench") {

TEST_CASE("one entity speaking throughout gives all-positive labels") {
  auto c = small(2);
  c.entities = 1;
  c.schedule = std::vector<ScheduledSpeech>{{0, {0.0, c.clip_len_s}}};
  const auto data = generate(c);
  for (const auto& clip : data.clips) {
    CHECK(clip.pos.labels == std::vector<int>(10, 1));
    REQUIRE(clip.entities.size() == 1);
    for (bool s : clip.entities[0].speaking) CHECK(s);
  }
}

TEST_CASE("overlapping schedules are infeasible") {
  auto c = small(2);
  c.entities = 2;
  c.schedule = std::vector<ScheduledSpeech>{{0, {1.0, 3.0}}, {1, {2.0, 4.0}}};
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("overlap"), ConfigError);
  c.schedule = std::vector<ScheduledSpeech>{{2, {1.0, 3.0}}};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("invalid values are rejected") {
  auto c = small();
  c.train_clips = 99;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.mouth_flicker = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small();
  c.max_entities = 9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("identical seeds give byte-identical datasets") {
  const auto c = small();
  const auto a = generate(c, 1);
  const auto b = generate(c, 2);
  const auto root = std::filesystem::temp_directory_path() / "speakloc_synth_determinism";
  std::filesystem::remove_all(root);
  write_dataset((root / "a").string(), a);
  write_dataset((root / "b").string(), b);
  Index files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto other = root / "b" / std::filesystem::relative(entry.path(), root / "a");
    CHECK(slurp(entry.path()) == slurp(other));
    ++files;
  }
  CHECK(files > 5);
  std::filesystem::remove_all(root);

  auto d = c;
  d.seed += 1;
  CHECK(generate_clip(d, 0).pixels() != generate_clip(c, 0).pixels());
}

TEST_CASE("speaking frames lie in positive segments") {
  const auto data = generate(small(10));
  for (const auto& clip : data.clips) {
    const Index per_segment = static_cast<Index>(data.config.fps * data.config.segment_len_s);
    for (const auto& entity : clip.entities) {
      for (std::size_t f = 0; f < entity.speaking.size(); ++f) {
        if (entity.speaking[f]) CHECK(clip.pos.labels[f / per_segment] == 1);
      }
    }
    // At most one speaker per frame, and voice exactly where someone speaks.
    for (std::size_t f = 0; f < clip.frame_voice.size(); ++f) {
      int speakers = 0;
      for (const auto& entity : clip.entities) speakers += entity.speaking[f] ? 1 : 0;
      CHECK(speakers <= 1);
      CHECK(clip.frame_voice[f] == (speakers == 1));
    }
  }
}

TEST_CASE("boxes carry ground truth and stay inside the frame") {
  const auto data = generate(small(4));
  for (const auto& clip : data.clips) {
    CHECK(clip.frames.extent == Extent{80, 24, 48});
    for (const auto& b : clip.face_boxes()) {
      CHECK(b.valid());
      CHECK(b.gt_speaking.has_value());
      CHECK(b.clip_id == clip.id);
    }
    for (const auto& b : clip.objects) CHECK(b.gt_speaking == std::optional<bool>(false));
    CHECK(clip.audio.size() == 10);
    CHECK(clip.audio[0].size() == data.config.audio_dim);
  }
  CHECK(clip_id(7) == "clip0007");
}

TEST_CASE("clean audio is the speech fraction along a fixed direction") {
  const auto c = small(2);
  const auto clip = generate_clip(c, 1);
  const auto u = audio_direction(c);
  const auto clean = synth_audio(c, clip, 0.0, 1);
  for (std::size_t s = 0; s < clean.size(); ++s)
    CHECK((clean[s] - clip.speech_fraction[s] * u).norm() <= 1e-12);
}

}

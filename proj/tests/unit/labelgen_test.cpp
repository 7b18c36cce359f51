#include "speakloc/errors.hpp"
#include "speakloc/labelgen.hpp"

#include <doctest.h>

#include <random>

using namespace speakloc;

TEST_SUITE("labelgen") {

TEST_CASE("one well-formed cue maps field by field") {
  const auto parsed = parse_srt("1\n00:00:01,000 --> 00:00:02,500\nHello\n");
  REQUIRE(parsed.cues.size() == 1);
  CHECK(parsed.cues[0].start_s == doctest::Approx(1.0));
  CHECK(parsed.cues[0].end_s == doctest::Approx(2.5));
  CHECK(parsed.cues[0].text == "Hello");
  CHECK(parsed.skipped_blocks == 0);
}

TEST_CASE("empty subtitle file is an empty-input error") {
  CHECK_THROWS_AS(parse_srt(""), EmptyInputError);
}

TEST_CASE("cues come back sorted by start") {
  const auto parsed = parse_srt(
      "2\n00:00:05,000 --> 00:00:06,000\nsecond\n\n"
      "1\n00:00:01,000 --> 00:00:02,000\nfirst\n");
  REQUIRE(parsed.cues.size() == 2);
  CHECK(parsed.cues[0].text == "first");
  CHECK(parsed.cues[1].text == "second");
}

TEST_CASE("byte order mark and malformed blocks") {
  const auto parsed = parse_srt(
      "\xEF\xBB\xBF" "1\n00:00:01,000 --> 00:00:02,000\nok\n\n"
      "2\nnot a timing line\nbroken\n\n"
      "3\n00:00:03,000 --> 00:00:02,000\nbackwards\n");
  REQUIRE(parsed.cues.size() == 1);
  CHECK(parsed.cues[0].text == "ok");
  CHECK(parsed.skipped_blocks == 2);
}

TEST_CASE("bracketed sound descriptions are removed") {
  CHECK(strip_nonspeech("[door slams] Get out!") == "Get out!");
  CHECK(strip_nonspeech("{music}") == "");
  CHECK(strip_nonspeech("He said [sigh] go {now} away") == "He said go away");
  CHECK(strip_nonspeech("Wait [coughs") == "Wait");
}

TEST_CASE("stripping is idempotent") {
  for (const char* text : {"a [b] c", "{x}{y} z", "[unclosed tail", "  spaced   out  ", "plain"}) {
    const auto once = strip_nonspeech(text);
    CHECK(strip_nonspeech(once) == once);
  }
}

std::vector<AlignedWord> three_words(double c1, double c2, double c3) {
  return {{"one", 0.0, 0.4, c1}, {"two", 1.0, 1.4, c2}, {"three", 2.0, 2.4, c3}};
}

TEST_CASE("confidence 1 keeps every word span") {
  std::vector<AlignedWord> words{{"a", 0.0, 0.3, 1.0}, {"b", 0.35, 0.6, 1.0}, {"c", 2.0, 2.5, 1.0}};
  const auto r = filter_by_confidence(words, 0.8);
  REQUIRE(r.speech.intervals.size() == 2);  // first two merge across the 0.05 s gap
  CHECK(r.speech.intervals[0] == Interval{0.0, 0.6});
  CHECK(r.speech.intervals[1] == Interval{2.0, 2.5});
  CHECK(r.discarded_fraction == 0.0);
}

TEST_CASE("confidence 0 under threshold 0.8 discards everything") {
  const auto r = filter_by_confidence(three_words(0.0, 0.0, 0.0), 0.8);
  CHECK(r.speech.intervals.empty());
  CHECK(r.discarded_fraction == 1.0);
}

TEST_CASE("only confident words survive") {
  const auto r = filter_by_confidence(three_words(0.9, 0.5, 0.95), 0.8);
  REQUIRE(r.speech.intervals.size() == 2);
  CHECK(r.speech.intervals[0] == Interval{0.0, 0.4});
  CHECK(r.speech.intervals[1] == Interval{2.0, 2.4});
  CHECK(r.discarded_fraction == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("threshold 0 returns the union of all word spans") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<AlignedWord> words;
  std::vector<Interval> spans;
  for (int i = 0; i < 30; ++i) {
    const double s = 20.0 * u(rng);
    const double e = s + 0.5 * u(rng);
    words.push_back({"w", s, e, u(rng)});
    spans.push_back({s, e});
  }
  const auto r = filter_by_confidence(words, 0.0, 0.0, 25.0);
  const auto expected = make_interval_set(spans, 25.0, 0.0);
  CHECK(r.speech.intervals == expected.intervals);
}

SpeechIntervalSet speech_of(std::vector<Interval> v, double total) {
  return make_interval_set(std::move(v), total);
}

TEST_CASE("fraction thresholds decide PoS and VAD labels") {
  const auto speech = speech_of({{0.0, 0.15}}, 3.0);
  CHECK(make_labels(speech, 1.0, LabelKind::kPoS).labels == std::vector<int>{1, 0, 0});
  CHECK(make_labels(speech, 1.0, LabelKind::kVad).labels == std::vector<int>{0, 0, 0});
  CHECK(make_labels(speech_of({}, 4.0), 1.0, LabelKind::kPoS).labels ==
        std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("label count is ceil(total / t)") {
  CHECK(make_labels(speech_of({}, 2.5), 1.0, LabelKind::kPoS).labels.size() == 3);
}

TEST_CASE("non-positive segment length is an argument error") {
  const auto speech = speech_of({{0.0, 1.0}}, 2.0);
  CHECK_THROWS_AS(make_labels(speech, 0.0, LabelKind::kPoS), ArgumentError);
  CHECK_THROWS_AS(make_labels(speech, -1.0, LabelKind::kVad), ArgumentError);
}

TEST_CASE("speech ending on a boundary belongs to the earlier segment") {
  const auto labels = make_labels(speech_of({{0.5, 1.0}}, 2.0), 1.0, LabelKind::kPoS);
  CHECK(labels.labels == std::vector<int>{1, 0});
}

TEST_CASE("adding speech never clears a label and PoS dominates VAD") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Interval> v;
    for (int i = 0; i < 4; ++i) {
      const double s = 10.0 * u(rng);
      v.push_back({s, s + u(rng)});
    }
    const auto before = speech_of(v, 10.0);
    const double s = 10.0 * u(rng);
    v.push_back({s, s + 2.0 * u(rng)});
    const auto after = speech_of(v, 10.0);
    for (auto kind : {LabelKind::kPoS, LabelKind::kVad}) {
      const auto a = make_labels(before, 1.0, kind).labels;
      const auto b = make_labels(after, 1.0, kind).labels;
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i]);
    }
    const auto pos = make_labels(after, 1.0, LabelKind::kPoS).labels;
    const auto vad = make_labels(after, 1.0, LabelKind::kVad).labels;
    for (std::size_t i = 0; i < pos.size(); ++i) CHECK(pos[i] >= vad[i]);
  }
}

TEST_CASE("interval sets are sorted, merged and clipped") {
  const auto s = make_interval_set({{3.0, 4.0}, {-1.0, 0.5}, {0.55, 1.0}, {9.5, 12.0}}, 10.0, 0.1);
  REQUIRE(s.intervals.size() == 3);
  CHECK(s.intervals[0] == Interval{0.0, 1.0});
  CHECK(s.intervals[1] == Interval{3.0, 4.0});
  CHECK(s.intervals[2] == Interval{9.5, 10.0});
  CHECK(s.speech_duration() == doctest::Approx(2.5));
  CHECK(s.overlap(0.5, 3.5) == doctest::Approx(1.0));
}

TEST_CASE("aligned words are kept only under dialogue cues") {
  const auto cues = parse_srt(
                        "1\n00:00:00,000 --> 00:00:02,000\nHi\n\n"
                        "2\n00:00:03,000 --> 00:00:04,000\n[bang]\n")
                        .cues;
  std::vector<AlignedWord> words{{"hi", 0.2, 0.6, 0.9}, {"bang", 3.1, 3.5, 0.95}};
  const auto est = estimate_speech(&cues, &words, 0.8, 0.1, 5.0);
  REQUIRE(est.speech.intervals.size() == 1);
  CHECK(est.speech.intervals[0] == Interval{0.2, 0.6});

  const auto cues_only = estimate_speech(&cues, nullptr, 0.8, 0.1, 5.0);
  REQUIRE(cues_only.speech.intervals.size() == 1);
  CHECK(cues_only.speech.intervals[0] == Interval{0.0, 2.0});
  CHECK_THROWS(estimate_speech(nullptr, nullptr, 0.8, 0.1, 5.0));
}

TEST_CASE("label kinds parse case-insensitively") {
  CHECK(parse_label_kind("PoS") == LabelKind::kPoS);
  CHECK(parse_label_kind("vad") == LabelKind::kVad);
  CHECK_THROWS(parse_label_kind("speech"));
  CHECK(default_fraction_threshold(LabelKind::kPoS) == 0.10);
  CHECK(default_fraction_threshold(LabelKind::kVad) == 0.50);
}

}

#pragma once

// Weak label generation from subtitles and forced alignments.

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace speakloc {

struct SubtitleCue {
  int index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;
};

struct SrtParseResult {
  std::vector<SubtitleCue> cues;  // sorted by start time
  std::size_t skipped_blocks = 0;
};

struct AlignedWord {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
  double confidence = 0.0;
};

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
  double length() const { return end_s - start_s; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Sorted, non-overlapping speech intervals clipped to [0, total_duration_s].
struct SpeechIntervalSet {
  std::vector<Interval> intervals;
  double total_duration_s = 0.0;

  double overlap(double start_s, double end_s) const;
  double speech_duration() const;
};

enum class LabelKind { kPoS, kVad };

std::string to_string(LabelKind kind);
LabelKind parse_label_kind(std::string_view text);  // "pos" | "vad", case-insensitive
double default_fraction_threshold(LabelKind kind);  // 0.10 PoS, 0.50 VAD

struct WeakLabelSequence {
  double segment_len_s = 1.0;
  LabelKind kind = LabelKind::kPoS;
  double fraction_threshold = 0.10;
  std::vector<int> labels;
};

inline constexpr double kDefaultConfidenceThreshold = 0.8;
inline constexpr double kDefaultMergeGap = 0.1;

/// Parses SRT text (UTF-8, optional BOM). Malformed blocks are skipped and
/// counted. Throws DataError on an unreadable stream and EmptyInputError when
/// no cue parses.
SrtParseResult parse_srt(std::istream& in);
SrtParseResult parse_srt(std::string_view text);

/// Removes [..] and {..} spans (brackets included) and collapses whitespace.
/// An unclosed bracket removes everything to the end of the text.
std::string strip_nonspeech(std::string_view text);

struct ConfidenceFilterResult {
  SpeechIntervalSet speech;
  double discarded_fraction = 0.0;  // by word count
};

/// Keeps words with confidence >= threshold and merges spans separated by
/// less than `merge_gap_s`. `total_duration_s` <= 0 uses the latest word end.
ConfidenceFilterResult filter_by_confidence(const std::vector<AlignedWord>& words,
                                            double threshold,
                                            double merge_gap_s = kDefaultMergeGap,
                                            double total_duration_s = 0.0);

/// Normalises arbitrary intervals into a SpeechIntervalSet (sort, clip,
/// merge gaps shorter than `merge_gap_s`).
SpeechIntervalSet make_interval_set(std::vector<Interval> intervals, double total_duration_s,
                                    double merge_gap_s = 0.0);

/// Segment i covers [i*t, (i+1)*t); its label is 1 iff the speech overlap
/// divided by t exceeds `fraction_threshold`. Throws ArgumentError if t <= 0.
WeakLabelSequence make_labels(const SpeechIntervalSet& speech, double t, LabelKind kind,
                              double fraction_threshold);
inline WeakLabelSequence make_labels(const SpeechIntervalSet& speech, double t, LabelKind kind) {
  return make_labels(speech, t, kind, default_fraction_threshold(kind));
}

/// Subtitle-only speech estimate: spans of cues whose cleaned text is not
/// empty.
SpeechIntervalSet speech_from_cues(const std::vector<SubtitleCue>& cues, double total_duration_s,
                                   double merge_gap_s = kDefaultMergeGap);

/// Parts of `speech` that also lie inside `allowed` (used to keep only
/// aligned words under subtitle cues that carry dialogue).
SpeechIntervalSet intersect(const SpeechIntervalSet& speech, const SpeechIntervalSet& allowed);

struct SpeechEstimate {
  SpeechIntervalSet speech;
  double discarded_fraction = 0.0;  // alignment words below the threshold
};

/// Speech of one clip from whatever is available: confident aligned words
/// kept only under cues that carry dialogue, aligned words alone, or the
/// dialogue cues alone. At least one source must be given.
SpeechEstimate estimate_speech(const std::vector<SubtitleCue>* cues,
                               const std::vector<AlignedWord>* words, double confidence,
                               double merge_gap_s, double total_duration_s);

}  // namespace speakloc

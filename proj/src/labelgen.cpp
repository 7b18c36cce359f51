#include "speakloc/labelgen.hpp"

#include "speakloc/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

namespace speakloc {

double SpeechIntervalSet::overlap(double start_s, double end_s) const {
  double total = 0.0;
  for (const auto& iv : intervals) {
    if (iv.start_s >= end_s) break;
    const double lo = std::max(iv.start_s, start_s);
    const double hi = std::min(iv.end_s, end_s);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

double SpeechIntervalSet::speech_duration() const {
  double total = 0.0;
  for (const auto& iv : intervals) total += iv.length();
  return total;
}

std::string to_string(LabelKind kind) { return kind == LabelKind::kPoS ? "PoS" : "VAD"; }

LabelKind parse_label_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "pos") return LabelKind::kPoS;
  if (lower == "vad") return LabelKind::kVad;
  throw ConfigError("unknown label kind '" + std::string(text) + "' (expected pos or vad)");
}

double default_fraction_threshold(LabelKind kind) {
  return kind == LabelKind::kPoS ? 0.10 : 0.50;
}

// ------------------------------------------------------------------ SRT

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double timestamp(const std::smatch& m, int first) {
  const double h = std::stod(m[first].str());
  const double mi = std::stod(m[first + 1].str());
  const double s = std::stod(m[first + 2].str());
  std::string ms = m[first + 3].str();
  while (ms.size() < 3) ms += '0';
  return h * 3600.0 + mi * 60.0 + s + std::stod(ms) / 1000.0;
}

bool parse_block(const std::vector<std::string>& lines, SubtitleCue* cue) {
  static const std::regex kTiming(
      R"(^\s*(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3})\s*-->\s*(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3}).*$)");
  if (lines.size() < 2) return false;
  const std::string index = trim(lines[0]);
  if (index.empty() || !std::all_of(index.begin(), index.end(),
                                    [](unsigned char c) { return std::isdigit(c); })) {
    return false;
  }
  std::smatch m;
  if (!std::regex_match(lines[1], m, kTiming)) return false;
  cue->index = std::stoi(index);
  cue->start_s = timestamp(m, 1);
  cue->end_s = timestamp(m, 5);
  if (!(cue->start_s >= 0.0 && cue->start_s < cue->end_s)) return false;
  std::string text;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (!text.empty()) text += '\n';
    text += trim(lines[i]);
  }
  cue->text = std::move(text);
  return true;
}

}  // namespace

SrtParseResult parse_srt(std::string_view raw) {
  if (raw.size() >= 3 && static_cast<unsigned char>(raw[0]) == 0xEF &&
      static_cast<unsigned char>(raw[1]) == 0xBB && static_cast<unsigned char>(raw[2]) == 0xBF) {
    raw.remove_prefix(3);
  }
  SrtParseResult result;
  std::vector<std::string> block;
  auto flush = [&] {
    if (block.empty()) return;
    SubtitleCue cue;
    if (parse_block(block, &cue)) {
      result.cues.push_back(std::move(cue));
    } else {
      ++result.skipped_blocks;
    }
    block.clear();
  };

  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string_view line = raw.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      flush();
    } else {
      block.emplace_back(line);
    }
    pos = nl + 1;
  }
  flush();

  if (result.cues.empty()) throw EmptyInputError("no parseable subtitle cues");
  std::stable_sort(result.cues.begin(), result.cues.end(),
                   [](const SubtitleCue& a, const SubtitleCue& b) { return a.start_s < b.start_s; });
  return result;
}

SrtParseResult parse_srt(std::istream& in) {
  if (!in.good()) throw DataError("subtitle stream is not readable");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw DataError("error while reading subtitle stream");
  return parse_srt(std::string_view(buffer.str()));
}

// -------------------------------------------------------------- cleaning

std::string strip_nonspeech(std::string_view text) {
  std::string kept;
  kept.reserve(text.size());
  int depth = 0;
  for (char c : text) {
    if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      if (depth > 0) --depth;
    } else if (depth == 0) {
      kept += c;
    }
  }
  std::istringstream words(kept);
  std::string word, out;
  while (words >> word) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

// ------------------------------------------------------------- intervals

SpeechIntervalSet make_interval_set(std::vector<Interval> intervals, double total_duration_s,
                                    double merge_gap_s) {
  SpeechIntervalSet set;
  set.total_duration_s = total_duration_s;
  for (auto& iv : intervals) {
    iv.start_s = std::clamp(iv.start_s, 0.0, total_duration_s);
    iv.end_s = std::clamp(iv.end_s, 0.0, total_duration_s);
  }
  std::erase_if(intervals, [](const Interval& iv) { return !(iv.end_s > iv.start_s); });
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.start_s < b.start_s; });
  for (const auto& iv : intervals) {
    const double gap = set.intervals.empty() ? 0.0 : iv.start_s - set.intervals.back().end_s;
    if (!set.intervals.empty() && (gap <= 0.0 || gap < merge_gap_s)) {
      set.intervals.back().end_s = std::max(set.intervals.back().end_s, iv.end_s);
    } else {
      set.intervals.push_back(iv);
    }
  }
  return set;
}

ConfidenceFilterResult filter_by_confidence(const std::vector<AlignedWord>& words,
                                            double threshold, double merge_gap_s,
                                            double total_duration_s) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ArgumentError("confidence threshold must lie in [0, 1]");
  }
  double total = total_duration_s;
  if (total <= 0.0) {
    total = 0.0;
    for (const auto& w : words) total = std::max(total, w.end_s);
  }

  std::vector<Interval> kept;
  double kept_time = 0.0, all_time = 0.0;
  std::size_t dropped = 0;
  for (const auto& w : words) {
    const double len = std::max(0.0, w.end_s - w.start_s);
    all_time += len;
    if (w.confidence >= threshold) {
      kept.push_back({w.start_s, w.end_s});
      kept_time += len;
    } else {
      ++dropped;
    }
  }

  ConfidenceFilterResult result;
  result.speech = make_interval_set(std::move(kept), total, merge_gap_s);
  if (all_time > 0.0) {
    result.discarded_fraction = 1.0 - kept_time / all_time;
  } else if (!words.empty()) {
    result.discarded_fraction = static_cast<double>(dropped) / static_cast<double>(words.size());
  }
  return result;
}

WeakLabelSequence make_labels(const SpeechIntervalSet& speech, double t, LabelKind kind,
                              double fraction_threshold) {
  if (!(t > 0.0)) throw ArgumentError("segment length must be positive");
  WeakLabelSequence seq;
  seq.segment_len_s = t;
  seq.kind = kind;
  seq.fraction_threshold = fraction_threshold;
  const auto n = static_cast<std::size_t>(
      std::max(0.0, std::ceil(speech.total_duration_s / t - 1e-9)));
  seq.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = static_cast<double>(i) * t;
    const double hi = lo + t;
    seq.labels[i] = speech.overlap(lo, hi) / t > fraction_threshold ? 1 : 0;
  }
  return seq;
}

SpeechIntervalSet speech_from_cues(const std::vector<SubtitleCue>& cues, double total_duration_s,
                                   double merge_gap_s) {
  std::vector<Interval> spans;
  double total = total_duration_s;
  for (const auto& cue : cues) {
    if (total_duration_s <= 0.0) total = std::max(total, cue.end_s);
    if (!strip_nonspeech(cue.text).empty()) spans.push_back({cue.start_s, cue.end_s});
  }
  return make_interval_set(std::move(spans), total, merge_gap_s);
}

SpeechIntervalSet intersect(const SpeechIntervalSet& speech, const SpeechIntervalSet& allowed) {
  SpeechIntervalSet out;
  out.total_duration_s = speech.total_duration_s;
  std::size_t j = 0;
  for (const auto& a : speech.intervals) {
    while (j < allowed.intervals.size() && allowed.intervals[j].end_s <= a.start_s) ++j;
    for (std::size_t k = j; k < allowed.intervals.size(); ++k) {
      const auto& b = allowed.intervals[k];
      if (b.start_s >= a.end_s) break;
      const double lo = std::max(a.start_s, b.start_s);
      const double hi = std::min(a.end_s, b.end_s);
      if (hi > lo) out.intervals.push_back({lo, hi});
    }
  }
  return out;
}

SpeechEstimate estimate_speech(const std::vector<SubtitleCue>* cues,
                               const std::vector<AlignedWord>* words, double confidence,
                               double merge_gap_s, double total_duration_s) {
  if (cues == nullptr && words == nullptr) {
    throw ArgumentError("speech estimate needs subtitles or an alignment");
  }
  SpeechEstimate out;
  if (words == nullptr) {
    out.speech = speech_from_cues(*cues, total_duration_s, merge_gap_s);
    return out;
  }
  auto filtered = filter_by_confidence(*words, confidence, merge_gap_s, total_duration_s);
  out.discarded_fraction = filtered.discarded_fraction;
  out.speech = filtered.speech;
  if (cues != nullptr) out.speech = intersect(out.speech, speech_from_cues(*cues, total_duration_s, 0.0));
  return out;
}

}  // namespace speakloc

#include "speakloc/evalkit.hpp"

#include "speakloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <utility>

namespace speakloc {

EvalReport roc_auc(const std::vector<ScoredLabel>& data) {
  EvalReport report;
  for (const auto& d : data) {
    if (!std::isfinite(d.score)) throw DataError("non-finite score in ROC input");
    (d.label == 1 ? report.positives : report.negatives) += 1;
  }
  if (report.positives == 0 || report.negatives == 0) {
    throw UndefinedMetricError("auROC is undefined: input has " +
                               std::to_string(report.positives) + " positives and " +
                               std::to_string(report.negatives) + " negatives");
  }
  std::vector<ScoredLabel> sorted = data;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

  const double p = static_cast<double>(report.positives);
  const double n = static_cast<double>(report.negatives);
  report.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  Index tp = 0;
  Index fp = 0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double threshold = sorted[i].score;
    while (i < sorted.size() && sorted[i].score == threshold) {
      (sorted[i].label == 1 ? tp : fp) += 1;
      ++i;
    }
    const RocPoint prev = report.roc.back();
    const RocPoint next{static_cast<double>(fp) / n, static_cast<double>(tp) / p, threshold};
    area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    report.roc.push_back(next);
  }
  report.auroc = std::clamp(area, 0.0, 1.0);
  return report;
}

EvalReport roc_auc(const std::vector<InstanceScore>& scores) {
  std::vector<ScoredLabel> data;
  data.reserve(scores.size());
  for (const auto& s : scores) {
    if (!s.box.gt_speaking) {
      throw DataError("score record for " + s.box.clip_id + " frame " +
                      std::to_string(s.box.frame_index) + " has no ground-truth label");
    }
    data.push_back({s.score, *s.box.gt_speaking ? 1 : 0});
  }
  return roc_auc(data);
}

double tpr_at_fpr(const EvalReport& report, double fpr) {
  if (!(fpr > 0.0 && fpr <= 1.0)) throw ArgumentError("fpr must lie in (0, 1]");
  if (report.roc.empty()) throw ArgumentError("empty ROC curve");
  // Last point at or left of fpr (highest TPR on a vertical run) and the
  // first point strictly right of it.
  std::size_t left = 0;
  for (std::size_t i = 0; i < report.roc.size(); ++i) {
    if (report.roc[i].fpr <= fpr) left = i;
  }
  const RocPoint& a = report.roc[left];
  if (a.fpr == fpr || left + 1 == report.roc.size()) return a.tpr;
  const RocPoint& b = report.roc[left + 1];
  const double w = (fpr - a.fpr) / (b.fpr - a.fpr);
  return a.tpr + w * (b.tpr - a.tpr);
}

std::string to_string(SizeBucket bucket) {
  switch (bucket) {
    case SizeBucket::kSmall: return "small";
    case SizeBucket::kMedium: return "medium";
    case SizeBucket::kLarge: return "large";
  }
  return "?";
}

std::string to_string(DensityBucket bucket) {
  switch (bucket) {
    case DensityBucket::kSparse: return "sparse";
    case DensityBucket::kModerate: return "moderate";
    case DensityBucket::kCrowded: return "crowded";
  }
  return "?";
}

SizeBucket size_bucket(const FaceBox& box) {
  const double a = box.area();
  if (a < 0.02) return SizeBucket::kSmall;
  if (a < 0.15) return SizeBucket::kMedium;
  return SizeBucket::kLarge;
}

DensityBucket density_bucket(Index boxes_in_frame) {
  if (boxes_in_frame < 5) return DensityBucket::kSparse;
  if (boxes_in_frame <= 15) return DensityBucket::kModerate;
  return DensityBucket::kCrowded;
}

std::map<SizeBucket, std::vector<std::size_t>> bucket_by_size(const std::vector<FaceBox>& boxes) {
  std::map<SizeBucket, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < boxes.size(); ++i) out[size_bucket(boxes[i])].push_back(i);
  return out;
}

std::map<DensityBucket, std::vector<std::size_t>> bucket_by_density(
    const std::vector<FaceBox>& boxes) {
  std::map<std::pair<std::string, Index>, std::vector<std::size_t>> frames;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    frames[{boxes[i].clip_id, boxes[i].frame_index}].push_back(i);
  }
  std::map<DensityBucket, std::vector<std::size_t>> out;
  for (const auto& [key, idx] : frames) {
    auto& dst = out[density_bucket(static_cast<Index>(idx.size()))];
    dst.insert(dst.end(), idx.begin(), idx.end());
  }
  for (auto& [b, idx] : out) std::sort(idx.begin(), idx.end());
  return out;
}

double iou(const FaceBox& a, const FaceBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<FaceBox> iou_filter(const std::vector<FaceBox>& objects,
                                const std::vector<FaceBox>& faces, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ArgumentError("IOU threshold must lie in [0, 1]");
  }
  std::map<std::pair<std::string, Index>, std::vector<const FaceBox*>> by_frame;
  for (const auto& f : faces) by_frame[{f.clip_id, f.frame_index}].push_back(&f);
  std::vector<FaceBox> out;
  for (const auto& o : objects) {
    bool keep = true;
    if (auto it = by_frame.find({o.clip_id, o.frame_index}); it != by_frame.end()) {
      for (const FaceBox* f : it->second) {
        if (iou(o, *f) > threshold) {
          keep = false;
          break;
        }
      }
    }
    if (keep) {
      FaceBox r = o;
      r.gt_speaking = false;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<int> majority_vote_segments(const std::vector<int>& frame_labels,
                                        Index frames_per_segment) {
  if (frames_per_segment <= 0) throw ArgumentError("frames per segment must be positive");
  std::vector<int> out;
  const auto n = static_cast<Index>(frame_labels.size());
  for (Index s = 0; s * frames_per_segment < n; ++s) {
    const Index lo = s * frames_per_segment;
    const Index hi = std::min(n, lo + frames_per_segment);
    Index pos = 0;
    for (Index f = lo; f < hi; ++f) pos += frame_labels[static_cast<std::size_t>(f)] == 1;
    out.push_back(2 * pos >= hi - lo ? 1 : 0);
  }
  return out;
}

std::vector<int> majority_vote_segments(const std::vector<int>& frame_labels, double t,
                                        double fps) {
  const double per = t * fps;
  const auto rounded = static_cast<Index>(std::llround(per));
  if (rounded <= 0 || std::abs(per - static_cast<double>(rounded)) > 1e-9) {
    throw ArgumentError("segment length must span a whole number of frames");
  }
  return majority_vote_segments(frame_labels, rounded);
}

namespace {

void fill_tprs(EvalReport& r, const std::vector<double>& fprs) {
  for (double f : fprs) r.tpr_at_fpr[f] = tpr_at_fpr(r, f);
}

template <typename Key>
void add_buckets(EvalReport& report, const std::string& prefix,
                 const std::map<Key, std::vector<std::size_t>>& groups,
                 const std::vector<InstanceScore>& scores, const std::vector<double>& fprs) {
  for (const auto& [key, idx] : groups) {
    const std::string name = prefix + "/" + to_string(key);
    std::vector<InstanceScore> subset;
    subset.reserve(idx.size());
    for (std::size_t i : idx) subset.push_back(scores[i]);
    try {
      EvalReport sub = roc_auc(subset);
      fill_tprs(sub, fprs);
      report.buckets[name] = std::move(sub);
    } catch (const UndefinedMetricError& e) {
      report.notes[name] = e.what();
    }
  }
}

}  // namespace

EvalReport evaluate(const std::vector<InstanceScore>& scores, const std::vector<double>& fprs) {
  EvalReport report = roc_auc(scores);
  fill_tprs(report, fprs);
  std::vector<FaceBox> boxes;
  boxes.reserve(scores.size());
  for (const auto& s : scores) boxes.push_back(s.box);
  add_buckets(report, "size", bucket_by_size(boxes), scores, fprs);
  add_buckets(report, "density", bucket_by_density(boxes), scores, fprs);
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["auroc"] = report.auroc;
  j["positives"] = report.positives;
  j["negatives"] = report.negatives;
  nlohmann::json tprs = nlohmann::json::object();
  for (const auto& [f, t] : report.tpr_at_fpr) {
    char key[32];
    std::snprintf(key, sizeof key, "%.4g", f);
    tprs[key] = t;
  }
  j["tpr_at_fpr"] = tprs;
  j["roc_points"] = report.roc.size();
  if (!report.buckets.empty() || !report.notes.empty()) {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [name, sub] : report.buckets) b[name] = to_json(sub);
    for (const auto& [name, note] : report.notes) b[name] = {{"undefined", note}};
    j["buckets"] = b;
  }
  return j;
}

std::string roc_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "# fpr\ttpr\tthreshold\n";
  char buf[96];
  for (const auto& p : report.roc) {
    std::snprintf(buf, sizeof buf, "%.9g\t%.9g\t%.9g\n", p.fpr, p.tpr, p.threshold);
    out << buf;
  }
  return out.str();
}

std::string roc_svg(const EvalReport& report, const std::string& title) {
  constexpr double kSize = 400.0;
  constexpr double kPad = 40.0;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kPad
      << "\" height=\"" << kSize + 2 * kPad << "\">\n";
  out << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kSize << "\" height=\""
      << kSize << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kPad + kSize << "\" x2=\"" << kPad + kSize
      << "\" y2=\"" << kPad << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
  char buf[64];
  for (const auto& p : report.roc) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", kPad + p.fpr * kSize, kPad + (1 - p.tpr) * kSize);
    out << buf;
  }
  out << "\"/>\n";
  std::snprintf(buf, sizeof buf, "%.4f", report.auroc);
  out << "<text x=\"" << kPad << "\" y=\"" << kPad - 12 << "\" font-family=\"sans-serif\">"
      << title << " (auROC " << buf << ")</text>\n";
  out << "<text x=\"" << kPad + kSize / 2 - 10 << "\" y=\"" << kPad + kSize + 28
      << "\" font-family=\"sans-serif\">FPR</text>\n";
  out << "<text x=\"6\" y=\"" << kPad + kSize / 2 << "\" font-family=\"sans-serif\">TPR</text>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace speakloc

#pragma once

// ROC analysis and the evaluation protocols: size and density buckets,
// IOU-based proposal filtering and segment majority votes.

#include "speakloc/boxes.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace speakloc {

struct ScoredLabel {
  double score = 0.0;
  int label = 0;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // scores >= threshold are positive
};

struct EvalReport {
  std::vector<RocPoint> roc;  // from (0, 0) to (1, 1)
  double auroc = 0.0;
  std::map<double, double> tpr_at_fpr;
  Index positives = 0;
  Index negatives = 0;
  std::map<std::string, EvalReport> buckets;
  std::map<std::string, std::string> notes;  // undefined buckets etc.
};

/// ROC curve over distinct thresholds and its trapezoidal area, which equals
/// P(score+ > score-) + P(tie) / 2. Throws UndefinedMetricError unless both
/// classes are present.
EvalReport roc_auc(const std::vector<ScoredLabel>& data);
EvalReport roc_auc(const std::vector<InstanceScore>& scores);

/// TPR at `fpr` by linear interpolation between bracketing ROC points
/// (the highest TPR is used on vertical segments). Requires 0 < fpr <= 1.
double tpr_at_fpr(const EvalReport& report, double fpr);

inline constexpr double kDefaultFpr = 0.315;

enum class SizeBucket { kSmall, kMedium, kLarge };
enum class DensityBucket { kSparse, kModerate, kCrowded };

std::string to_string(SizeBucket bucket);
std::string to_string(DensityBucket bucket);

/// small < 0.02 <= medium < 0.15 <= large, by normalised area.
SizeBucket size_bucket(const FaceBox& box);
/// < 5 sparse, 5..15 moderate, > 15 crowded.
DensityBucket density_bucket(Index boxes_in_frame);

/// Indices of boxes per size bucket (every index appears exactly once).
std::map<SizeBucket, std::vector<std::size_t>> bucket_by_size(const std::vector<FaceBox>& boxes);
/// Indices of boxes grouped by the density of their (clip, frame).
std::map<DensityBucket, std::vector<std::size_t>> bucket_by_density(
    const std::vector<FaceBox>& boxes);

double iou(const FaceBox& a, const FaceBox& b);

/// Object boxes whose IOU with every face box of the same clip and frame is
/// at most `threshold`, relabelled as not speaking. Throws ArgumentError
/// unless 0 <= threshold <= 1.
std::vector<FaceBox> iou_filter(const std::vector<FaceBox>& objects,
                                const std::vector<FaceBox>& faces, double threshold);

/// Segment label is 1 iff at least half of its frames are 1.
std::vector<int> majority_vote_segments(const std::vector<int>& frame_labels,
                                        Index frames_per_segment);
std::vector<int> majority_vote_segments(const std::vector<int>& frame_labels, double t,
                                        double fps);

/// Full report for scored boxes: overall ROC plus size and density buckets.
EvalReport evaluate(const std::vector<InstanceScore>& scores,
                    const std::vector<double>& fprs = {kDefaultFpr});

nlohmann::json to_json(const EvalReport& report);
/// Line-delimited (fpr, tpr, threshold) records.
std::string roc_tsv(const EvalReport& report);
/// Minimal SVG plot of the ROC curve.
std::string roc_svg(const EvalReport& report, const std::string& title);

}  // namespace speakloc

#include "speakloc/errors.hpp"
#include "speakloc/evalkit.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace speakloc;

namespace {

// Independent reference: P(score+ > score-) + P(tie) / 2 over all pairs.
double pair_count(const std::vector<ScoredLabel>& data) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& p : data) {
    if (p.label != 1) continue;
    for (const auto& n : data) {
      if (n.label != 0) continue;
      pairs += 1.0;
      wins += p.score > n.score ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

FaceBox box(double x1, double y1, double x2, double y2, const std::string& clip = "c",
            Index frame = 0) {
  FaceBox b;
  b.clip_id = clip;
  b.frame_index = frame;
  b.x1 = x1;
  b.y1 = y1;
  b.x2 = x2;
  b.y2 = y2;
  return b;
}

const std::vector<ScoredLabel> kFourPoints{{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.1, 0}};

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("perfect separation gives area 1") {
  CHECK(roc_auc({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}}).auroc == doctest::Approx(1.0));
}

TEST_CASE("scores independent of labels give area near one half") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredLabel> data(10000);
  for (auto& d : data) d = {u(rng), static_cast<int>(rng() % 2)};
  CHECK(std::abs(roc_auc(data).auroc - 0.5) <= 0.05);
}

TEST_CASE("four point set") {
  CHECK(pair_count(kFourPoints) == doctest::Approx(0.75));
  CHECK(roc_auc(kFourPoints).auroc == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("area equals the pair-counting probability, ties included") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredLabel> data(2 + rng() % 40);
    for (auto& d : data) d = {static_cast<double>(rng() % 7) / 6.0, static_cast<int>(rng() % 2)};
    data[0].label = 0;
    data[1].label = 1;
    CHECK(std::abs(roc_auc(data).auroc - pair_count(data)) <= 1e-9);
  }
}

TEST_CASE("area is invariant under strictly monotone transforms") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredLabel> data(300);
  for (auto& d : data) d = {u(rng), u(rng) < d.score ? 1 : 0};
  data[0].label = 0;
  data[1].label = 1;
  auto moved = data;
  for (auto& d : moved) d.score = std::exp(3.0 * d.score) - 7.0;
  CHECK(roc_auc(moved).auroc == doctest::Approx(roc_auc(data).auroc).epsilon(1e-12));
}

TEST_CASE("a single class leaves the metric undefined") {
  CHECK_THROWS_AS(roc_auc({{0.3, 1}, {0.6, 1}}), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc(std::vector<ScoredLabel>{}), UndefinedMetricError);
}

TEST_CASE("tpr at a fixed fpr") {
  CHECK(tpr_at_fpr(roc_auc(kFourPoints), 1.0) == doctest::Approx(1.0));
  const auto perfect = roc_auc({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}});
  for (double f : {0.01, 0.315, 0.5, 1.0}) CHECK(tpr_at_fpr(perfect, f) == doctest::Approx(1.0));
  // Thresholds 0.9, 0.8, 0.7 give (0, .5), (.5, .5), (.5, 1): fpr 0.5 sits on
  // a vertical run, so the higher tpr applies.
  CHECK(tpr_at_fpr(roc_auc(kFourPoints), 0.5) == doctest::Approx(1.0));
  // Halfway along the (0, .5) -> (.5, .5) run.
  CHECK(tpr_at_fpr(roc_auc(kFourPoints), 0.25) == doctest::Approx(0.5));
  CHECK_THROWS(tpr_at_fpr(perfect, 0.0));
  CHECK_THROWS(tpr_at_fpr(perfect, 1.5));
}

TEST_CASE("size buckets") {
  CHECK(size_bucket(box(0, 0, 1, 1)) == SizeBucket::kLarge);
  CHECK(size_bucket(box(0, 0, 0.1, 0.1)) == SizeBucket::kSmall);
  CHECK(size_bucket(box(0, 0, 0.3, 0.4)) == SizeBucket::kMedium);
}

TEST_CASE("density buckets") {
  CHECK(density_bucket(0) == DensityBucket::kSparse);
  CHECK(density_bucket(4) == DensityBucket::kSparse);
  CHECK(density_bucket(5) == DensityBucket::kModerate);
  CHECK(density_bucket(15) == DensityBucket::kModerate);
  CHECK(density_bucket(16) == DensityBucket::kCrowded);
}

TEST_CASE("buckets partition their input") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  std::vector<FaceBox> boxes;
  for (int i = 0; i < 400; ++i) {
    const double x = u(rng), y = u(rng);
    boxes.push_back(box(x, y, x + u(rng) + 1e-3, y + u(rng) + 1e-3, "c" + std::to_string(i % 3),
                        static_cast<Index>(rng() % 8)));
  }
  for (const auto& grouping : {bucket_by_size(boxes).size() > 0 ? 0 : 0}) (void)grouping;
  auto check_partition = [&](const auto& groups) {
    std::multiset<std::size_t> seen;
    for (const auto& [bucket, idx] : groups) seen.insert(idx.begin(), idx.end());
    CHECK(seen.size() == boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) CHECK(seen.count(i) == 1);
  };
  check_partition(bucket_by_size(boxes));
  check_partition(bucket_by_density(boxes));
}

TEST_CASE("object proposals overlapping a face are dropped") {
  const std::vector<FaceBox> faces{box(0.0, 0.0, 0.2, 0.2)};
  CHECK(iou_filter({box(0.0, 0.0, 0.2, 0.2)}, faces, 0.99).empty());
  CHECK(iou_filter({box(0.5, 0.5, 0.7, 0.7)}, faces, 0.3).size() == 1);
  // Shifted by half a side: intersection 1/2, union 3/2.
  const auto half = box(0.1, 0.0, 0.3, 0.2);
  CHECK(iou(half, faces[0]) == doctest::Approx(1.0 / 3.0));
  CHECK(iou_filter({half}, faces, 0.3).empty());
  const auto kept = iou_filter({half}, faces, 0.4);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].gt_speaking == std::optional<bool>(false));
  // Faces of other frames do not count.
  CHECK(iou_filter({box(0.0, 0.0, 0.2, 0.2, "c", 1)}, faces, 0.3).size() == 1);
  CHECK_THROWS_AS(iou_filter({half}, faces, 1.5), ArgumentError);
}

TEST_CASE("segment majority vote, ties positive") {
  CHECK(majority_vote_segments(std::vector<int>(24, 1), 24) == std::vector<int>{1});
  std::vector<int> twelve(24, 0);
  std::fill(twelve.begin(), twelve.begin() + 12, 1);
  CHECK(majority_vote_segments(twelve, 24) == std::vector<int>{1});
  std::vector<int> eleven(24, 0);
  std::fill(eleven.begin(), eleven.begin() + 11, 1);
  CHECK(majority_vote_segments(eleven, 24) == std::vector<int>{0});
  CHECK(majority_vote_segments(twelve, 1.0, 24.0) == std::vector<int>{1});
}

TEST_CASE("report buckets and undefined notes") {
  std::vector<InstanceScore> scores;
  for (int i = 0; i < 8; ++i) {
    InstanceScore s;
    s.box = i < 4 ? box(0, 0, 0.1, 0.1, "c", i) : box(0, 0, 0.6, 0.6, "c", i);
    s.box.gt_speaking = i % 2 == 0;
    s.score = i % 2 == 0 ? 0.9 : 0.1;
    scores.push_back(s);
  }
  for (int i = 8; i < 10; ++i) {
    InstanceScore s;
    s.box = box(0, 0, 0.3, 0.3, "c", i);
    s.box.gt_speaking = true;
    s.score = 0.5;
    scores.push_back(s);
  }
  const auto report = evaluate(scores);
  CHECK(report.auroc == doctest::Approx(1.0));
  CHECK(report.positives == 6);
  CHECK(report.negatives == 4);
  CHECK(report.buckets.count("size/small") == 1);
  CHECK(report.buckets.count("size/large") == 1);
  CHECK(report.notes.count("size/medium") == 1);
  CHECK(report.tpr_at_fpr.count(kDefaultFpr) == 1);
  const auto j = to_json(report);
  CHECK(j.contains("auroc"));
  CHECK(roc_tsv(report).find('\t') != std::string::npos);
  CHECK(roc_svg(report, "t").rfind("<svg", 0) == 0);
}

}

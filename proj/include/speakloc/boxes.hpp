#pragma once

#include "speakloc/volume.hpp"

#include <optional>
#include <string>

namespace speakloc {

/// A face (or object) proposal in one frame, normalised coordinates.
struct FaceBox {
  std::string clip_id;
  Index frame_index = 0;
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 1.0;
  double y2 = 1.0;
  std::string track_id;            // empty when untracked
  std::optional<bool> gt_speaking;  // ground truth, when known

  bool valid() const {
    return x1 < x2 && y1 < y2 && x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0;
  }
  double area() const { return (x2 - x1) * (y2 - y1); }
};

enum class ScoreSource { kCam, kMil };

struct InstanceScore {
  FaceBox box;
  double score = 0.0;
  ScoreSource source = ScoreSource::kMil;
};

/// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct PixelRect {
  Index y0 = 0;
  Index y1 = 0;
  Index x0 = 0;
  Index x1 = 0;
  bool empty() const { return y1 <= y0 || x1 <= x0; }
};

/// Rasterises a normalised box onto a height x width grid: edges are rounded
/// outward, clipped to the grid, and an empty result grows to one pixel.
PixelRect rasterize(const FaceBox& box, Index height, Index width);

}  // namespace speakloc

#include "speakloc/boxes.hpp"

#include <algorithm>
#include <cmath>

namespace speakloc {

PixelRect rasterize(const FaceBox& box, Index height, Index width) {
  constexpr double kEps = 1e-9;
  auto axis = [](double lo, double hi, Index n, Index* a, Index* b) {
    const double scale = static_cast<double>(n);
    *a = std::clamp(static_cast<Index>(std::floor(lo * scale + kEps)), Index{0}, n - 1);
    *b = std::clamp(static_cast<Index>(std::ceil(hi * scale - kEps)), Index{0}, n);
    if (*b <= *a) *b = *a + 1;
  };
  PixelRect r;
  axis(box.y1, box.y2, height, &r.y0, &r.y1);
  axis(box.x1, box.x2, width, &r.x0, &r.x1);
  return r;
}

}  // namespace speakloc

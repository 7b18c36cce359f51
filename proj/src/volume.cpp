#include "speakloc/volume.hpp"

#include <algorithm>
#include <cmath>

namespace speakloc {

Extent conv_output_extent(const Extent& in, const Triple& kernel, const Triple& stride) {
  auto axis = [](Index n, Index k, Index s) { return (n + 2 * (k / 2) - k) / s + 1; };
  return {axis(in.frames, kernel[0], stride[0]), axis(in.height, kernel[1], stride[1]),
          axis(in.width, kernel[2], stride[2])};
}

template <typename Scalar>
Mat<Scalar> im2col(const Volume<Scalar>& input, const Triple& kernel, const Triple& stride) {
  const Extent out = conv_output_extent(input.extent, kernel, stride);
  const Index cin = input.channels();
  const Index taps = kernel[0] * kernel[1] * kernel[2];
  Mat<Scalar> patches = Mat<Scalar>::Zero(out.positions(), taps * cin);
  const Index pt = kernel[0] / 2, py = kernel[1] / 2, px = kernel[2] / 2;
  const Extent& in = input.extent;

  Index r = 0;
  for (Index t = 0; t < out.frames; ++t) {
    for (Index y = 0; y < out.height; ++y) {
      for (Index x = 0; x < out.width; ++x, ++r) {
        Index tap = 0;
        for (Index dt = 0; dt < kernel[0]; ++dt) {
          const Index it = t * stride[0] - pt + dt;
          for (Index dy = 0; dy < kernel[1]; ++dy) {
            const Index iy = y * stride[1] - py + dy;
            for (Index dx = 0; dx < kernel[2]; ++dx, ++tap) {
              const Index ix = x * stride[2] - px + dx;
              if (it < 0 || it >= in.frames || iy < 0 || iy >= in.height || ix < 0 ||
                  ix >= in.width) {
                continue;
              }
              patches.row(r).segment(tap * cin, cin) = input.values.row(input.row(it, iy, ix));
            }
          }
        }
      }
    }
  }
  return patches;
}

template <typename Scalar>
Volume<Scalar> col2im(const Mat<Scalar>& patches, const Extent& in, Index channels,
                      const Triple& kernel, const Triple& stride) {
  const Extent out = conv_output_extent(in, kernel, stride);
  Volume<Scalar> result(in, channels);
  const Index pt = kernel[0] / 2, py = kernel[1] / 2, px = kernel[2] / 2;

  Index r = 0;
  for (Index t = 0; t < out.frames; ++t) {
    for (Index y = 0; y < out.height; ++y) {
      for (Index x = 0; x < out.width; ++x, ++r) {
        Index tap = 0;
        for (Index dt = 0; dt < kernel[0]; ++dt) {
          const Index it = t * stride[0] - pt + dt;
          for (Index dy = 0; dy < kernel[1]; ++dy) {
            const Index iy = y * stride[1] - py + dy;
            for (Index dx = 0; dx < kernel[2]; ++dx, ++tap) {
              const Index ix = x * stride[2] - px + dx;
              if (it < 0 || it >= in.frames || iy < 0 || iy >= in.height || ix < 0 ||
                  ix >= in.width) {
                continue;
              }
              result.values.row(result.row(it, iy, ix)) +=
                  patches.row(r).segment(tap * channels, channels);
            }
          }
        }
      }
    }
  }
  return result;
}

namespace {

struct Tap {
  Index lo;
  Index hi;
  double w_hi;  // weight of `hi`; `lo` gets 1 - w_hi
};

std::vector<Tap> axis_taps(Index source, Index target) {
  std::vector<Tap> taps(static_cast<std::size_t>(target));
  const double scale = static_cast<double>(source) / static_cast<double>(target);
  for (Index d = 0; d < target; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(source - 1));
    const auto lo = static_cast<Index>(std::floor(s));
    const Index hi = std::min(lo + 1, source - 1);
    taps[static_cast<std::size_t>(d)] = {lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename Scalar>
Volume<Scalar> resize_trilinear(const Volume<Scalar>& input, const Extent& target) {
  const auto tt = axis_taps(input.extent.frames, target.frames);
  const auto ty = axis_taps(input.extent.height, target.height);
  const auto tx = axis_taps(input.extent.width, target.width);
  Volume<Scalar> out(target, input.channels());

  for (Index t = 0; t < target.frames; ++t) {
    const Tap& a = tt[static_cast<std::size_t>(t)];
    for (Index y = 0; y < target.height; ++y) {
      const Tap& b = ty[static_cast<std::size_t>(y)];
      for (Index x = 0; x < target.width; ++x) {
        const Tap& c = tx[static_cast<std::size_t>(x)];
        auto dst = out.values.row(out.row(t, y, x));
        const Index ts[2] = {a.lo, a.hi};
        const Index ys[2] = {b.lo, b.hi};
        const Index xs[2] = {c.lo, c.hi};
        const double wt[2] = {1.0 - a.w_hi, a.w_hi};
        const double wy[2] = {1.0 - b.w_hi, b.w_hi};
        const double wx[2] = {1.0 - c.w_hi, c.w_hi};
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            for (int k = 0; k < 2; ++k) {
              const double w = wt[i] * wy[j] * wx[k];
              if (w == 0.0) continue;
              dst += static_cast<Scalar>(w) * input.values.row(input.row(ts[i], ys[j], xs[k]));
            }
          }
        }
      }
    }
  }
  return out;
}

template Mat<float> im2col(const Volume<float>&, const Triple&, const Triple&);
template Mat<double> im2col(const Volume<double>&, const Triple&, const Triple&);
template Volume<float> col2im(const Mat<float>&, const Extent&, Index, const Triple&,
                              const Triple&);
template Volume<double> col2im(const Mat<double>&, const Extent&, Index, const Triple&,
                               const Triple&);
template Volume<float> resize_trilinear(const Volume<float>&, const Extent&);
template Volume<double> resize_trilinear(const Volume<double>&, const Extent&);

}  // namespace speakloc

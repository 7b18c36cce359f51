#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace speakloc {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Triple = std::array<Index, 3>;

/// Spatiotemporal extent of a volume (frames x height x width).
struct Extent {
  Index frames = 0;
  Index height = 0;
  Index width = 0;

  Index plane() const { return height * width; }
  Index positions() const { return frames * height * width; }
  friend bool operator==(const Extent&, const Extent&) = default;
};

/// Channels-last spatiotemporal volume. Row r of `values` holds the channel
/// vector at position r = (t * height + y) * width + x.
template <typename Scalar>
struct Volume {
  Extent extent;
  Mat<Scalar> values;

  Volume() = default;
  Volume(Extent e, Index channels)
      : extent(e), values(Mat<Scalar>::Zero(e.positions(), channels)) {}
  Volume(Extent e, Mat<Scalar> v) : extent(e), values(std::move(v)) {}

  Index channels() const { return values.cols(); }
  Index row(Index t, Index y, Index x) const {
    return (t * extent.height + y) * extent.width + x;
  }
  auto frame(Index t) { return values.middleRows(t * extent.plane(), extent.plane()); }
  auto frame(Index t) const {
    return values.middleRows(t * extent.plane(), extent.plane());
  }
  auto frames(Index t0, Index n) {
    return values.middleRows(t0 * extent.plane(), n * extent.plane());
  }
  auto frames(Index t0, Index n) const {
    return values.middleRows(t0 * extent.plane(), n * extent.plane());
  }

  template <typename Other>
  Volume<Other> cast() const {
    return Volume<Other>(extent, values.template cast<Other>());
  }
  bool all_finite() const { return values.allFinite(); }
};

/// Output extent of a strided convolution with "same" padding (kernel / 2).
Extent conv_output_extent(const Extent& in, const Triple& kernel, const Triple& stride);

/// Gathers convolution patches: one row per output position, each row the
/// concatenation of the input channel vectors under the kernel window
/// (ordered dt, dy, dx). Out-of-range taps are zero.
template <typename Scalar>
Mat<Scalar> im2col(const Volume<Scalar>& input, const Triple& kernel, const Triple& stride);

/// Adjoint of im2col: scatter-adds patch gradients back onto an input-shaped
/// volume.
template <typename Scalar>
Volume<Scalar> col2im(const Mat<Scalar>& patches, const Extent& in, Index channels,
                      const Triple& kernel, const Triple& stride);

/// Trilinear resize using pixel-centre alignment with edge clamping. Every
/// channel is resized independently.
template <typename Scalar>
Volume<Scalar> resize_trilinear(const Volume<Scalar>& input, const Extent& target);

}  // namespace speakloc

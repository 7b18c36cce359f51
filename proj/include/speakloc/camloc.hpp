#pragma once

// Gradient-weighted class activation maps over a backbone activation volume,
// clip-level normalisation at frame resolution, and box scoring.

#include "speakloc/boxes.hpp"
#include "speakloc/hica.hpp"
#include "speakloc/volume.hpp"

#include <array>
#include <string>
#include <vector>

namespace speakloc {

/// Non-negative saliency over the activation grid of one clip (one channel).
struct ClassActivationMap {
  Volume<double> values;
  LayerTag source_layer;
  std::string clip_id;
};

/// Values in [0, 1] at frame resolution. `degenerate` is set when the raw
/// map was constant and the result is all zeros.
struct NormalizedCam {
  Volume<double> values;
  bool degenerate = false;
};

/// What the gradients are taken of: the segment posterior (default) or its
/// pre-sigmoid logit.
enum class CamTarget { kPosterior, kLogit };

/// Per-segment filter weights: row i holds, for every channel m, the mean
/// over all activation positions of d posterior_i / d activation. `trace`
/// must come from a forward pass with caches.
template <typename Scalar>
Mat<double> filter_weights(const HicaModel<Scalar>& model,
                           const typename HicaModel<Scalar>::Trace& trace, const LayerTag& tag,
                           CamTarget target = CamTarget::kPosterior);

/// ReLU(sum_m weights(m) * activation(., m)) at every position, as a
/// one-channel volume. Throws ArgumentError when the activation has no
/// spatial axes or the weight count differs from the channel count.
Volume<double> combine_filters(const Volume<double>& activation, const Vec<double>& weights);

/// CAM of a clip: frames of segment i use the weights of posterior i.
template <typename Scalar>
ClassActivationMap compute_cam(const HicaModel<Scalar>& model, const Volume<Scalar>& clip,
                               const LayerTag& tag, const std::string& clip_id = {});

/// Trilinear interpolation to `target`, then division by (max - min) of the
/// whole clip and clamping to [0, 1]. Throws ArgumentError when the target is
/// smaller than the source along any axis.
NormalizedCam normalize_and_upsample(const ClassActivationMap& cam, const Extent& target,
                                     double epsilon = 1e-8);

/// Max of the normalised map inside the box (rounded outward, at least one
/// pixel) on its frame.
InstanceScore score_face(const NormalizedCam& cam, const FaceBox& box);

struct OverlayOptions {
  double opacity = 0.6;  // blend weight at CAM value 1
};

/// RGB frames in [0, 1]: each pixel blends the input towards a jet colour by
/// opacity * cam value. Grey inputs are replicated to three channels.
Volume<float> render_overlay(const Volume<float>& frames, const NormalizedCam& cam,
                             const OverlayOptions& options = {});

/// Jet colour map, value in [0, 1].
std::array<float, 3> jet(double value);

/// Writes each frame as <dir>/<prefix>_<frame>.ppm (binary P6).
void write_ppm_sequence(const std::string& dir, const std::string& prefix,
                        const Volume<float>& rgb);

}  // namespace speakloc

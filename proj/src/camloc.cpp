#include "speakloc/camloc.hpp"

#include "speakloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace speakloc {

template <typename Scalar>
Mat<double> filter_weights(const HicaModel<Scalar>& model,
                           const typename HicaModel<Scalar>::Trace& trace, const LayerTag& tag,
                           CamTarget target) {
  const Volume<Scalar>& activation = trace.activation(tag);
  const Index k = trace.logits.size();
  const auto z = static_cast<double>(activation.extent.positions());
  const Vec<Scalar> p = trace.posteriors();

  Mat<double> weights(k, activation.channels());
  for (Index i = 0; i < k; ++i) {
    Vec<Scalar> dlogits = Vec<Scalar>::Zero(k);
    dlogits(i) = target == CamTarget::kLogit ? Scalar(1) : p(i) * (Scalar(1) - p(i));
    Volume<Scalar> grad;
    typename HicaModel<Scalar>::BackwardOptions options;
    options.stop_at = tag;
    options.activation_grad = &grad;
    model.backward(trace, dlogits, nullptr, options);
    weights.row(i) = grad.values.template cast<double>().colwise().sum() / z;
  }
  return weights;
}

template Mat<double> filter_weights(const HicaModel<float>&, const HicaModel<float>::Trace&,
                                    const LayerTag&, CamTarget);
template Mat<double> filter_weights(const HicaModel<double>&, const HicaModel<double>::Trace&,
                                    const LayerTag&, CamTarget);

Volume<double> combine_filters(const Volume<double>& activation, const Vec<double>& weights) {
  if (activation.extent.height * activation.extent.width <= 1) {
    throw ArgumentError("CAM source layer has no spatial axes");
  }
  if (weights.size() != activation.channels()) {
    throw ArgumentError("one filter weight per channel is required");
  }
  Volume<double> out(activation.extent, activation.values * weights);
  out.values = out.values.cwiseMax(0.0);
  return out;
}

template <typename Scalar>
ClassActivationMap compute_cam(const HicaModel<Scalar>& model, const Volume<Scalar>& clip,
                               const LayerTag& tag, const std::string& clip_id) {
  const auto trace = model.forward(clip, true);
  const Mat<double> weights = filter_weights(model, trace, tag);
  const Volume<double> activation = trace.activation(tag).template cast<double>();
  const Index k = weights.rows();
  if (activation.extent.frames % k != 0) {
    throw ArgumentError("activation frames do not divide into segments at layer " + tag.name());
  }
  const Index per_segment = activation.extent.frames / k;

  ClassActivationMap cam;
  cam.source_layer = tag;
  cam.clip_id = clip_id;
  cam.values = Volume<double>(activation.extent, 1);
  for (Index i = 0; i < k; ++i) {
    Volume<double> part(Extent{per_segment, activation.extent.height, activation.extent.width},
                        Mat<double>(activation.frames(i * per_segment, per_segment)));
    cam.values.frames(i * per_segment, per_segment) =
        combine_filters(part, weights.row(i).transpose()).values;
  }
  return cam;
}

template ClassActivationMap compute_cam(const HicaModel<float>&, const Volume<float>&,
                                        const LayerTag&, const std::string&);
template ClassActivationMap compute_cam(const HicaModel<double>&, const Volume<double>&,
                                        const LayerTag&, const std::string&);

NormalizedCam normalize_and_upsample(const ClassActivationMap& cam, const Extent& target,
                                     double epsilon) {
  const Extent& src = cam.values.extent;
  if (target.frames < src.frames || target.height < src.height || target.width < src.width) {
    throw ArgumentError("CAM target resolution must not be smaller than the source");
  }
  if (cam.values.channels() != 1) throw ArgumentError("CAM must have a single channel");
  NormalizedCam out;
  out.values = resize_trilinear(cam.values, target);
  const double range = out.values.values.maxCoeff() - out.values.values.minCoeff();
  if (!(range >= epsilon)) {
    out.values.values.setZero();
    out.degenerate = true;
    return out;
  }
  out.values.values = (out.values.values / range).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

InstanceScore score_face(const NormalizedCam& cam, const FaceBox& box) {
  const Extent& e = cam.values.extent;
  if (box.frame_index < 0 || box.frame_index >= e.frames) {
    throw ArgumentError("box frame " + std::to_string(box.frame_index) + " is outside the clip (" +
                        std::to_string(e.frames) + " frames)");
  }
  if (!(box.x1 < box.x2) || !(box.y1 < box.y2)) {
    throw ArgumentError("box coordinates must satisfy x1 < x2 and y1 < y2");
  }
  const PixelRect r = rasterize(box, e.height, e.width);
  double best = 0.0;
  for (Index y = r.y0; y < r.y1; ++y) {
    for (Index x = r.x0; x < r.x1; ++x) {
      best = std::max(best, cam.values.values(cam.values.row(box.frame_index, y, x), 0));
    }
  }
  return {box, best, ScoreSource::kCam};
}

std::array<float, 3> jet(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  auto ramp = [](double x) { return static_cast<float>(std::clamp(1.5 - std::abs(x), 0.0, 1.0)); };
  return {ramp(4.0 * v - 3.0), ramp(4.0 * v - 2.0), ramp(4.0 * v - 1.0)};
}

Volume<float> render_overlay(const Volume<float>& frames, const NormalizedCam& cam,
                             const OverlayOptions& options) {
  if (!(frames.extent == cam.values.extent)) {
    throw ArgumentError("frames and CAM differ in length or resolution");
  }
  if (frames.channels() != 1 && frames.channels() != 3) {
    throw ArgumentError("overlay frames must have one or three channels");
  }
  Volume<float> out(frames.extent, 3);
  for (Index r = 0; r < frames.values.rows(); ++r) {
    const double c = cam.values.values(r, 0);
    const auto w = static_cast<float>(options.opacity * c);
    const auto colour = jet(c);
    for (Index ch = 0; ch < 3; ++ch) {
      const float in = frames.values(r, frames.channels() == 1 ? 0 : ch);
      out.values(r, ch) = (1.0f - w) * in + w * colour[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

void write_ppm_sequence(const std::string& dir, const std::string& prefix,
                        const Volume<float>& rgb) {
  if (rgb.channels() != 3) throw ArgumentError("PPM output needs three channels");
  std::filesystem::create_directories(dir);
  const Extent& e = rgb.extent;
  for (Index t = 0; t < e.frames; ++t) {
    char name[64];
    std::snprintf(name, sizeof name, "_%04ld.ppm", static_cast<long>(t));
    const std::string path = (std::filesystem::path(dir) / (prefix + name)).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << "P6\n" << e.width << ' ' << e.height << "\n255\n";
    for (Index y = 0; y < e.height; ++y) {
      for (Index x = 0; x < e.width; ++x) {
        for (Index ch = 0; ch < 3; ++ch) {
          const float v = std::clamp(rgb.values(rgb.row(t, y, x), ch), 0.0f, 1.0f);
          out.put(static_cast<char>(std::lround(v * 255.0f)));
        }
      }
    }
    if (!out) throw DataError("failed writing " + path);
  }
}

}  // namespace speakloc

#include "speakloc/milhead.hpp"

#include "speakloc/errors.hpp"
#include "speakloc/formats.hpp"
#include "speakloc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace speakloc {

// ------------------------------------------------------------- bag pooling

BagPosterior pool_bag(const std::vector<std::vector<double>>& scores) {
  double sum = 0.0;
  double sum_sq = 0.0;
  bool any = false;
  for (const auto& frame : scores) {
    if (frame.empty()) continue;
    const double m = *std::max_element(frame.begin(), frame.end());
    sum += m;
    sum_sq += m * m;
    any = true;
  }
  if (!any) return {0.0, true};
  return {sum > 0.0 ? sum_sq / sum : 0.0, false};
}

std::vector<double> pool_bag_gradient(const std::vector<double>& frame_max) {
  const double sum = std::accumulate(frame_max.begin(), frame_max.end(), 0.0);
  std::vector<double> out(frame_max.size(), 0.0);
  if (!(sum > 0.0)) return out;
  double sum_sq = 0.0;
  for (double m : frame_max) sum_sq += m * m;
  const double value = sum_sq / sum;
  for (std::size_t f = 0; f < frame_max.size(); ++f) out[f] = (2.0 * frame_max[f] - value) / sum;
  return out;
}

// ---------------------------------------------------------------- ROI pool

template <typename Scalar>
RoiPoolResult roi_pool(const Volume<Scalar>& embedding, Index frame, const FaceBox& box,
                       Index pool) {
  const Extent& e = embedding.extent;
  if (frame < 0 || frame >= e.frames) throw ArgumentError("ROI frame outside the embedding");
  if (pool < 1) throw ArgumentError("ROI pool size must be positive");
  const PixelRect r = rasterize(box, e.height, e.width);
  const Index h = r.y1 - r.y0;
  const Index w = r.x1 - r.x0;
  const Index channels = embedding.channels();

  RoiPoolResult out;
  out.features.resize(pool * pool * channels);
  out.argmax_rows.assign(static_cast<std::size_t>(pool * pool * channels), 0);
  for (Index by = 0; by < pool; ++by) {
    const Index ys = r.y0 + (by * h) / pool;
    const Index ye = std::max(ys + 1, r.y0 + ((by + 1) * h + pool - 1) / pool);
    for (Index bx = 0; bx < pool; ++bx) {
      const Index xs = r.x0 + (bx * w) / pool;
      const Index xe = std::max(xs + 1, r.x0 + ((bx + 1) * w + pool - 1) / pool);
      const Index base = (by * pool + bx) * channels;
      for (Index c = 0; c < channels; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        Index best_row = 0;
        for (Index y = ys; y < ye; ++y) {
          for (Index x = xs; x < xe; ++x) {
            const Index row = embedding.row(frame, y, x);
            const auto v = static_cast<double>(embedding.values(row, c));
            if (v > best) {
              best = v;
              best_row = row;
            }
          }
        }
        out.features(base + c) = best;
        out.argmax_rows[static_cast<std::size_t>(base + c)] = best_row;
      }
    }
  }
  return out;
}

template RoiPoolResult roi_pool(const Volume<float>&, Index, const FaceBox&, Index);
template RoiPoolResult roi_pool(const Volume<double>&, Index, const FaceBox&, Index);

Index nearest_embed_frame(Index input_frame, double input_fps, double embed_fps,
                          Index embed_frames) {
  const double centre = (static_cast<double>(input_frame) + 0.5) * embed_fps / input_fps - 0.5;
  const auto tau = static_cast<Index>(std::floor(centre + 0.5));
  return std::clamp<Index>(tau, 0, embed_frames - 1);
}

// ------------------------------------------------------------------ model

void MilConfig::validate() const {
  if (channels < 1 || pool < 1 || audio_dim < 1 || audio_hidden < 1 || fusion_hidden < 1) {
    throw ConfigError("MIL head sizes must be positive");
  }
  for (Index h : hidden) {
    if (h < 1) throw ConfigError("MIL hidden layer sizes must be positive");
  }
}

void to_json(nlohmann::json& j, const MilConfig& c) {
  j = {{"channels", c.channels},         {"pool", c.pool},
       {"hidden", c.hidden},             {"audio_dim", c.audio_dim},
       {"audio_hidden", c.audio_hidden}, {"fusion_hidden", c.fusion_hidden}};
}

void from_json(const nlohmann::json& j, MilConfig& c) {
  c.channels = j.at("channels").get<Index>();
  c.pool = j.at("pool").get<Index>();
  c.hidden = j.at("hidden").get<std::vector<Index>>();
  c.audio_dim = j.at("audio_dim").get<Index>();
  c.audio_hidden = j.at("audio_hidden").get<Index>();
  c.fusion_hidden = j.at("fusion_hidden").get<Index>();
}

MilModel MilModel::build(const MilConfig& config, std::uint64_t seed) {
  config.validate();
  MilModel m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  m.finetune = nn::Conv3d<float>(config.channels, config.channels, {3, 3, 3}, {1, 1, 1});
  m.finetune.init(rng);
  Index in = config.pool * config.pool * config.channels;
  for (Index h : config.hidden) {
    m.scorer.emplace_back(in, h);
    m.scorer.back().init(rng);
    in = h;
  }
  m.scorer.emplace_back(in, 1);
  m.scorer.back().init(rng);
  m.audio_fc = nn::Dense<float>(config.audio_dim, config.audio_hidden);
  m.audio_fc.init(rng);
  m.fusion.emplace_back(config.audio_hidden + config.channels, config.fusion_hidden);
  m.fusion.back().init(rng);
  m.fusion.emplace_back(config.fusion_hidden, 1);
  m.fusion.back().init(rng);
  return m;
}

MilModel MilModel::zeros_like() const {
  MilModel z;
  z.config_ = config_;
  z.finetune = finetune.zeros_like();
  for (const auto& d : scorer) z.scorer.push_back(d.zeros_like());
  z.audio_fc = audio_fc.zeros_like();
  for (const auto& d : fusion) z.fusion.push_back(d.zeros_like());
  return z;
}

Volume<float> MilModel::refine(const Volume<float>& embedding,
                               nn::Conv3d<float>::Cache* cache) const {
  if (embedding.channels() != config_.channels) {
    throw ArgumentError("embedding has " + std::to_string(embedding.channels()) +
                        " channels, the MIL head expects " + std::to_string(config_.channels));
  }
  Volume<float> out = finetune.forward(embedding, cache);
  nn::relu_inplace(out.values);
  return out;
}

namespace {

// Forward state of a dense stack with ReLU between layers.
struct MlpTrace {
  std::vector<Mat<float>> inputs;  // input of each layer
  Mat<float> output;
};

MlpTrace mlp_forward(const std::vector<nn::Dense<float>>& layers, Mat<float> x) {
  MlpTrace t;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    t.inputs.push_back(x);
    x = layers[i].forward(x);
    if (i + 1 < layers.size()) nn::relu_inplace(x);
  }
  t.output = std::move(x);
  return t;
}

Mat<float> mlp_backward(const std::vector<nn::Dense<float>>& layers, const MlpTrace& t,
                        Mat<float> dy, std::vector<nn::Dense<float>>* grads) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) nn::relu_backward(t.inputs[i + 1], dy);
    dy = layers[i].backward(t.inputs[i], dy, grads ? &(*grads)[i] : nullptr);
  }
  return dy;
}

struct VadTrace {
  Mat<float> audio_in;
  Mat<float> audio_hidden;  // after ReLU and masking
  Mat<float> mask;          // k x 1, 1 where the audio branch is used
  MlpTrace fusion;
};

VadTrace vad_forward(const MilModel& m, const Mat<double>& audio, const Mat<double>& visual,
                     const std::vector<bool>& has_audio, VadInputs inputs) {
  const Index k = visual.rows();
  VadTrace t;
  t.audio_in = audio.cast<float>();
  t.audio_hidden = m.audio_fc.forward(t.audio_in);
  nn::relu_inplace(t.audio_hidden);
  t.mask = Mat<float>::Ones(k, 1);
  for (Index i = 0; i < k; ++i) {
    if (!has_audio[static_cast<std::size_t>(i)] || inputs == VadInputs::kVisualOnly) {
      t.mask(i, 0) = 0.0f;
    }
  }
  t.audio_hidden = t.audio_hidden.array().colwise() * t.mask.col(0).array();
  Mat<float> joint(k, t.audio_hidden.cols() + visual.cols());
  joint.leftCols(t.audio_hidden.cols()) = t.audio_hidden;
  joint.rightCols(visual.cols()) =
      inputs == VadInputs::kAudioOnly ? Mat<float>::Zero(k, visual.cols()) : Mat<float>(visual.cast<float>());
  t.fusion = mlp_forward(m.fusion, joint);
  return t;
}

template <typename Scalar>
Mat<double> visual_summary_impl(const Volume<Scalar>& refined, Index segments,
                                std::vector<Index>* argmax_rows) {
  const Extent& e = refined.extent;
  if (segments < 1 || e.frames % segments != 0) {
    throw ArgumentError("embedding frames do not divide into segments");
  }
  const Index per = e.frames / segments;
  const Index channels = refined.channels();
  Mat<double> out = Mat<double>::Zero(segments, channels);
  if (argmax_rows != nullptr) argmax_rows->assign(static_cast<std::size_t>(e.frames * channels), 0);
  for (Index t = 0; t < e.frames; ++t) {
    for (Index c = 0; c < channels; ++c) {
      Index best = 0;
      const Scalar v = refined.frame(t).col(c).maxCoeff(&best);
      out(t / per, c) += static_cast<double>(v) / static_cast<double>(per);
      if (argmax_rows != nullptr) {
        (*argmax_rows)[static_cast<std::size_t>(t * channels + c)] = t * e.plane() + best;
      }
    }
  }
  return out;
}

Index segment_of_frame(Index frame, const MilGeometry& g, Index input_frames) {
  const Index per = input_frames / g.segments;
  return std::clamp<Index>(frame / std::max<Index>(1, per), 0, g.segments - 1);
}

Index input_frames_of(const Volume<float>& embedding, const MilGeometry& g) {
  return static_cast<Index>(
      std::llround(static_cast<double>(embedding.extent.frames) * g.input_fps / g.embed_fps));
}

}  // namespace

Mat<double> visual_summary(const Volume<float>& refined, Index segments) {
  return visual_summary_impl(refined, segments, nullptr);
}

Vec<double> MilModel::instance_scores(const Mat<double>& features) const {
  const MlpTrace t = mlp_forward(scorer, features.cast<float>());
  Vec<double> out(features.rows());
  for (Index i = 0; i < features.rows(); ++i) {
    out(i) = nn::sigmoid(static_cast<double>(t.output(i, 0)));
  }
  return out;
}

Vec<double> MilModel::vad_posteriors(const Mat<double>& audio, const Mat<double>& visual,
                                     VadInputs inputs) const {
  const std::vector<bool> has(static_cast<std::size_t>(visual.rows()), true);
  const VadTrace t = vad_forward(*this, audio, visual, has, inputs);
  Vec<double> out(visual.rows());
  for (Index i = 0; i < visual.rows(); ++i) {
    out(i) = nn::sigmoid(static_cast<double>(t.fusion.output(i, 0)));
  }
  return out;
}

// --------------------------------------------------------------- training

MilLosses mil_clip_loss(const MilModel& model, const MilClip& clip, const MilGeometry& g,
                        double alpha, VadInputs inputs, MilModel* grad,
                        Volume<float>* embedding_grad) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  const MilConfig& cfg = model.config();
  const Index k = g.segments;
  if (static_cast<Index>(clip.pos_labels.size()) != k ||
      static_cast<Index>(clip.vad_labels.size()) != k) {
    throw ArgumentError(clip.clip_id + ": one PoS and one VAD label per segment are required");
  }
  nn::Conv3d<float>::Cache conv_cache;
  const Volume<float> refined = model.refine(clip.embedding, &conv_cache);
  const Extent& e = refined.extent;
  const Index input_frames = input_frames_of(refined, g);

  // Instances.
  const auto n = static_cast<Index>(clip.boxes.size());
  const Index feat_dim = cfg.pool * cfg.pool * cfg.channels;
  Mat<double> features(n, feat_dim);
  std::vector<std::vector<Index>> argmax(static_cast<std::size_t>(n));
  std::vector<Index> box_segment(static_cast<std::size_t>(n));
  for (Index b = 0; b < n; ++b) {
    const FaceBox& box = clip.boxes[static_cast<std::size_t>(b)];
    const Index tau = nearest_embed_frame(box.frame_index, g.input_fps, g.embed_fps, e.frames);
    RoiPoolResult r = roi_pool(refined, tau, box, cfg.pool);
    features.row(b) = r.features.transpose();
    argmax[static_cast<std::size_t>(b)] = std::move(r.argmax_rows);
    box_segment[static_cast<std::size_t>(b)] = segment_of_frame(box.frame_index, g, input_frames);
  }
  const MlpTrace scorer_trace = mlp_forward(model.scorer, features.cast<float>());
  Vec<double> p(n);
  for (Index b = 0; b < n; ++b) p(b) = nn::sigmoid(static_cast<double>(scorer_trace.output(b, 0)));

  // Bags: per segment, per input frame, the argmax instance.
  MilLosses losses;
  Mat<float> dz = Mat<float>::Zero(n, 1);
  std::vector<std::map<Index, Index>> frame_best(static_cast<std::size_t>(k));
  for (Index b = 0; b < n; ++b) {
    auto& frames = frame_best[static_cast<std::size_t>(box_segment[static_cast<std::size_t>(b)])];
    const Index f = clip.boxes[static_cast<std::size_t>(b)].frame_index;
    auto it = frames.find(f);
    if (it == frames.end() || p(b) > p(it->second)) frames[f] = b;
  }
  double mil_sum = 0.0;
  std::vector<std::pair<Index, double>> mil_grads;  // (box, d loss / d m_f)
  for (Index s = 0; s < k; ++s) {
    const auto& frames = frame_best[static_cast<std::size_t>(s)];
    if (frames.empty()) continue;
    std::vector<double> m;
    std::vector<Index> who;
    for (const auto& [f, b] : frames) {
      m.push_back(p(b));
      who.push_back(b);
    }
    double sum = 0.0, sum_sq = 0.0;
    for (double v : m) {
      sum += v;
      sum_sq += v * v;
    }
    const double bag = sum_sq / sum;
    const double y = clip.pos_labels[static_cast<std::size_t>(s)];
    mil_sum += nn::bce(bag, y);
    ++losses.bags;
    const double dbag = nn::bce_grad(bag, y);
    const std::vector<double> dm = pool_bag_gradient(m);
    for (std::size_t i = 0; i < m.size(); ++i) mil_grads.push_back({who[i], dbag * dm[i]});
  }
  losses.mil = losses.bags > 0 ? mil_sum / static_cast<double>(losses.bags) : 0.0;
  if (losses.bags > 0) {
    const double scale = alpha / static_cast<double>(losses.bags);
    for (const auto& [b, d] : mil_grads) {
      dz(b, 0) += static_cast<float>(scale * d * p(b) * (1.0 - p(b)));
    }
  }

  // VAD head.
  std::vector<Index> summary_rows;
  const Mat<double> visual = visual_summary_impl(refined, k, &summary_rows);
  Mat<double> audio = Mat<double>::Zero(k, cfg.audio_dim);
  std::vector<bool> has_audio(static_cast<std::size_t>(k), false);
  for (Index s = 0; s < k && s < static_cast<Index>(clip.audio.size()); ++s) {
    const auto& a = clip.audio[static_cast<std::size_t>(s)];
    if (!a) continue;
    if (a->size() != cfg.audio_dim) {
      throw ArgumentError(clip.clip_id + ": audio embedding has dimension " +
                          std::to_string(a->size()) + ", expected " +
                          std::to_string(cfg.audio_dim));
    }
    audio.row(s) = a->transpose();
    has_audio[static_cast<std::size_t>(s)] = true;
  }
  const VadTrace vad = vad_forward(model, audio, visual, has_audio, inputs);
  Mat<float> dvad(k, 1);
  double av_sum = 0.0;
  for (Index s = 0; s < k; ++s) {
    const double z = vad.fusion.output(s, 0);
    const double y = clip.vad_labels[static_cast<std::size_t>(s)];
    av_sum += nn::bce_with_logit(z, y);
    dvad(s, 0) = static_cast<float>((1.0 - alpha) * (nn::sigmoid(z) - y) / static_cast<double>(k));
  }
  losses.av = av_sum / static_cast<double>(k);
  losses.total = alpha * losses.mil + (1.0 - alpha) * losses.av;

  if (grad == nullptr && embedding_grad == nullptr) return losses;

  // Backward.
  Volume<float> drefined(e, refined.channels());
  const Mat<float> dfeat = mlp_backward(model.scorer, scorer_trace, dz, grad ? &grad->scorer : nullptr);
  for (Index b = 0; b < n; ++b) {
    const auto& rows = argmax[static_cast<std::size_t>(b)];
    for (Index j = 0; j < feat_dim; ++j) {
      drefined.values(rows[static_cast<std::size_t>(j)], j % cfg.channels) += dfeat(b, j);
    }
  }
  const Mat<float> djoint = mlp_backward(model.fusion, vad.fusion, dvad, grad ? &grad->fusion : nullptr);
  Mat<float> daudio = djoint.leftCols(vad.audio_hidden.cols());
  daudio = daudio.array().colwise() * vad.mask.col(0).array();
  nn::relu_backward(vad.audio_hidden, daudio);
  model.audio_fc.backward(vad.audio_in, daudio, grad ? &grad->audio_fc : nullptr);
  if (inputs != VadInputs::kAudioOnly) {
    const Mat<float> dvis = djoint.rightCols(refined.channels());
    const Index per = e.frames / k;
    for (Index t = 0; t < e.frames; ++t) {
      for (Index c = 0; c < refined.channels(); ++c) {
        const Index row = summary_rows[static_cast<std::size_t>(t * refined.channels() + c)];
        drefined.values(row, c) += dvis(t / per, c) / static_cast<float>(per);
      }
    }
  }
  nn::relu_backward(refined.values, drefined.values);
  Volume<float> dembed = model.finetune.backward(conv_cache, drefined, grad ? &grad->finetune : nullptr,
                                                 embedding_grad != nullptr);
  if (embedding_grad != nullptr) *embedding_grad = std::move(dembed);
  return losses;
}

MilTrainReport joint_train(MilModel& model, std::vector<MilClip>& clips, const MilGeometry& geometry,
                           const MilTrainConfig& config, HicaModel<float>* backbone) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  if (clips.empty()) throw ArgumentError("MIL training requires at least one clip");
  if (config.end_to_end && backbone == nullptr) {
    throw ArgumentError("end-to-end training needs the backbone");
  }
  nn::Optimizer<MilModel> optimizer(model, config.optimizer);
  std::optional<nn::Optimizer<HicaModel<float>>> backbone_optimizer;
  if (config.end_to_end) backbone_optimizer.emplace(*backbone, config.optimizer);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(std::max<Index>(1, config.batch_size));
  double lr = config.optimizer.learning_rate;
  MilTrainReport report;

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    MilLosses epoch_losses;
    double weight = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      std::vector<MilModel> grads(count);
      std::vector<HicaModel<float>> backbone_grads(config.end_to_end ? count : 0);
      std::vector<MilLosses> losses(count);
      parallel_for(static_cast<Index>(count), config.workers, [&](Index b) {
        const auto ub = static_cast<std::size_t>(b);
        MilClip& clip = clips[order[start + ub]];
        grads[ub] = model.zeros_like();
        if (!config.end_to_end) {
          losses[ub] = mil_clip_loss(model, clip, geometry, config.alpha, config.vad_inputs, &grads[ub]);
          return;
        }
        const auto trace = backbone->forward(clip.frames, true);
        MilClip local = clip;
        local.embedding = trace.embedding();
        Volume<float> dembed;
        losses[ub] = mil_clip_loss(model, local, geometry, config.alpha, config.vad_inputs,
                                   &grads[ub], &dembed);
        backbone_grads[ub] = backbone->zeros_like();
        typename HicaModel<float>::BackwardOptions options;
        options.embedding_grad = &dembed;
        backbone->backward(trace, Vec<float>::Zero(trace.logits.size()), &backbone_grads[ub], options);
      });

      MilModel grad = model.zeros_like();
      double total = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        nn::accumulate(grad, grads[b], 1.0 / static_cast<double>(count));
        total += losses[b].total / static_cast<double>(count);
        epoch_losses.mil += losses[b].mil;
        epoch_losses.av += losses[b].av;
        epoch_losses.total += losses[b].total;
        epoch_losses.bags += losses[b].bags;
        weight += 1.0;
      }
      if (!std::isfinite(total) || !std::isfinite(nn::squared_norm(grad))) {
        throw NumericalError("MIL training diverged in epoch " + std::to_string(epoch) +
                             ": loss is " + std::to_string(total));
      }
      optimizer.step(model, grad);
      if (config.end_to_end) {
        HicaModel<float> bgrad = backbone->zeros_like();
        for (std::size_t b = 0; b < count; ++b) {
          nn::accumulate(bgrad, backbone_grads[b], 1.0 / static_cast<double>(count));
        }
        backbone_optimizer->step(*backbone, bgrad);
      }
    }
    epoch_losses.mil /= weight;
    epoch_losses.av /= weight;
    epoch_losses.total /= weight;
    report.epochs.push_back(epoch_losses);
    if (config.on_epoch) config.on_epoch(epoch, epoch_losses);
    lr *= config.lr_decay;
    optimizer.set_learning_rate(lr);
    if (backbone_optimizer) backbone_optimizer->set_learning_rate(lr);
  }
  if (config.end_to_end) {
    // Embeddings follow the updated backbone.
    for (auto& clip : clips) clip.embedding = backbone->forward(clip.frames, false).embedding();
  }
  return report;
}

// ---------------------------------------------------------------- scoring

std::vector<InstanceScore> score_instances(const MilModel& model, const Volume<float>& embedding,
                                           const std::vector<FaceBox>& boxes,
                                           const MilGeometry& geometry) {
  const Volume<float> refined = model.refine(embedding, nullptr);
  const Index pool = model.config().pool;
  Mat<double> features(static_cast<Index>(boxes.size()), pool * pool * refined.channels());
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Index tau = nearest_embed_frame(boxes[b].frame_index, geometry.input_fps,
                                          geometry.embed_fps, refined.extent.frames);
    features.row(static_cast<Index>(b)) = roi_pool(refined, tau, boxes[b], pool).features.transpose();
  }
  const Vec<double> p = model.instance_scores(features);
  std::vector<InstanceScore> out;
  out.reserve(boxes.size());
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    out.push_back({boxes[b], p(static_cast<Index>(b)), ScoreSource::kMil});
  }
  return out;
}

std::vector<VadPosterior> vad_scores(const MilModel& model, const Volume<float>& embedding,
                                     const std::vector<std::optional<Vec<double>>>& audio,
                                     const MilGeometry& geometry, VadInputs inputs) {
  const Index k = geometry.segments;
  const Volume<float> refined = model.refine(embedding, nullptr);
  const Mat<double> visual = visual_summary(refined, k);
  Mat<double> a = Mat<double>::Zero(k, model.config().audio_dim);
  std::vector<bool> has(static_cast<std::size_t>(k), false);
  for (Index s = 0; s < k && s < static_cast<Index>(audio.size()); ++s) {
    if (!audio[static_cast<std::size_t>(s)]) continue;
    if (audio[static_cast<std::size_t>(s)]->size() != a.cols()) {
      throw ArgumentError("audio embedding dimension mismatch");
    }
    a.row(s) = audio[static_cast<std::size_t>(s)]->transpose();
    has[static_cast<std::size_t>(s)] = true;
  }
  const VadTrace t = vad_forward(model, a, visual, has, inputs);
  std::vector<VadPosterior> out;
  for (Index s = 0; s < k; ++s) {
    out.push_back({nn::sigmoid(static_cast<double>(t.fusion.output(s, 0))),
                   !has[static_cast<std::size_t>(s)] || inputs == VadInputs::kVisualOnly});
  }
  return out;
}

// ------------------------------------------------------------ checkpoints

void save_mil_checkpoint(const std::string& path, const MilModel& model,
                         const MilGeometry& geometry) {
  nlohmann::json header;
  header["config"] = model.config();
  header["geometry"] = {{"input_fps", geometry.input_fps},
                        {"embed_fps", geometry.embed_fps},
                        {"segments", geometry.segments}};
  write_checkpoint(path, "mil", header, parameter_pointers(model));
}

MilModel load_mil_checkpoint(const std::string& path, MilGeometry* geometry) {
  Checkpoint ckpt = read_checkpoint(path, "mil");
  MilConfig config;
  MilGeometry g;
  try {
    config = ckpt.header.at("config").get<MilConfig>();
    const auto& j = ckpt.header.at("geometry");
    g.input_fps = j.at("input_fps").get<double>();
    g.embed_fps = j.at("embed_fps").get<double>();
    g.segments = j.at("segments").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad MIL header: " + e.what());
  }
  MilModel model = MilModel::build(config, 0);
  assign_parameters(model, ckpt.tensors);
  if (geometry != nullptr) *geometry = g;
  return model;
}

}  // namespace speakloc

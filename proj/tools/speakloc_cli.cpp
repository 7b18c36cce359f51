// speakloc: command line front end for label generation, synthetic data,
// training, scoring, post-processing, evaluation and CAM rendering.

#include "speakloc/camloc.hpp"
#include "speakloc/digest.hpp"
#include "speakloc/errors.hpp"
#include "speakloc/evalkit.hpp"
#include "speakloc/formats.hpp"
#include "speakloc/hica.hpp"
#include "speakloc/labelgen.hpp"
#include "speakloc/milhead.hpp"
#include "speakloc/pipeline.hpp"
#include "speakloc/postproc.hpp"
#include "speakloc/run_config.hpp"
#include "speakloc/synthbench.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace speakloc;

namespace {

// Flag values that override the config file when given.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<Index> workers;
  std::optional<double> beta, gamma, confidence, merge_gap, pos_fraction, vad_fraction, iou,
      vad_decision, alpha, lr, lr_decay, flicker, audio_noise;
  std::optional<Index> epochs, batch_size, n_clips, train_clips;
  std::optional<std::string> optimizer, vad_source, vad_inputs, layer;
  bool end_to_end = false;
};

struct Context {
  std::string config_path;
  Overrides flags;
  std::vector<std::string> argv;
  RunConfig config;
};

void log(const std::string& line) { std::cerr << "[speakloc] " << line << std::endl; }

template <typename T, typename U>
void set_if(const std::optional<T>& value, U& target) {
  if (value) target = *value;
}

RunConfig resolve_config(const Context& ctx, const std::string& command) {
  RunConfig c = ctx.config_path.empty() ? RunConfig{} : load_run_config(ctx.config_path);
  const Overrides& o = ctx.flags;
  set_if(o.seed, c.seed);
  set_if(o.workers, c.workers);
  set_if(o.beta, c.postproc.beta);
  set_if(o.gamma, c.postproc.gamma);
  if (o.vad_source) c.postproc.vad_source = parse_vad_source(*o.vad_source);
  set_if(o.confidence, c.thresholds.confidence);
  set_if(o.merge_gap, c.thresholds.merge_gap);
  set_if(o.pos_fraction, c.thresholds.pos_fraction);
  set_if(o.vad_fraction, c.thresholds.vad_fraction);
  set_if(o.iou, c.thresholds.iou);
  set_if(o.vad_decision, c.thresholds.vad_decision);
  set_if(o.layer, c.cam_layer);
  set_if(o.flicker, c.synth.mouth_flicker);
  set_if(o.audio_noise, c.synth.audio_noise_level);
  set_if(o.n_clips, c.synth.n_clips);
  set_if(o.train_clips, c.synth.train_clips);
  if (o.n_clips && !o.train_clips) c.synth.train_clips = c.synth.n_clips * 4 / 5;
  if (o.seed) c.synth.seed = *o.seed;

  // Training flags apply to the stage being run.
  if (command == "train-hica") {
    set_if(o.epochs, c.hica.epochs);
    set_if(o.batch_size, c.hica.batch_size);
    set_if(o.lr, c.hica.optimizer.learning_rate);
    set_if(o.lr_decay, c.hica.lr_decay);
    if (o.optimizer) c.hica.optimizer.kind = nn::parse_optimizer_kind(*o.optimizer);
    if (o.seed) c.hica.seed = *o.seed;
  } else if (command == "train-mil") {
    set_if(o.epochs, c.mil.epochs);
    set_if(o.batch_size, c.mil.batch_size);
    set_if(o.lr, c.mil.optimizer.learning_rate);
    set_if(o.lr_decay, c.mil.lr_decay);
    set_if(o.alpha, c.mil.alpha);
    if (o.optimizer) c.mil.optimizer.kind = nn::parse_optimizer_kind(*o.optimizer);
    if (o.vad_inputs) c.mil.vad_inputs = parse_vad_inputs(*o.vad_inputs);
    if (o.end_to_end) c.mil.end_to_end = true;
    if (o.seed) c.mil.seed = *o.seed;
  }
  c.hica.workers = c.workers;
  c.mil.workers = c.workers;
  c.validate();
  return c;
}

void write_manifest(const std::string& path, const Context& ctx, const std::string& command,
                    const nlohmann::json& extra) {
  nlohmann::json m;
  m["command"] = command;
  m["argv"] = ctx.argv;
  m["config_digest"] = config_digest(ctx.config);
  m["config"] = to_json(ctx.config);
  m["seed"] = ctx.config.seed;
  m["versions"] = build_info();
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text_file(path, m.dump(2) + "\n");
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// ---------------------------------------------------------------- labelgen

struct LabelgenArgs {
  std::string srt, alignment, out, kind = "pos";
  double t = 1.0;
  std::optional<double> duration;
};

int run_labelgen(Context& ctx, const LabelgenArgs& a) {
  ctx.config = resolve_config(ctx, "labelgen");
  const auto& th = ctx.config.thresholds;
  if (a.srt.empty() && a.alignment.empty()) {
    throw ConfigError("labelgen needs --srt, --alignment or both");
  }
  const LabelKind kind = parse_label_kind(a.kind);
  std::optional<SrtParseResult> cues;
  if (!a.srt.empty()) cues = parse_srt(read_text_file(a.srt));
  std::vector<AlignedWord> words;
  if (!a.alignment.empty()) words = read_alignment_file(a.alignment);

  double total = a.duration.value_or(0.0);
  if (!a.duration) {
    if (cues) for (const auto& c : cues->cues) total = std::max(total, c.end_s);
    for (const auto& w : words) total = std::max(total, w.end_s);
  }
  if (!(total > 0.0)) throw DataError("labelgen: total duration must be positive");

  const SpeechEstimate estimate =
      estimate_speech(cues ? &cues->cues : nullptr, a.alignment.empty() ? nullptr : &words,
                      th.confidence, th.merge_gap, total);
  const double fraction = kind == LabelKind::kPoS ? th.pos_fraction : th.vad_fraction;
  const WeakLabelSequence labels = make_labels(estimate.speech, a.t, kind, fraction);
  ensure_parent(a.out);
  write_labels_file(a.out, labels);

  Index positives = 0;
  for (int l : labels.labels) positives += l;
  log("labelgen: " + std::to_string(labels.labels.size()) + " segments, " +
      std::to_string(positives) + " positive");
  write_manifest(a.out + ".manifest.json", ctx, "labelgen",
                 {{"outputs", {a.out, label_sidecar_path(a.out)}},
                  {"discarded_fraction", estimate.discarded_fraction},
                  {"skipped_cues", cues ? cues->skipped_blocks : 0}});
  return 0;
}

// ------------------------------------------------------------------- synth

int run_synth(Context& ctx, const std::string& out) {
  ctx.config = resolve_config(ctx, "synth");
  const SynthDataset data = generate(ctx.config.synth, ctx.config.workers);
  write_dataset(out, data);
  log("synth: wrote " + std::to_string(data.clips.size()) + " clips to " + out);
  write_manifest((fs::path(out) / "manifest.json").string(), ctx, "synth",
                 {{"outputs", {out}}, {"clips", data.clips.size()}});
  return 0;
}

// -------------------------------------------------------------- train-hica

int run_train_hica(Context& ctx, const std::string& data_dir, const std::string& out) {
  ctx.config = resolve_config(ctx, "train-hica");
  const RunConfig& cfg = ctx.config;
  const Corpus corpus = load_corpus(data_dir, cfg.workers);
  const auto samples = hica_samples(corpus.select(Split::kTrain));
  if (samples.empty()) throw DataError("train-hica: no training clips in " + data_dir);

  auto model = HicaModel<float>::build(cfg.model, cfg.hica.seed);
  HicaTrainConfig tc = cfg.hica;
  tc.on_epoch = [&](Index epoch, const HicaModel<float>&) {
    log("train-hica: epoch " + std::to_string(epoch + 1) + "/" + std::to_string(tc.epochs));
  };
  const TrainReport report = train(model, samples, tc);
  ensure_parent(out);
  save_checkpoint(out, model);

  std::string curve = "# iteration\tloss\n";
  char buf[64];
  for (const auto& p : report.curve) {
    std::snprintf(buf, sizeof buf, "%ld\t%.6f\n", static_cast<long>(p.iteration), p.loss);
    curve += buf;
  }
  write_text_file(out + ".loss.tsv", curve);
  log("train-hica: loss " + std::to_string(report.initial_loss) + " -> " +
      std::to_string(report.final_loss));
  write_manifest(out + ".manifest.json", ctx, "train-hica",
                 {{"outputs", {out, out + ".loss.tsv"}},
                  {"data", data_dir},
                  {"parameter_digest", parameter_digest(model)},
                  {"initial_loss", report.initial_loss},
                  {"final_loss", report.final_loss}});
  return 0;
}

// --------------------------------------------------------------- train-mil

int run_train_mil(Context& ctx, const std::string& data_dir, const std::string& hica_path,
                  const std::string& out) {
  ctx.config = resolve_config(ctx, "train-mil");
  const RunConfig& cfg = ctx.config;
  auto backbone = load_hica_checkpoint(hica_path);
  const std::string before = parameter_digest(backbone);
  const Corpus corpus = load_corpus(data_dir, cfg.workers);
  auto clips = mil_clips(backbone, corpus.select(Split::kTrain), cfg.workers, cfg.mil.end_to_end);
  if (clips.empty()) throw DataError("train-mil: no training clips in " + data_dir);

  MilConfig head_config = cfg.mil_model;
  head_config.channels = backbone.config().embed_channels();
  auto head = MilModel::build(head_config, cfg.mil.seed);
  MilTrainConfig tc = cfg.mil;
  tc.on_epoch = [&](Index epoch, const MilLosses& l) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "train-mil: epoch %ld/%ld loss %.4f (mil %.4f, av %.4f)",
                  static_cast<long>(epoch + 1), static_cast<long>(tc.epochs), l.total, l.mil, l.av);
    log(buf);
  };
  const MilGeometry geometry = mil_geometry(backbone.config());
  const MilTrainReport report = joint_train(head, clips, geometry, tc, &backbone);
  ensure_parent(out);
  save_mil_checkpoint(out, head, geometry);
  const std::string after = parameter_digest(backbone);

  nlohmann::json outputs = {out};
  if (cfg.mil.end_to_end) {
    save_checkpoint(out + ".hica", backbone);
    outputs.push_back(out + ".hica");
  } else if (before != after) {
    throw NumericalError("train-mil: frozen backbone changed during training");
  }
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& l : report.epochs) {
    epochs.push_back({{"total", l.total}, {"mil", l.mil}, {"av", l.av}});
  }
  write_manifest(out + ".manifest.json", ctx, "train-mil",
                 {{"outputs", outputs},
                  {"data", data_dir},
                  {"backbone", hica_path},
                  {"backbone_digest_before", before},
                  {"backbone_digest_after", after},
                  {"head_digest", parameter_digest(head)},
                  {"epochs", epochs}});
  return 0;
}

// ------------------------------------------------------------------- score

struct ScoreArgs {
  std::string method, data, hica, mil, out, vad_out, split = "test";
  bool objects = false;
};

int run_score(Context& ctx, const ScoreArgs& a) {
  ctx.config = resolve_config(ctx, "score");
  const RunConfig& cfg = ctx.config;
  const auto backbone = load_hica_checkpoint(a.hica);
  const Corpus corpus = load_corpus(a.data, cfg.workers);
  const auto clips = corpus.select(parse_split(a.split));
  if (clips.empty()) throw DataError("score: no clips in split " + a.split);

  std::vector<InstanceScore> scores;
  nlohmann::json outputs = {a.out};
  if (a.method == "cam") {
    const LayerTag tag = LayerTag::parse(cfg.cam_layer, backbone.config());
    scores = score_cam(backbone, clips, tag, a.objects, cfg.thresholds.iou, cfg.workers);
  } else if (a.method == "mil") {
    if (a.mil.empty()) throw ConfigError("score --method mil needs --mil");
    const MilModel head = load_mil_checkpoint(a.mil);
    scores = score_mil(backbone, head, clips, a.objects, cfg.thresholds.iou, cfg.workers);
    if (!a.vad_out.empty()) {
      const auto vad = score_vad(backbone, head, clips, cfg.mil.vad_inputs, cfg.workers);
      std::vector<SegmentScore> rows;
      for (const auto& v : vad) rows.push_back({segment_id(v.clip_id, v.segment), v.posterior, v.label});
      ensure_parent(a.vad_out);
      write_segment_scores_file(a.vad_out, rows);
      outputs.push_back(a.vad_out);
    }
  } else {
    throw ConfigError("unknown method '" + a.method + "' (expected cam or mil)");
  }
  ensure_parent(a.out);
  write_scores_file(a.out, scores);
  log("score: " + std::to_string(scores.size()) + " boxes from " + std::to_string(clips.size()) +
      " clips");
  write_manifest(a.out + ".manifest.json", ctx, "score",
                 {{"outputs", outputs}, {"method", a.method}, {"data", a.data}, {"split", a.split},
                  {"backbone", a.hica}, {"backbone_digest", parameter_digest(backbone)}});
  return 0;
}

// ---------------------------------------------------------------- postproc

struct PostprocArgs {
  std::string scores, out, vad_mask, vad_scores;
  bool video_only = false;
};

int run_postproc(Context& ctx, const PostprocArgs& a) {
  ctx.config = resolve_config(ctx, "postproc");
  const RunConfig& cfg = ctx.config;
  const auto scores = read_scores_file(a.scores);
  std::vector<InstanceScore> out;
  if (a.video_only) {
    cfg.postproc.validate();
    out = apply_video_pp(scores, cfg.postproc.beta);
  } else {
    FrameVad vad;
    if (cfg.postproc.vad_source == VadSource::kOracle) {
      if (a.vad_mask.empty()) throw ConfigError("postproc with oracle VAD needs --vad-mask");
      vad = FrameVad::from_mask(read_vad_mask_file(a.vad_mask));
    } else {
      if (a.vad_scores.empty()) throw ConfigError("postproc with system VAD needs --vad-scores");
      // Segment posteriors broadcast to the frames of each segment.
      const auto rows = read_segment_scores_file(a.vad_scores);
      const Index per_segment = cfg.model.input_frames_per_segment();
      for (const auto& r : rows) {
        const auto cut = r.segment_id.rfind('/');
        if (cut == std::string::npos) throw DataError("bad segment id '" + r.segment_id + "'");
        const std::string clip = r.segment_id.substr(0, cut);
        const Index s = std::stol(r.segment_id.substr(cut + 1));
        for (Index f = s * per_segment; f < (s + 1) * per_segment; ++f) {
          vad.set(clip, f, r.posterior >= cfg.thresholds.vad_decision);
        }
      }
    }
    out = postprocess(scores, vad, cfg.postproc);
  }
  ensure_parent(a.out);
  write_scores_file(a.out, out);
  write_manifest(a.out + ".manifest.json", ctx, "postproc",
                 {{"outputs", {a.out}}, {"scores", a.scores}, {"video_only", a.video_only}});
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string scores, segment_scores, out_dir, title = "speakloc";
  std::vector<double> fprs{kDefaultFpr};
};

int run_eval(Context& ctx, const EvalArgs& a) {
  ctx.config = resolve_config(ctx, "eval");
  EvalReport report;
  if (!a.segment_scores.empty()) {
    std::vector<ScoredLabel> data;
    for (const auto& r : read_segment_scores_file(a.segment_scores)) data.push_back({r.posterior, r.label});
    report = roc_auc(data);
    for (double f : a.fprs) report.tpr_at_fpr[f] = tpr_at_fpr(report, f);
  } else {
    if (a.scores.empty()) throw ConfigError("eval needs --scores or --segment-scores");
    report = evaluate(read_scores_file(a.scores), a.fprs);
  }
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  nlohmann::json doc = to_json(report);
  doc["conventions"] = {
      {"score_ties", "trapezoid over tied thresholds (half credit)"},
      {"size_buckets", "small < 0.02 <= medium < 0.15 <= large (area fraction)"},
      {"density_buckets", "sparse < 5 <= moderate <= 15 < crowded (boxes per frame)"},
      {"tpr_at_fpr", "linear interpolation, highest TPR on vertical runs"}};
  write_text_file((dir / "report.json").string(), doc.dump(2) + "\n");
  write_text_file((dir / "roc.tsv").string(), roc_tsv(report));
  write_text_file((dir / "roc.svg").string(), roc_svg(report, a.title));
  char buf[96];
  std::snprintf(buf, sizeof buf, "auROC %.4f (%ld positives, %ld negatives)", report.auroc,
                static_cast<long>(report.positives), static_cast<long>(report.negatives));
  std::cout << buf << "\n";
  write_manifest((dir / "manifest.json").string(), ctx, "eval",
                 {{"outputs", {(dir / "report.json").string(), (dir / "roc.tsv").string(),
                               (dir / "roc.svg").string()}},
                  {"auroc", report.auroc}});
  return 0;
}

// -------------------------------------------------------------- cam-render

struct RenderArgs {
  std::string data, hica, clip, out_dir;
  double opacity = 0.6;
};

int run_cam_render(Context& ctx, const RenderArgs& a) {
  ctx.config = resolve_config(ctx, "cam-render");
  const auto backbone = load_hica_checkpoint(a.hica);
  const Corpus corpus = load_corpus(a.data, ctx.config.workers);
  const ClipRecord* clip = nullptr;
  for (const auto& c : corpus.clips) {
    if (c.id == a.clip) clip = &c;
  }
  if (clip == nullptr) throw DataError("cam-render: no clip '" + a.clip + "' in " + a.data);
  const LayerTag tag = LayerTag::parse(ctx.config.cam_layer, backbone.config());
  const auto cam = compute_cam(backbone, clip->frames, tag, clip->id);
  const auto norm = normalize_and_upsample(cam, clip->frames.extent);
  if (norm.degenerate) log("cam-render: map is constant for " + clip->id + ", rendering zeros");
  const auto rgb = render_overlay(clip->frames, norm, OverlayOptions{a.opacity});
  fs::create_directories(a.out_dir);
  write_ppm_sequence(a.out_dir, clip->id, rgb);
  write_manifest((fs::path(a.out_dir) / "manifest.json").string(), ctx, "cam-render",
                 {{"outputs", {a.out_dir}},
                  {"clip", clip->id},
                  {"layer", tag.name()},
                  {"degenerate", norm.degenerate},
                  {"frames", rgb.extent.frames}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speakloc: weakly supervised active speaker localisation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Context ctx;
  for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
  Overrides& o = ctx.flags;

  app.add_option("--config", ctx.config_path, "YAML run configuration")->check(CLI::ExistingFile);
  app.add_option("--workers", o.workers, "worker threads (results do not depend on it)");
  app.add_option("--seed", o.seed, "seed for every stage");

  // labelgen
  LabelgenArgs lg;
  auto* c_label = app.add_subcommand("labelgen", "segment labels from subtitles and alignment");
  c_label->add_option("--srt", lg.srt, "subtitle file")->check(CLI::ExistingFile);
  c_label->add_option("--alignment", lg.alignment, "word alignment file")->check(CLI::ExistingFile);
  c_label->add_option("--kind", lg.kind, "pos or vad")->capture_default_str();
  c_label->add_option("--t", lg.t, "segment length in seconds")->capture_default_str();
  c_label->add_option("--duration", lg.duration, "clip length in seconds");
  c_label->add_option("--confidence", o.confidence, "minimum word confidence");
  c_label->add_option("--merge-gap", o.merge_gap, "merge speech gaps shorter than this");
  c_label->add_option("--pos-fraction", o.pos_fraction, "PoS speech fraction threshold");
  c_label->add_option("--vad-fraction", o.vad_fraction, "VAD speech fraction threshold");
  c_label->add_option("--out", lg.out, "label file")->required();

  // synth
  std::string synth_out;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  c_synth->add_option("--out", synth_out, "output directory")->required();
  c_synth->add_option("--clips", o.n_clips, "number of clips");
  c_synth->add_option("--train-clips", o.train_clips, "clips in the training split");
  c_synth->add_option("--flicker", o.flicker, "cue amplitude (0 removes the visual signal)");
  c_synth->add_option("--audio-noise", o.audio_noise, "audio embedding noise level");

  // train-hica
  std::string th_data, th_out;
  auto* c_hica = app.add_subcommand("train-hica", "train the backbone on PoS labels");
  c_hica->add_option("--data", th_data, "dataset directory")->required();
  c_hica->add_option("--out", th_out, "checkpoint path")->required();

  // train-mil
  std::string tm_data, tm_hica, tm_out;
  auto* c_mil = app.add_subcommand("train-mil", "train the MIL and VAD heads");
  c_mil->add_option("--data", tm_data, "dataset directory")->required();
  c_mil->add_option("--hica", tm_hica, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  c_mil->add_option("--out", tm_out, "checkpoint path")->required();
  c_mil->add_option("--alpha", o.alpha, "weight of the MIL loss");
  c_mil->add_option("--vad-inputs", o.vad_inputs, "fused, audio or visual");
  c_mil->add_flag("--end-to-end", o.end_to_end, "also update the backbone");

  for (auto* sub : {c_hica, c_mil}) {
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--batch-size", o.batch_size, "clips per update");
    sub->add_option("--lr", o.lr, "learning rate");
    sub->add_option("--lr-decay", o.lr_decay, "per-epoch learning rate factor");
    sub->add_option("--optimizer", o.optimizer, "adam or nesterov");
  }

  // score
  ScoreArgs sc;
  auto* c_score = app.add_subcommand("score", "score face boxes");
  c_score->add_option("--method", sc.method, "cam or mil")->required();
  c_score->add_option("--data", sc.data, "dataset directory")->required();
  c_score->add_option("--hica", sc.hica, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  c_score->add_option("--mil", sc.mil, "MIL checkpoint")->check(CLI::ExistingFile);
  c_score->add_option("--split", sc.split, "train, test or all")->capture_default_str();
  c_score->add_flag("--objects", sc.objects, "also score IOU-filtered object proposals");
  c_score->add_option("--iou", o.iou, "object/face IOU above which objects are dropped");
  c_score->add_option("--layer", o.layer, "CAM layer (convN, lstmN, last_conv, last_recurrent)");
  c_score->add_option("--vad-out", sc.vad_out, "segment VAD posteriors (mil only)");
  c_score->add_option("--vad-inputs", o.vad_inputs, "fused, audio or visual");
  c_score->add_option("--out", sc.out, "score file")->required();

  // postproc
  PostprocArgs pp;
  auto* c_pp = app.add_subcommand("postproc", "apply the speaker and voice constraints");
  c_pp->add_option("--scores", pp.scores, "input score file")->required()->check(CLI::ExistingFile);
  c_pp->add_option("--out", pp.out, "output score file")->required();
  c_pp->add_option("--beta", o.beta, "divisor for non-maximal faces in a frame");
  c_pp->add_option("--gamma", o.gamma, "divisor for faces in frames without voice");
  c_pp->add_option("--vad-source", o.vad_source, "system or oracle");
  c_pp->add_option("--vad-mask", pp.vad_mask, "frame VAD mask")->check(CLI::ExistingFile);
  c_pp->add_option("--vad-scores", pp.vad_scores, "segment VAD posteriors")->check(CLI::ExistingFile);
  c_pp->add_option("--vad-decision", o.vad_decision, "posterior treated as voice");
  c_pp->add_flag("--video-only", pp.video_only, "skip the voice constraint");

  // eval
  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "ROC analysis of a score file");
  c_eval->add_option("--scores", ev.scores, "instance score file")->check(CLI::ExistingFile);
  c_eval->add_option("--segment-scores", ev.segment_scores, "segment posterior file")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--fpr", ev.fprs, "false positive rates for TPR readout")->capture_default_str();
  c_eval->add_option("--title", ev.title, "plot title");
  c_eval->add_option("--out-dir", ev.out_dir, "report directory")->required();

  // cam-render
  RenderArgs rd;
  auto* c_render = app.add_subcommand("cam-render", "render CAM overlays of one clip");
  c_render->add_option("--data", rd.data, "dataset directory")->required();
  c_render->add_option("--hica", rd.hica, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  c_render->add_option("--clip", rd.clip, "clip id")->required();
  c_render->add_option("--layer", o.layer, "CAM layer");
  c_render->add_option("--opacity", rd.opacity, "overlay opacity")->capture_default_str();
  c_render->add_option("--out-dir", rd.out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*c_label) return run_labelgen(ctx, lg);
    if (*c_synth) return run_synth(ctx, synth_out);
    if (*c_hica) return run_train_hica(ctx, th_data, th_out);
    if (*c_mil) return run_train_mil(ctx, tm_data, tm_hica, tm_out);
    if (*c_score) return run_score(ctx, sc);
    if (*c_pp) return run_postproc(ctx, pp);
    if (*c_eval) return run_eval(ctx, ev);
    if (*c_render) return run_cam_render(ctx, rd);
  } catch (const Error& e) {
    std::cerr << "speakloc: error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "speakloc: error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kConfig);
}

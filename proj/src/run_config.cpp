#include "speakloc/run_config.hpp"

#include "speakloc/digest.hpp"
#include "speakloc/errors.hpp"
#include "speakloc/formats.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <map>

namespace speakloc {

std::string to_string(VadInputs inputs) {
  switch (inputs) {
    case VadInputs::kFused: return "fused";
    case VadInputs::kAudioOnly: return "audio";
    case VadInputs::kVisualOnly: return "visual";
  }
  return "?";
}

VadInputs parse_vad_inputs(const std::string& text) {
  if (text == "fused") return VadInputs::kFused;
  if (text == "audio") return VadInputs::kAudioOnly;
  if (text == "visual") return VadInputs::kVisualOnly;
  throw ConfigError("unknown VAD inputs '" + text + "' (expected fused, audio or visual)");
}

namespace {

nlohmann::json optimizer_fields(const nn::OptimizerConfig& o) {
  return {{"optimizer", nn::to_string(o.kind)}, {"learning_rate", o.learning_rate},
          {"momentum", o.momentum},             {"beta2", o.beta2},
          {"epsilon", o.epsilon},               {"clip_norm", o.clip_norm}};
}

void read_optimizer(const nlohmann::json& j, nn::OptimizerConfig& o) {
  o.kind = nn::parse_optimizer_kind(j.at("optimizer").get<std::string>());
  o.learning_rate = j.at("learning_rate").get<double>();
  o.momentum = j.at("momentum").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.epsilon = j.at("epsilon").get<double>();
  o.clip_norm = j.at("clip_norm").get<double>();
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void check_optimizer(const nn::OptimizerConfig& o, const std::string& section) {
  check(o.learning_rate > 0.0, section + ".learning_rate must be positive");
  check(o.momentum >= 0.0 && o.momentum < 1.0, section + ".momentum must lie in [0, 1)");
  check(o.beta2 >= 0.0 && o.beta2 < 1.0, section + ".beta2 must lie in [0, 1)");
  check(o.epsilon > 0.0, section + ".epsilon must be positive");
  check(o.clip_norm > 0.0, section + ".clip_norm must be positive");
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json hica = optimizer_fields(c.hica.optimizer);
  hica["epochs"] = c.hica.epochs;
  hica["batch_size"] = c.hica.batch_size;
  hica["lr_decay"] = c.hica.lr_decay;
  hica["seed"] = c.hica.seed;

  nlohmann::json head = c.mil_model;
  head.erase("channels");  // follows the backbone
  nlohmann::json mil = optimizer_fields(c.mil.optimizer);
  mil["alpha"] = c.mil.alpha;
  mil["epochs"] = c.mil.epochs;
  mil["batch_size"] = c.mil.batch_size;
  mil["lr_decay"] = c.mil.lr_decay;
  mil["seed"] = c.mil.seed;
  mil["vad_inputs"] = to_string(c.mil.vad_inputs);
  mil["end_to_end"] = c.mil.end_to_end;
  mil["head"] = head;

  return {{"seed", c.seed},
          {"workers", c.workers},
          {"paths",
           {{"data", c.paths.data}, {"checkpoints", c.paths.checkpoints}, {"outputs", c.paths.outputs}}},
          {"model", c.model},
          {"synth", c.synth},
          {"hica", hica},
          {"mil", mil},
          {"postproc",
           {{"beta", c.postproc.beta},
            {"gamma", c.postproc.gamma},
            {"vad_source", to_string(c.postproc.vad_source)}}},
          {"thresholds",
           {{"confidence", c.thresholds.confidence},
            {"merge_gap", c.thresholds.merge_gap},
            {"pos_fraction", c.thresholds.pos_fraction},
            {"vad_fraction", c.thresholds.vad_fraction},
            {"iou", c.thresholds.iou},
            {"vad_decision", c.thresholds.vad_decision}}},
          {"cam_layer", c.cam_layer}};
}

namespace {

RunConfig from_merged(const nlohmann::json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.workers = j.at("workers").get<Index>();
  const auto& p = j.at("paths");
  c.paths = {p.at("data").get<std::string>(), p.at("checkpoints").get<std::string>(),
             p.at("outputs").get<std::string>()};
  c.model = j.at("model").get<ModelConfig>();
  c.synth = j.at("synth").get<SynthConfig>();

  const auto& h = j.at("hica");
  read_optimizer(h, c.hica.optimizer);
  c.hica.epochs = h.at("epochs").get<Index>();
  c.hica.batch_size = h.at("batch_size").get<Index>();
  c.hica.lr_decay = h.at("lr_decay").get<double>();
  c.hica.seed = h.at("seed").get<std::uint64_t>();

  const auto& m = j.at("mil");
  read_optimizer(m, c.mil.optimizer);
  c.mil.alpha = m.at("alpha").get<double>();
  c.mil.epochs = m.at("epochs").get<Index>();
  c.mil.batch_size = m.at("batch_size").get<Index>();
  c.mil.lr_decay = m.at("lr_decay").get<double>();
  c.mil.seed = m.at("seed").get<std::uint64_t>();
  c.mil.vad_inputs = parse_vad_inputs(m.at("vad_inputs").get<std::string>());
  c.mil.end_to_end = m.at("end_to_end").get<bool>();
  nlohmann::json head = m.at("head");
  head["channels"] = 1;
  c.mil_model = head.get<MilConfig>();

  const auto& pp = j.at("postproc");
  c.postproc.beta = pp.at("beta").get<double>();
  c.postproc.gamma = pp.at("gamma").get<double>();
  c.postproc.vad_source = parse_vad_source(pp.at("vad_source").get<std::string>());

  const auto& t = j.at("thresholds");
  c.thresholds.confidence = t.at("confidence").get<double>();
  c.thresholds.merge_gap = t.at("merge_gap").get<double>();
  c.thresholds.pos_fraction = t.at("pos_fraction").get<double>();
  c.thresholds.vad_fraction = t.at("vad_fraction").get<double>();
  c.thresholds.iou = t.at("iou").get<double>();
  c.thresholds.vad_decision = t.at("vad_decision").get<double>();

  c.cam_layer = j.at("cam_layer").get<std::string>();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  check(workers >= 1, "workers must be at least 1");
  model.validate();
  synth.validate();
  check(model.input_height == synth.frame_height && model.input_width == synth.frame_width,
        "model.input_hw must match synth.frame_hw");
  check(close(model.input_fps, synth.fps), "model.input_fps must match synth.fps");
  check(close(model.segment_seconds, synth.segment_len_s),
        "model.t_s must match synth.segment_len_s");
  check(close(model.segment_seconds * static_cast<double>(model.segments), synth.clip_len_s),
        "model.k * model.t_s must match synth.clip_len_s");

  check(hica.epochs >= 1, "hica.epochs must be at least 1");
  check(hica.batch_size >= 1, "hica.batch_size must be at least 1");
  check(hica.lr_decay > 0.0 && hica.lr_decay <= 1.0, "hica.lr_decay must lie in (0, 1]");
  check_optimizer(hica.optimizer, "hica");

  check(mil.alpha >= 0.0 && mil.alpha <= 1.0, "mil.alpha must lie in [0, 1]");
  check(mil.epochs >= 1, "mil.epochs must be at least 1");
  check(mil.batch_size >= 1, "mil.batch_size must be at least 1");
  check(mil.lr_decay > 0.0 && mil.lr_decay <= 1.0, "mil.lr_decay must lie in (0, 1]");
  check_optimizer(mil.optimizer, "mil");
  mil_model.validate();
  check(mil_model.audio_dim == synth.audio_dim, "mil.head.audio_dim must match synth.audio_dim");

  postproc.validate();

  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  check(unit(thresholds.confidence), "thresholds.confidence must lie in [0, 1]");
  check(thresholds.merge_gap >= 0.0, "thresholds.merge_gap must be non-negative");
  check(unit(thresholds.pos_fraction), "thresholds.pos_fraction must lie in [0, 1]");
  check(unit(thresholds.vad_fraction), "thresholds.vad_fraction must lie in [0, 1]");
  check(unit(thresholds.iou), "thresholds.iou must lie in [0, 1]");
  check(unit(thresholds.vad_decision), "thresholds.vad_decision must lie in [0, 1]");
  LayerTag::parse(cam_layer, model);
}

std::string canonical_text(const RunConfig& config) { return to_json(config).dump(); }

std::string config_digest(const RunConfig& config) { return sha256_hex(canonical_text(config)); }

namespace {

struct Overlay {
  std::string source;
  std::map<std::string, YAML::Mark> marks;  // dotted key -> position

  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& what) const {
    throw ConfigError(where(mark) + what);
  }

  std::string where(const YAML::Mark& mark) const {
    if (mark.line < 0) return source + ": ";
    return source + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1) +
           ": ";
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& path, const char* expected) const {
    if (!node.IsScalar()) fail(node.Mark(), "'" + path + "' expects " + expected);
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node.Mark(), "'" + path + "' expects " + expected + ", got '" + node.Scalar() + "'");
    }
  }

  void apply(const YAML::Node& node, nlohmann::json& target, const std::string& path) {
    using T = nlohmann::json::value_t;
    switch (target.type()) {
      case T::object: {
        if (!node.IsMap()) fail(node.Mark(), "'" + path + "' expects a mapping");
        for (auto it = node.begin(); it != node.end(); ++it) {
          const std::string key = it->first.as<std::string>();
          const std::string child = path.empty() ? key : path + "." + key;
          if (!target.contains(key)) {
            fail(it->first.Mark(), "unknown key '" + key + "'" +
                                       (path.empty() ? std::string() : " in '" + path + "'"));
          }
          marks[child] = it->first.Mark();
          apply(it->second, target[key], child);
        }
        return;
      }
      case T::array: {
        if (!node.IsSequence()) fail(node.Mark(), "'" + path + "' expects a list");
        const nlohmann::json element = target.empty() ? nlohmann::json(0.0) : target.front();
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t i = 0; i < node.size(); ++i) {
          nlohmann::json value = element;
          apply(node[i], value, path + "[" + std::to_string(i) + "]");
          out.push_back(std::move(value));
        }
        target = std::move(out);
        return;
      }
      case T::boolean:
        target = scalar<bool>(node, path, "true or false");
        return;
      case T::number_unsigned: {
        const auto v = scalar<long long>(node, path, "an integer");
        if (v < 0) fail(node.Mark(), "'" + path + "' must be non-negative");
        target = static_cast<std::uint64_t>(v);
        return;
      }
      case T::number_integer:
        target = scalar<long long>(node, path, "an integer");
        return;
      case T::number_float:
        target = scalar<double>(node, path, "a number");
        return;
      case T::string:
        target = scalar<std::string>(node, path, "a string");
        return;
      default:
        fail(node.Mark(), "'" + path + "' has an unsupported type");
    }
  }

  /// Position of the configured key a validation message is about: the
  /// longest dotted key it names, else a key whose last part starts the
  /// message, else the section named first.
  std::string locate(const std::string& message) const {
    std::string best;
    for (const auto& [key, mark] : marks) {
      if (message.find(key) != std::string::npos && key.size() > best.size()) best = key;
    }
    if (best.empty()) {
      for (const auto& [key, mark] : marks) {
        const std::string leaf = key.substr(key.rfind('.') + 1);
        if (message.rfind(leaf + " ", 0) == 0 || message.rfind(leaf + ":", 0) == 0) best = key;
      }
    }
    return best.empty() ? source + ": " : where(marks.at(best));
  }
};

}  // namespace

RunConfig parse_run_config(const std::string& yaml, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }

  nlohmann::json merged = to_json(RunConfig{});
  // Optional synth keys need a shape to overlay onto.
  merged["synth"]["entities"] = Index{1};
  merged["synth"]["schedule"] = nlohmann::json::array(
      {{{"entity", Index{0}}, {"start_s", 0.0}, {"end_s", 0.0}}});

  Overlay overlay{source, {}};
  if (root.IsDefined() && !root.IsNull()) overlay.apply(root, merged, "");
  if (!overlay.marks.count("synth.entities")) merged["synth"].erase("entities");
  if (!overlay.marks.count("synth.schedule")) merged["synth"].erase("schedule");

  RunConfig config;
  try {
    config = from_merged(merged);
    config.mil_model.channels = config.model.embed_channels();
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(overlay.locate(e.what()) + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read config file " + path);
  }
  return parse_run_config(text, path);
}

}  // namespace speakloc

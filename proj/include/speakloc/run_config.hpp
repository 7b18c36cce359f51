#pragma once

// Declarative run configuration: one YAML file, every key optional,
// unknown keys rejected with their line and column.

#include "speakloc/hica.hpp"
#include "speakloc/labelgen.hpp"
#include "speakloc/milhead.hpp"
#include "speakloc/postproc.hpp"
#include "speakloc/synthbench.hpp"

#include <json.hpp>

#include <string>

namespace speakloc {

struct RunPaths {
  std::string data = "data";
  std::string checkpoints = "checkpoints";
  std::string outputs = "outputs";
};

struct Thresholds {
  double confidence = kDefaultConfidenceThreshold;  // alignment word confidence
  double merge_gap = kDefaultMergeGap;
  double pos_fraction = 0.10;
  double vad_fraction = 0.50;
  double iou = 0.3;           // object proposals overlapping a face above this are dropped
  double vad_decision = 0.5;  // segment VAD posterior treated as voice
};

struct RunConfig {
  std::uint64_t seed = 7;
  Index workers = 1;
  RunPaths paths;
  ModelConfig model;
  SynthConfig synth;
  HicaTrainConfig hica;  // callbacks unused
  MilConfig mil_model;
  MilTrainConfig mil;    // callbacks unused
  PostprocConfig postproc;
  Thresholds thresholds;
  std::string cam_layer = "last_recurrent";

  /// Throws ConfigError on the first invalid value.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Canonical JSON form hashed into run manifests.
std::string canonical_text(const RunConfig& config);
std::string config_digest(const RunConfig& config);

/// Parses YAML text on top of the defaults. Diagnostics are prefixed with
/// `source:line:column`.
RunConfig parse_run_config(const std::string& yaml, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

std::string to_string(VadInputs inputs);
VadInputs parse_vad_inputs(const std::string& text);

}  // namespace speakloc

#pragma once

#include <cstdint>
#include <string>

#include "slsr/backbone.hpp"
#include "slsr/data.hpp"
#include "slsr/eval.hpp"
#include "slsr/gan.hpp"
#include "slsr/trainer.hpp"

namespace slsr::config {

struct EvalConfig {
  eval::Protocol protocol = eval::Protocol::market_single;
  bool rerank = false;
  int64_t rerank_k1 = 20;
  int64_t rerank_k2 = 6;
  double rerank_lambda = 0.3;
};

struct PathsConfig {
  std::string dataset_dir;  // reid directory tree; empty selects the synthetic corpus
  std::string output_dir = "out";
};

// One declarative configuration for every stage. Per-stage seeds are not
// stored here: the runner derives them from the root seed by stage name.
struct PipelineConfig {
  uint64_t seed = 7;
  int64_t workers = 1;             // execution knob, excluded from the hash
  bool uniform_generation = false; // equal per-cluster counts instead of proportional
  trainer::TrainConfig train;
  backbone::BackboneConfig backbone;
  backbone::StageOneOptions stage1;
  gan::GanConfig gan;
  data::PreprocessConfig preprocess;
  data::SynthConfig synth;
  EvalConfig eval;
  PathsConfig paths;
};

// Strict parse: unknown keys and ill-typed values raise ConfigError naming
// the offending field path. Absent keys keep their defaults.
PipelineConfig from_json(const std::string& text);
PipelineConfig load_file(const std::string& path);

// Canonical form: sorted keys, every field explicit.
std::string to_json(const PipelineConfig& cfg);

// FNV-1a over the canonical form, as a fixed-width hex string.
std::string config_hash(const PipelineConfig& cfg);

void validate(const PipelineConfig& cfg);

PipelineConfig desk_preset();    // synthetic corpus sized for CPU runs
PipelineConfig market_preset();  // full-scale settings for the real dataset

}  // namespace slsr::config

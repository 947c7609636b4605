#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slsr/config.hpp"

namespace slsr::pipeline {

struct StageResult {
  std::string stage;
  bool skipped = false;                 // unchanged config hash, artifacts intact
  std::vector<std::string> artifacts;   // artifact names owned by the stage
};

// Executes pipeline stages against one output directory, persisting every
// artifact and a manifest recording {path, stage, seed, config hash} per
// artifact. A stage whose manifest entry carries the current config hash and
// whose files are intact is skipped unless forced.
class Runner {
 public:
  explicit Runner(config::PipelineConfig cfg);

  // Stage names: synth, train-features, cluster, gan, generate, train,
  // eval, report. Unknown names raise ConfigError.
  StageResult run_stage(const std::string& name, bool force = false);

  // Chains the stages end to end; generation stages are bypassed when the
  // configuration asks for no generated images.
  std::vector<StageResult> run_all(bool force = false);

  // Aggregated tables (cluster quality, retrieval grid); also written to
  // ablation.md by run_stage("report").
  std::string render_report() const;

  const config::PipelineConfig& config() const { return cfg_; }
  const std::string& output_dir() const { return cfg_.paths.output_dir; }
  std::string manifest_json() const;
  std::string artifact_path(const std::string& name) const;  // absolute-ish path under output_dir

 private:
  config::PipelineConfig cfg_;
  std::string hash_;
};

}  // namespace slsr::pipeline

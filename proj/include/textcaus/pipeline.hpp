#pragma once

#include <string>
#include <vector>

#include "textcaus/config.hpp"

namespace textcaus::pipeline {

inline constexpr const char* kVersion = "0.1.0";

// Stage names in execution order: ingest, dtm, mnir, impute, match,
// effects, hetfx, report.
const std::vector<std::string>& stage_order();

struct StageResult {
  std::string stage;
  double seconds = 0.0;
  std::vector<std::string> outputs;  // paths relative to output_dir
};

struct RunManifest {
  std::string config_hash;  // hex digest of the resolved config
  std::string version;
  std::vector<StageResult> stages;
};

// Runs a single stage against cfg.output_dir. Downstream stages read the
// files written by upstream stages; a missing artifact raises a data error
// naming the stage to run first.
StageResult run_stage(const config::RunConfig& cfg, const std::string& stage);

// All stages in order, then writes output_dir/manifest.json atomically.
RunManifest run_pipeline(const config::RunConfig& cfg);

void write_manifest(const RunManifest& manifest, const std::string& output_dir);

}  // namespace textcaus::pipeline

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"
#include "textcaus/effects.hpp"
#include "textcaus/impute.hpp"
#include "textcaus/match.hpp"
#include "textcaus/mnir.hpp"

namespace textcaus::config {

struct InputPaths {
  std::string notes;
  std::string covariates;
  std::string treatment_outcome;
  std::optional<std::string> embeddings;
  std::optional<std::string> key_terms;
  std::optional<std::string> stop_words;
  std::vector<std::string> binary_columns;  // kind sidecar
};

struct PreprocessingParams {
  double cutoff_hours = 24.0;
  int ngram_min = 1;
  int ngram_max = 3;
  bool stem = false;
  int min_df = 5;
  double max_df_fraction = 0.95;
};

struct MatchingParams {
  double caliper_width = 0.1;
  match::CaliperScale caliper_scale = match::CaliperScale::probability;
  int max_controls_per_treated = 0;
  int max_treated_per_control = 0;
};

struct ScanParams {
  std::vector<std::string> methods = {"structured", "token", "dtm_pca"};
  int pca_k = 50;
  double fdr_q = 0.05;
  int min_subgroup = 20;
  std::string weights = "text";  // which matched sample drives the scan
};

struct ReportParams {
  std::vector<std::string> cv_targets;  // empty -> auto (missing columns, <= 5)
  int cv_folds = 10;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  int threads = 1;
  InputPaths inputs;
  PreprocessingParams preprocessing;
  mnir::MnirConfig mnir;
  impute::MiceConfig mice;
  MatchingParams matching;
  ScanParams scan;
  ReportParams report;

  std::uint64_t content_hash() const;
};

// Parses and validates; error messages carry the JSON field path. Referenced
// input files must exist. require_inputs=false skips the existence checks
// (used by `synth`, which creates them).
RunConfig load_run_config(const std::string& path, bool require_inputs = true);
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir,
                           bool require_inputs = true);

std::string dump_run_config(const RunConfig& cfg);

}  // namespace textcaus::config

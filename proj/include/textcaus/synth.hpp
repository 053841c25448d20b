#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"
#include "textcaus/effects.hpp"
#include "textcaus/match.hpp"
#include "textcaus/table.hpp"

namespace textcaus::synth {

struct NotesPerPatient {
  int min_notes = 2;
  int max_notes = 6;
};

struct PlantedInteraction {
  int token_index = -1;  // -1 disables the planted effect
  double delta = 0.0;
};

struct MarDependence {
  double on_anchor = 1.0;  // coefficient on the fully observed anchor covariate
  double on_length = 1.0;  // coefficient on standardized log note length
};

struct SynthConfig {
  int n_patients = 500;
  int p_covariates = 10;
  int vocab_size = 200;
  NotesPerPatient notes_per_patient;
  double text_signal_strength = 1.0;
  double confounding_strength = 0.0;
  double true_att = 0.0;  // risk difference
  PlantedInteraction planted_interaction;
  std::vector<double> missing_rates;  // per covariate; shorter vectors pad with 0
  MarDependence mar_dependence;
  std::uint64_t seed = 0;

  void validate() const;
};

// Scale and defaults mirroring the replication dataset: N=2625, 45
// covariates with 15 partially observed, ~51% treated, control survival
// near 0.72.
SynthConfig paper_like_config(std::uint64_t seed);

struct GroundTruth {
  double true_att = 0.0;
  double sample_att = 0.0;  // mean of p1 - p0 over treated units
  std::string planted_token;
  std::vector<int> planted_indicator;  // per patient, note contains the token
  std::vector<std::string> severity_tokens;
  std::vector<std::string> confounder_tokens;  // text-only confounder carriers
  Eigen::VectorXd severity;     // h
  Eigen::VectorXd text_latent;  // u, enters treatment but no covariate
};

struct SynthDataset {
  CovariateTable covariates;       // with induced missingness
  CovariateTable covariates_full;  // complete truth
  std::vector<corpus::ClinicalNote> notes;
  std::vector<int> z;
  std::vector<int> y;
  std::vector<int> y0;
  std::vector<int> y1;
  GroundTruth ground_truth;
};

SynthDataset generate(const SynthConfig& cfg);

struct RunOutputs {
  // Completed matrices from the text-augmented and structured-only chains;
  // either may be empty when that stage was not run.
  std::vector<Eigen::MatrixXd> completed_text;
  std::vector<Eigen::MatrixXd> completed_structured;
  std::optional<effects::EffectEstimate> att;
  std::vector<effects::SubgroupEffect> scan;
  std::optional<match::BalanceReport> balance_psm;
  std::optional<match::BalanceReport> balance_text;
};

struct Scorecard {
  double imputation_rmse_text;
  double imputation_rmse_structured;
  double att_bias;
  bool att_covered_2se = false;
  double planted_text_smd_psm;   // mean |SMD| over confounder-token rows
  double planted_text_smd_text;
  double max_structured_abs_smd_text;
  double empirical_fdr;
  bool planted_discovered = false;
  int n_discoveries = 0;
};

Scorecard evaluate_run(const SynthDataset& data, const RunOutputs& outputs);

}  // namespace textcaus::synth

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"

namespace textcaus::match {

struct PropensityConfig {
  double ridge = 1e-6;
  int max_iter = 100;
  double tol = 1e-10;
  // IRLS is declared separated when the coefficient norm exceeds this.
  double separation_norm = 50.0;
};

struct PropensityModel {
  Eigen::VectorXd coefficients;  // intercept first, then standardized covariates
  Eigen::VectorXd scores;
  Eigen::VectorXd linear_predictors;
  Eigen::VectorXd covariate_means;
  Eigen::VectorXd covariate_sds;  // zero-variance columns recorded as sd 0, coefficient 0
  int n_iterations = 0;
};

// x: one completed dataset, rows = units. z: 0/1 treatment, both arms nonempty.
PropensityModel fit_propensity(const Eigen::MatrixXd& x, const std::vector<int>& z,
                               const PropensityConfig& cfg = {});

enum class CaliperScale { probability, logit };

// Bipartite admissibility graph between retained treated and retained controls.
struct CaliperGraph {
  std::vector<int> treated;   // unit indices, ascending
  std::vector<int> controls;  // unit indices, ascending
  // CSR over retained treated; adj holds positions into `controls`.
  std::vector<std::size_t> adj_ptr;
  std::vector<int> adj;
  std::vector<int> dropped_treated;
  std::vector<int> dropped_control;
  double threshold = 0.0;
  int n_units = 0;
  std::size_t n_edges() const { return adj.size(); }
};

CaliperGraph caliper_graph(const PropensityModel& model, const std::vector<int>& z,
                           double width_sds = 0.1,
                           CaliperScale scale = CaliperScale::probability);

struct MatchedPair {
  int treated;
  int control;
  double distance;
};

struct MatchedSet {
  std::vector<int> treated;   // unit indices, ascending
  std::vector<int> controls;  // unit indices, ascending
  std::vector<MatchedPair> pairs;
};

struct MatchedSample {
  std::vector<MatchedSet> sets;  // ordered by smallest member unit index
  std::vector<int> dropped_treated;
  std::vector<int> dropped_control;
  Eigen::VectorXd weights;   // per unit, ATT weights; dropped units 0
  std::vector<int> set_index;  // per unit, -1 if dropped
  double total_distance = 0.0;
  int n_units = 0;
};

struct FullMatchConfig {
  // 0 means unbounded. Bounds apply to the satellite count of a set's center.
  int max_controls_per_treated = 0;
  int max_treated_per_control = 0;
};

// distances parallel to graph.adj; all finite and >= 0.
MatchedSample optimal_full_match(const CaliperGraph& graph,
                                 const std::vector<double>& distances,
                                 const FullMatchConfig& cfg = {});

// Edge distances = cosine distance between the units' DTM rows.
MatchedSample text_match_within_calipers(const corpus::DocTermMatrix& dtm,
                                         const CaliperGraph& graph,
                                         const FullMatchConfig& cfg = {});

enum class Estimand { att };

// Treated 1; control in set s: (#treated in s)/(#controls in s); dropped 0.
Eigen::VectorXd full_match_weights(const MatchedSample& sample,
                                   Estimand estimand = Estimand::att);

// Kish (sum w)^2 / sum w^2. weights >= 0, not all zero.
double effective_sample_size(const Eigen::VectorXd& weights);

// Throws if the sample violates the full-matching structure.
void validate_matched_sample(const MatchedSample& sample);

struct BalanceRow {
  std::string name;
  std::string kind;  // "structured" or "text"
  double smd_before;  // NaN when pooled SD is zero
  double smd_after;
  bool flagged_before;
  bool flagged_after;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
  double flag_threshold = 0.1;
};

// Pooled SD uses the unweighted full sample: sqrt((s_t^2 + s_c^2)/2) with
// n-1 variances. Before column is unweighted; after column uses `weights`.
BalanceReport balance_table(const Eigen::MatrixXd& x_structured,
                            const std::vector<std::string>& structured_names,
                            const Eigen::MatrixXd& x_text,
                            const std::vector<std::string>& text_names,
                            const std::vector<int>& z, const Eigen::VectorXd& weights,
                            double flag_threshold = 0.1);

}  // namespace textcaus::match

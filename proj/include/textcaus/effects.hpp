#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"
#include "textcaus/match.hpp"

namespace textcaus::effects {

struct EffectEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  double n_effective = 0.0;
};

// Weighted y ~ 1 + z with Liang-Zeger cluster-robust SE over matched sets,
// scaled by G/(G-1). Units with zero weight are ignored.
EffectEstimate att_estimate(const Eigen::VectorXd& y, const std::vector<int>& z,
                            const Eigen::VectorXd& weights,
                            const std::vector<int>& set_ids);

// Midpoint cut maximizing sensitivity + specificity - 1 for predicting y
// from (x > t); ties go to the smaller threshold.
double youden_threshold(const Eigen::VectorXd& x, const std::vector<int>& y);

enum class RuleSource {
  structured_threshold,
  token_presence,
  dtm_pca,
  embedding_raw,
  embedding_pca,
};

std::string to_string(RuleSource s);

struct SubgroupRule {
  RuleSource source = RuleSource::structured_threshold;
  std::string label;
  std::optional<double> threshold;
  std::vector<int> indicator;  // per unit, {0,1}
};

struct SubgroupConfig {
  int pca_k = 50;
  int min_subgroup = 20;  // smaller cells on retained units drop the rule
};

struct RuleBuildResult {
  std::vector<SubgroupRule> rules;
  int n_degenerate = 0;  // dropped: constant input, degenerate cut, tiny cell
};

// retained: units with positive weight; size checks use only those rows.
RuleBuildResult structured_rules(const Eigen::MatrixXd& x,
                                 const std::vector<std::string>& names,
                                 const std::vector<int>& y_binary,
                                 const std::vector<int>& retained,
                                 const SubgroupConfig& cfg = {});
RuleBuildResult token_rules(const corpus::DocTermMatrix& dtm,
                            const std::vector<int>& retained,
                            const SubgroupConfig& cfg = {});
RuleBuildResult pca_rules(const Eigen::MatrixXd& matrix, RuleSource source,
                          const std::vector<int>& y_binary,
                          const std::vector<int>& retained,
                          const SubgroupConfig& cfg = {});
RuleBuildResult embedding_raw_rules(const Eigen::MatrixXd& embeddings,
                                    const std::vector<int>& y_binary,
                                    const std::vector<int>& retained,
                                    const SubgroupConfig& cfg = {});

// Truncated SVD of the column-centered matrix; scores = U_k S_k with the
// largest-magnitude loading of each component made positive. Components
// beyond the numerical rank are cut, shrinking the returned width.
Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& matrix, int k);

struct SubgroupEffect {
  std::string label;
  RuleSource source = RuleSource::structured_threshold;
  double interaction_estimate = 0.0;
  double se = 0.0;
  double p_value = 1.0;
  double q_value = 1.0;
  double shrunken_estimate = 0.0;
  bool discovered = false;
  bool valid = true;  // false: skipped (collinear with z or degenerate fit)
};

struct ScanConfig {
  double fdr_q = 0.05;
  int threads = 1;
};

// Per rule: weighted y ~ 1 + z + g + z*g, cluster-robust SE; q/shrunken are
// filled by finalize_scan or pool_subgroup_scan.
std::vector<SubgroupEffect> interaction_scan(const Eigen::VectorXd& y,
                                             const std::vector<int>& z,
                                             const std::vector<SubgroupRule>& rules,
                                             const Eigen::VectorXd& weights,
                                             const std::vector<int>& set_ids,
                                             const ScanConfig& cfg = {});

struct BhResult {
  std::vector<bool> discovered;
  std::vector<double> q_values;
};

BhResult bh_fdr(const std::vector<double>& p_values, double q);

// DerSimonian-Laird normal-normal shrinkage toward the precision-weighted
// grand mean.
std::vector<double> shrink(const std::vector<double>& estimates,
                           const std::vector<double>& ses);

// Applies bh_fdr and shrink in place over the valid entries.
void finalize_scan(std::vector<SubgroupEffect>& scan, double fdr_q);

// Rubin-pools per-rule estimates across imputations (rules invalid in any
// imputation are dropped), then finalizes.
std::vector<SubgroupEffect> pool_subgroup_scan(
    const std::vector<std::vector<SubgroupEffect>>& scans, double fdr_q = 0.05);

}  // namespace textcaus::effects

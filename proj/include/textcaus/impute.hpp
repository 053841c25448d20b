#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"
#include "textcaus/mnir.hpp"
#include "textcaus/table.hpp"

namespace textcaus::impute {

inline constexpr const char* kSrPrefix = "sr_";

// Column-wise concatenation of x with fully observed SR score columns.
CovariateTable augment(const CovariateTable& x, const mnir::SrProjection& s);

struct MiceConfig {
  int m = 5;
  int n_iter = 10;
  int pmm_donors = 5;
  double ridge = 1e-6;
  int threads = 1;
};

struct ImputedSet {
  int m = 0;
  std::vector<Eigen::MatrixXd> completed;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> warnings;  // e.g. zero-variance predictors dropped
};

ImputedSet mice(const CovariateTable& x_star, std::uint64_t seed,
                const MiceConfig& cfg = {});

struct CvResult {
  double rmse_structured = 0.0;
  double rmse_text = 0.0;
  double r2_structured = 0.0;
  double r2_text = 0.0;
  int folds = 0;
  int n_evaluated = 0;
};

struct CvConfig {
  int folds = 10;
  std::uint64_t seed = 0;
  mnir::MnirConfig mnir;
};

// Held-out comparison of target ~ structured vs target ~ structured + SR
// scores, with MNIR refit on each training fold. Rows with the target
// missing are excluded; remaining missing predictors are mean-imputed with
// training-fold statistics.
CvResult cv_evaluate(const CovariateTable& x, const corpus::DocTermMatrix& dtm,
                     const std::string& target_column, const CvConfig& cfg = {});

struct PooledEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double df = 0.0;
  double within = 0.0;
  double between = 0.0;
};

// Rubin's rules with Barnard-Rubin degrees of freedom. dfcom is the
// complete-data df; infinity reproduces the large-sample formula.
PooledEstimate rubin_pool(const std::vector<double>& estimates,
                          const std::vector<double>& variances,
                          double dfcom = std::numeric_limits<double>::infinity());

}  // namespace textcaus::impute

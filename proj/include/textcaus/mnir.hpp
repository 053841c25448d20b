#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "textcaus/corpus.hpp"

namespace textcaus::mnir {

struct MnirConfig {
  // penalty > 0 fixes the L1 strength for every token; penalty = 0 selects
  // per token by AICc over a log-spaced grid of `grid_size` values.
  double penalty = 0.0;
  int grid_size = 20;
  double grid_min_ratio = 1e-3;  // smallest grid value relative to lambda_max
  int max_iter = 200;
  double tol = 1e-8;
  int threads = 1;
};

struct TokenDiagnostic {
  bool converged = true;
  double deviance = 0.0;
  double penalty = 0.0;  // value actually used for this token
};

struct MnirModel {
  Eigen::MatrixXd phi;  // d x p, token rows
  Eigen::VectorXd covariate_means;
  Eigen::VectorXd covariate_sds;
  double penalty = 0.0;  // configured fixed penalty, 0 when grid-selected
  std::vector<TokenDiagnostic> fit_diagnostics;
  std::uint64_t vocab_hash = 0;
};

struct SrProjection {
  Eigen::MatrixXd scores;  // N x p
};

// Per-token penalized Poisson regressions of counts on standardized x with
// offset log m_i. x must be complete; rows align with dtm docs. Documents
// with m_i = 0 are excluded from fitting.
MnirModel fit_mnir(const corpus::DocTermMatrix& dtm, const Eigen::MatrixXd& x,
                   const MnirConfig& cfg = {});

// S_i = C_i Phi / m_i; zero row when m_i = 0.
SrProjection sr_scores(const corpus::DocTermMatrix& dtm, const MnirModel& model);

void save_mnir(const MnirModel& model, const std::string& path);
MnirModel load_mnir(const std::string& path);

}  // namespace textcaus::mnir

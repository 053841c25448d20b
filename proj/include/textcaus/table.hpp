#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace textcaus {

enum class ColumnKind { continuous, binary };

// N x p covariates with per-cell missingness. Missing cells are stored as NaN;
// the mask is implied. Binary columns hold only {0,1} where observed.
struct CovariateTable {
  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  Eigen::MatrixXd values;

  int n_rows() const { return static_cast<int>(values.rows()); }
  int n_cols() const { return static_cast<int>(values.cols()); }

  bool is_missing(int i, int j) const { return std::isnan(values(i, j)); }
  int missing_count(int j) const;
  int column_index(const std::string& name) const;  // -1 when absent

  // Throws data_error on shape mismatches, unknown kinds, or binary columns
  // with observed values outside {0,1}.
  void validate() const;
};

// Column-wise concatenation keeping row identity. Names of appended columns
// get `prefix` prepended; appended values must be fully observed.
CovariateTable concat_columns(const CovariateTable& left, const Eigen::MatrixXd& right,
                              const std::vector<std::string>& right_names,
                              const std::string& prefix);

}  // namespace textcaus

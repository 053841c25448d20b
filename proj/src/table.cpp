#include "textcaus/table.hpp"

#include <cmath>

#include "textcaus/common.hpp"

namespace textcaus {

int CovariateTable::missing_count(int j) const {
  int n = 0;
  for (int i = 0; i < n_rows(); ++i)
    if (is_missing(i, j)) ++n;
  return n;
}

int CovariateTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<int>(j);
  return -1;
}

void CovariateTable::validate() const {
  if (static_cast<int>(ids.size()) != n_rows())
    throw data_error("covariate table: id count does not match row count");
  if (static_cast<int>(names.size()) != n_cols() ||
      static_cast<int>(kinds.size()) != n_cols())
    throw data_error("covariate table: column metadata does not match value shape");
  for (int j = 0; j < n_cols(); ++j) {
    if (kinds[j] != ColumnKind::binary) continue;
    for (int i = 0; i < n_rows(); ++i) {
      double v = values(i, j);
      if (!std::isnan(v) && v != 0.0 && v != 1.0)
        throw data_error("binary column '" + names[j] + "' has observed value outside {0,1}");
    }
  }
}

CovariateTable concat_columns(const CovariateTable& left, const Eigen::MatrixXd& right,
                              const std::vector<std::string>& right_names,
                              const std::string& prefix) {
  if (left.n_rows() != right.rows())
    throw data_error("concat_columns: row count mismatch (" +
                     std::to_string(left.n_rows()) + " vs " +
                     std::to_string(right.rows()) + ")");
  if (static_cast<int>(right_names.size()) != right.cols())
    throw data_error("concat_columns: name count does not match column count");
  if (!right.allFinite())
    throw data_error("concat_columns: appended columns must be fully observed");

  CovariateTable out;
  out.ids = left.ids;
  out.names = left.names;
  out.kinds = left.kinds;
  out.values.resize(left.n_rows(), left.n_cols() + right.cols());
  out.values.leftCols(left.n_cols()) = left.values;
  out.values.rightCols(right.cols()) = right;
  for (const auto& name : right_names) {
    out.names.push_back(prefix + name);
    out.kinds.push_back(ColumnKind::continuous);
  }
  return out;
}

}  // namespace textcaus

#include "textcaus/effects.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "textcaus/common.hpp"
#include "textcaus/impute.hpp"

namespace textcaus::effects {

namespace {

std::string format_threshold(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

struct WlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  int n_clusters = 0;
  bool ok = false;
};

// Weighted least squares with Liang-Zeger cluster-robust covariance and a
// G/(G-1) small-sample factor.
WlsFit cluster_wls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& w, const std::vector<int>& clusters) {
  WlsFit fit;
  const Eigen::Index n = x.rows();
  const Eigen::Index q = x.cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(q);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.noalias() += w(i) * x.row(i).transpose() * x.row(i);
    xty.noalias() += w(i) * y(i) * x.row(i).transpose();
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(1e-10);
  if (lu.rank() < q) return fit;
  Eigen::MatrixXd a_inv = lu.inverse();
  fit.beta = a_inv * xty;

  std::map<int, Eigen::VectorXd> score_by_cluster;
  for (Eigen::Index i = 0; i < n; ++i) {
    double e = y(i) - x.row(i).dot(fit.beta);
    auto [it, inserted] = score_by_cluster.try_emplace(clusters[i], Eigen::VectorXd::Zero(q));
    it->second.noalias() += w(i) * e * x.row(i).transpose();
  }
  fit.n_clusters = static_cast<int>(score_by_cluster.size());
  if (fit.n_clusters < 2) return fit;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(q, q);
  for (const auto& [id, s] : score_by_cluster) meat.noalias() += s * s.transpose();
  const double gfac = double(fit.n_clusters) / double(fit.n_clusters - 1);
  fit.cov = gfac * (a_inv * meat * a_inv);
  fit.ok = true;
  return fit;
}

}  // namespace

EffectEstimate att_estimate(const Eigen::VectorXd& y, const std::vector<int>& z,
                            const Eigen::VectorXd& weights,
                            const std::vector<int>& set_ids) {
  const Eigen::Index n = y.size();
  if (static_cast<Eigen::Index>(z.size()) != n || weights.size() != n ||
      static_cast<Eigen::Index>(set_ids.size()) != n)
    throw data_error("att_estimate: input lengths differ");

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i)
    if (weights(i) > 0) {
      if (set_ids[i] < 0) throw data_error("att_estimate: weighted unit outside any matched set");
      rows.push_back(i);
    }
  if (rows.empty()) throw data_error("att_estimate: no retained units");

  Eigen::MatrixXd x(rows.size(), 2);
  Eigen::VectorXd yy(rows.size()), ww(rows.size());
  std::vector<int> cl(rows.size());
  bool any_t = false, any_c = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Eigen::Index i = rows[r];
    x(r, 0) = 1.0;
    x(r, 1) = z[i];
    (z[i] ? any_t : any_c) = true;
    yy(r) = y(i);
    ww(r) = weights(i);
    cl[r] = set_ids[i];
  }
  if (!any_t || !any_c) throw data_error("att_estimate: need both arms among retained units");

  WlsFit fit = cluster_wls(x, yy, ww, cl);
  if (fit.n_clusters < 2) throw infeasible_error("att_estimate: fewer than 2 matched sets");
  if (!fit.ok) throw data_error("att_estimate: singular design");

  EffectEstimate out;
  out.estimate = fit.beta(1);
  out.se = std::sqrt(std::max(0.0, fit.cov(1, 1)));
  out.ci_low = out.estimate - 1.96 * out.se;
  out.ci_high = out.estimate + 1.96 * out.se;
  out.p_value = out.se > 0 ? normal_two_sided_p(out.estimate / out.se) : (out.estimate == 0 ? 1.0 : 0.0);
  out.n_effective = match::effective_sample_size(ww);
  return out;
}

double youden_threshold(const Eigen::VectorXd& x, const std::vector<int>& y) {
  const Eigen::Index n = x.size();
  if (static_cast<Eigen::Index>(y.size()) != n) throw data_error("youden_threshold: length mismatch");
  if (n < 2) throw data_error("youden_threshold: degenerate input");
  long n1 = 0, n0 = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw data_error("youden_threshold: y must be binary");
    (v ? n1 : n0) += 1;
  }
  if (n1 == 0 || n0 == 0) throw data_error("youden_threshold: degenerate, single-class y");

  std::vector<std::pair<double, int>> sorted(n);
  for (Eigen::Index i = 0; i < n; ++i) sorted[i] = {x(i), y[i]};
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front().first == sorted.back().first)
    throw data_error("youden_threshold: degenerate, constant x");

  // Rule is (x > t); sweep midpoints of consecutive distinct values.
  double best_j = -kInf;
  double best_t = 0.0;
  long below1 = 0, below0 = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == v) {
      (sorted[i].second ? below1 : below0) += 1;
      ++i;
    }
    if (i == sorted.size()) break;
    const double t = (v + sorted[i].first) / 2.0;
    const double sens = double(n1 - below1) / double(n1);
    const double spec = double(below0) / double(n0);
    const double j = sens + spec - 1.0;
    if (j > best_j) {
      best_j = j;
      best_t = t;
    }
  }
  return best_t;
}

Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& matrix, int k) {
  if (!matrix.allFinite()) throw data_error("pca_scores: matrix must be finite");
  const Eigen::Index n = matrix.rows();
  const Eigen::Index p = matrix.cols();
  if (k < 1) throw config_error("pca_scores: k must be >= 1");
  if (k > std::min(n, p)) throw config_error("pca_scores: k exceeds matrix dimensions");

  Eigen::MatrixXd centered = matrix.rowwise() - matrix.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? sv(0) * 1e-10 : 0.0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol && sv(rank) > 0) ++rank;
  const Eigen::Index kk = std::min<Eigen::Index>(k, rank);

  Eigen::MatrixXd scores(n, kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    Eigen::Index imax = 0;
    svd.matrixV().col(c).cwiseAbs().maxCoeff(&imax);
    const double sign = svd.matrixV()(imax, c) < 0 ? -1.0 : 1.0;
    scores.col(c) = sign * sv(c) * svd.matrixU().col(c);
  }
  return scores;
}

std::string to_string(RuleSource s) {
  switch (s) {
    case RuleSource::structured_threshold: return "structured";
    case RuleSource::token_presence: return "token";
    case RuleSource::dtm_pca: return "dtm_pca";
    case RuleSource::embedding_raw: return "embedding";
    case RuleSource::embedding_pca: return "embedding_pca";
  }
  return "unknown";
}

namespace {

// Builds a thresholded rule from a column; returns false when degenerate.
bool threshold_rule(const Eigen::VectorXd& col, const std::vector<int>& y_binary,
                    const std::vector<int>& retained, const SubgroupConfig& cfg,
                    RuleSource source, const std::string& base_label,
                    SubgroupRule& out) {
  Eigen::VectorXd xr(retained.size());
  std::vector<int> yr(retained.size());
  for (std::size_t r = 0; r < retained.size(); ++r) {
    xr(r) = col(retained[r]);
    yr[r] = y_binary[retained[r]];
  }
  double t;
  try {
    t = youden_threshold(xr, yr);
  } catch (const Error&) {
    return false;
  }
  int on = 0;
  for (std::size_t r = 0; r < retained.size(); ++r)
    if (xr(r) > t) ++on;
  const int off = static_cast<int>(retained.size()) - on;
  if (std::min(on, off) < cfg.min_subgroup) return false;

  out.source = source;
  out.label = base_label + ">" + format_threshold(t);
  out.threshold = t;
  out.indicator.resize(col.size());
  for (Eigen::Index i = 0; i < col.size(); ++i) out.indicator[i] = col(i) > t ? 1 : 0;
  return true;
}

}  // namespace

RuleBuildResult structured_rules(const Eigen::MatrixXd& x,
                                 const std::vector<std::string>& names,
                                 const std::vector<int>& y_binary,
                                 const std::vector<int>& retained,
                                 const SubgroupConfig& cfg) {
  if (static_cast<Eigen::Index>(names.size()) != x.cols())
    throw data_error("structured_rules: name count mismatch");
  if (retained.empty()) throw data_error("structured_rules: no retained units");
  RuleBuildResult out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    SubgroupRule rule;
    if (threshold_rule(x.col(j), y_binary, retained, cfg,
                       RuleSource::structured_threshold, names[j], rule))
      out.rules.push_back(std::move(rule));
    else
      ++out.n_degenerate;
  }
  return out;
}

RuleBuildResult token_rules(const corpus::DocTermMatrix& dtm,
                            const std::vector<int>& retained,
                            const SubgroupConfig& cfg) {
  if (retained.empty()) throw data_error("token_rules: no retained units");
  RuleBuildResult out;
  const int d = dtm.vocab.size();
  std::vector<char> retained_mask(dtm.n_docs, 0);
  for (int u : retained) retained_mask[u] = 1;
  std::vector<int> on_retained(d, 0);
  std::vector<std::vector<int>> present(d);
  for (int i = 0; i < dtm.n_docs; ++i)
    for (std::size_t e = dtm.row_ptr[i]; e < dtm.row_ptr[i + 1]; ++e)
      if (dtm.count[e] > 0) {
        present[dtm.col_idx[e]].push_back(i);
        if (retained_mask[i]) ++on_retained[dtm.col_idx[e]];
      }
  const int n_ret = static_cast<int>(retained.size());
  for (int j = 0; j < d; ++j) {
    const int on = on_retained[j];
    if (std::min(on, n_ret - on) < cfg.min_subgroup) {
      ++out.n_degenerate;
      continue;
    }
    SubgroupRule rule;
    rule.source = RuleSource::token_presence;
    rule.label = dtm.vocab.tokens[j];
    rule.indicator.assign(dtm.n_docs, 0);
    for (int i : present[j]) rule.indicator[i] = 1;
    out.rules.push_back(std::move(rule));
  }
  return out;
}

RuleBuildResult pca_rules(const Eigen::MatrixXd& matrix, RuleSource source,
                          const std::vector<int>& y_binary,
                          const std::vector<int>& retained,
                          const SubgroupConfig& cfg) {
  if (source != RuleSource::dtm_pca && source != RuleSource::embedding_pca)
    throw config_error("pca_rules: source must be a PCA variant");
  Eigen::MatrixXd work = matrix;
  if (source == RuleSource::dtm_pca) {
    // Unit-scale columns before PCA; constant columns stay as zeros.
    for (Eigen::Index j = 0; j < work.cols(); ++j) {
      const double mean = work.col(j).mean();
      const double sd = work.rows() > 1
                            ? std::sqrt((work.col(j).array() - mean).square().sum() /
                                        double(work.rows() - 1))
                            : 0.0;
      if (sd > 0)
        work.col(j) = (work.col(j).array() - mean) / sd;
      else
        work.col(j).setZero();
    }
  }
  const int k = std::min<int>(cfg.pca_k, int(std::min(work.rows(), work.cols())));
  if (k < 1) throw data_error("pca_rules: matrix too small");
  Eigen::MatrixXd scores = pca_scores(work, k);

  RuleBuildResult out;
  const std::string prefix = source == RuleSource::dtm_pca ? "dtm_pc" : "emb_pc";
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    SubgroupRule rule;
    if (threshold_rule(scores.col(c), y_binary, retained, cfg, source,
                       prefix + std::to_string(c + 1), rule))
      out.rules.push_back(std::move(rule));
    else
      ++out.n_degenerate;
  }
  out.n_degenerate += std::max(0, k - int(scores.cols()));
  return out;
}

RuleBuildResult embedding_raw_rules(const Eigen::MatrixXd& embeddings,
                                    const std::vector<int>& y_binary,
                                    const std::vector<int>& retained,
                                    const SubgroupConfig& cfg) {
  if (retained.empty()) throw data_error("embedding_raw_rules: no retained units");
  RuleBuildResult out;
  for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
    SubgroupRule rule;
    if (threshold_rule(embeddings.col(j), y_binary, retained, cfg,
                       RuleSource::embedding_raw, "emb" + std::to_string(j + 1), rule))
      out.rules.push_back(std::move(rule));
    else
      ++out.n_degenerate;
  }
  return out;
}

std::vector<SubgroupEffect> interaction_scan(const Eigen::VectorXd& y,
                                             const std::vector<int>& z,
                                             const std::vector<SubgroupRule>& rules,
                                             const Eigen::VectorXd& weights,
                                             const std::vector<int>& set_ids,
                                             const ScanConfig& cfg) {
  const Eigen::Index n = y.size();
  if (static_cast<Eigen::Index>(z.size()) != n || weights.size() != n ||
      static_cast<Eigen::Index>(set_ids.size()) != n)
    throw data_error("interaction_scan: input lengths differ");

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i)
    if (weights(i) > 0) rows.push_back(i);
  if (rows.empty()) throw data_error("interaction_scan: no retained units");
  {
    std::vector<int> seen;
    for (Eigen::Index i : rows) seen.push_back(set_ids[i]);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    if (seen.size() < 2) throw infeasible_error("interaction_scan: fewer than 2 matched sets");
  }

  Eigen::VectorXd yy(rows.size()), ww(rows.size());
  std::vector<int> cl(rows.size()), zz(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    yy(r) = y(rows[r]);
    ww(r) = weights(rows[r]);
    cl[r] = set_ids[rows[r]];
    zz[r] = z[rows[r]];
  }

  std::vector<SubgroupEffect> out(rules.size());
  parallel_for(rules.size(), cfg.threads, [&](std::size_t k) {
    const SubgroupRule& rule = rules[k];
    SubgroupEffect& eff = out[k];
    eff.label = rule.label;
    eff.source = rule.source;
    if (static_cast<Eigen::Index>(rule.indicator.size()) != n) {
      eff.valid = false;
      return;
    }
    Eigen::MatrixXd x(rows.size(), 4);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const int g = rule.indicator[rows[r]];
      x(r, 0) = 1.0;
      x(r, 1) = zz[r];
      x(r, 2) = g;
      x(r, 3) = zz[r] * g;
    }
    WlsFit fit = cluster_wls(x, yy, ww, cl);
    if (!fit.ok) {
      eff.valid = false;
      return;
    }
    eff.interaction_estimate = fit.beta(3);
    eff.se = std::sqrt(std::max(0.0, fit.cov(3, 3)));
    if (eff.se <= 0) {
      eff.valid = false;
      return;
    }
    eff.p_value = normal_two_sided_p(eff.interaction_estimate / eff.se);
  });
  return out;
}

BhResult bh_fdr(const std::vector<double>& p_values, double q) {
  if (!(q > 0 && q < 1)) throw config_error("bh_fdr: q must be in (0,1)");
  const std::size_t m = p_values.size();
  for (double p : p_values)
    if (!(p >= 0 && p <= 1)) throw data_error("bh_fdr: p-values must lie in [0,1]");
  BhResult out;
  out.discovered.assign(m, false);
  out.q_values.assign(m, 1.0);
  if (m == 0) return out;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p_values[a] != p_values[b]) return p_values[a] < p_values[b];
    return a < b;
  });
  std::vector<double> qv(m);
  for (std::size_t r = 0; r < m; ++r)
    qv[r] = std::min(1.0, p_values[order[r]] * double(m) / double(r + 1));
  for (std::size_t r = m; r-- > 1;) qv[r - 1] = std::min(qv[r - 1], qv[r]);
  for (std::size_t r = 0; r < m; ++r) {
    out.q_values[order[r]] = qv[r];
    out.discovered[order[r]] = qv[r] <= q;
  }
  return out;
}

std::vector<double> shrink(const std::vector<double>& estimates,
                           const std::vector<double>& ses) {
  const std::size_t g = estimates.size();
  if (ses.size() != g) throw data_error("shrink: length mismatch");
  for (double s : ses)
    if (!(s > 0)) throw data_error("shrink: ses must be > 0");
  if (g <= 1) return estimates;

  double sw = 0, swe = 0, sw2 = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const double w = 1.0 / (ses[i] * ses[i]);
    sw += w;
    swe += w * estimates[i];
    sw2 += w * w;
  }
  const double mu = swe / sw;
  double qstat = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const double w = 1.0 / (ses[i] * ses[i]);
    qstat += w * (estimates[i] - mu) * (estimates[i] - mu);
  }
  const double denom = sw - sw2 / sw;
  const double tau2 = denom > 0 ? std::max(0.0, (qstat - double(g - 1)) / denom) : 0.0;

  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i) {
    const double v = ses[i] * ses[i];
    out[i] = mu + tau2 / (tau2 + v) * (estimates[i] - mu);
  }
  return out;
}

void finalize_scan(std::vector<SubgroupEffect>& scan, double fdr_q) {
  std::vector<std::size_t> valid;
  std::vector<double> ps, est, ses;
  for (std::size_t i = 0; i < scan.size(); ++i)
    if (scan[i].valid) {
      valid.push_back(i);
      ps.push_back(scan[i].p_value);
      est.push_back(scan[i].interaction_estimate);
      ses.push_back(scan[i].se);
    }
  if (valid.empty()) return;
  BhResult bh = bh_fdr(ps, fdr_q);
  std::vector<double> shr = shrink(est, ses);
  for (std::size_t r = 0; r < valid.size(); ++r) {
    scan[valid[r]].q_value = bh.q_values[r];
    scan[valid[r]].discovered = bh.discovered[r];
    scan[valid[r]].shrunken_estimate = shr[r];
  }
}

std::vector<SubgroupEffect> pool_subgroup_scan(
    const std::vector<std::vector<SubgroupEffect>>& scans, double fdr_q) {
  if (scans.empty()) throw data_error("pool_subgroup_scan: no scans");
  const std::size_t m = scans.size();
  const std::size_t n_rules = scans[0].size();
  for (const auto& s : scans) {
    if (s.size() != n_rules) throw data_error("pool_subgroup_scan: rule-set size mismatch");
    for (std::size_t r = 0; r < n_rules; ++r)
      if (s[r].label != scans[0][r].label || s[r].source != scans[0][r].source)
        throw data_error("pool_subgroup_scan: rule-set mismatch at '" + scans[0][r].label + "'");
  }

  std::vector<SubgroupEffect> pooled(n_rules);
  for (std::size_t r = 0; r < n_rules; ++r) {
    SubgroupEffect& eff = pooled[r];
    eff.label = scans[0][r].label;
    eff.source = scans[0][r].source;
    std::vector<double> est, var;
    bool all_valid = true;
    for (const auto& s : scans) {
      if (!s[r].valid) {
        all_valid = false;
        break;
      }
      est.push_back(s[r].interaction_estimate);
      var.push_back(s[r].se * s[r].se);
    }
    if (!all_valid) {
      eff.valid = false;
      continue;
    }
    impute::PooledEstimate pe = impute::rubin_pool(est, var);
    eff.interaction_estimate = pe.estimate;
    eff.se = pe.se;
    if (eff.se <= 0) {
      eff.valid = false;
      continue;
    }
    eff.p_value = normal_two_sided_p(eff.interaction_estimate / eff.se);
  }
  finalize_scan(pooled, fdr_q);
  return pooled;
}

}  // namespace textcaus::effects

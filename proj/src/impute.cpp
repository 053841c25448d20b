#include "textcaus/impute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "textcaus/common.hpp"

namespace textcaus::impute {

CovariateTable augment(const CovariateTable& x, const mnir::SrProjection& s) {
  if (s.scores.rows() != static_cast<Eigen::Index>(x.ids.size()))
    throw data_error("augment: SR score rows must match covariate rows");
  if (!s.scores.allFinite()) throw data_error("augment: SR scores must be finite");
  std::vector<std::string> names(s.scores.cols());
  for (Eigen::Index j = 0; j < s.scores.cols(); ++j) names[j] = std::to_string(j);
  return concat_columns(x, s.scores, names, kSrPrefix);
}

namespace {

struct RidgeDraw {
  Eigen::VectorXd beta_hat;   // includes intercept at 0
  Eigen::VectorXd beta_star;  // posterior draw
};

// Bayesian linear regression draw used by type-1 PMM.
RidgeDraw linear_draw(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                      double ridge, std::mt19937_64& rng) {
  const Eigen::Index q = design.cols();
  Eigen::MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    gram.diagonal().array() += 1e-4;
    llt.compute(gram);
  }
  RidgeDraw out;
  out.beta_hat = llt.solve(design.transpose() * y);
  const double rss = (y - design * out.beta_hat).squaredNorm();
  double dof = std::max<double>(1.0, double(design.rows()) - double(q));
  std::chi_squared_distribution<double> chi2(dof);
  double sigma2 = rss / std::max(chi2(rng), 1e-10);
  // beta* = beta_hat + sigma * L^-T z with LL^T = gram
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd zvec(q);
  for (Eigen::Index k = 0; k < q; ++k) zvec(k) = normal(rng);
  Eigen::MatrixXd lmat = llt.matrixL();
  Eigen::VectorXd scaled =
      lmat.transpose().triangularView<Eigen::Upper>().solve(zvec);
  out.beta_star = out.beta_hat + std::sqrt(sigma2) * scaled;
  return out;
}

Eigen::VectorXd logistic_draw(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              double ridge, std::mt19937_64& rng) {
  const Eigen::Index q = design.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd hess;
  for (int iter = 0; iter < 25; ++iter) {
    Eigen::VectorXd eta = design * beta;
    Eigen::VectorXd mu = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-6).matrix();
    Eigen::MatrixXd xtw = design.transpose() * w.asDiagonal();
    hess = xtw * design;
    hess.diagonal().array() += ridge + 1e-6;
    Eigen::VectorXd beta_new =
        hess.ldlt().solve(design.transpose() * (y - mu) + hess * beta);
    if (!beta_new.allFinite()) break;
    if (beta_new.norm() > 100.0) {
      beta = beta_new * (100.0 / beta_new.norm());
      break;
    }
    double step = (beta_new - beta).cwiseAbs().maxCoeff();
    beta = beta_new;
    if (step < 1e-8) break;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd zvec(q);
  for (Eigen::Index k = 0; k < q; ++k) zvec(k) = normal(rng);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd lmat = llt.matrixL();
    beta += lmat.transpose().triangularView<Eigen::Upper>().solve(zvec);
  }
  return beta;
}

}  // namespace

ImputedSet mice(const CovariateTable& x_star, std::uint64_t seed, const MiceConfig& cfg) {
  x_star.validate();
  if (cfg.m < 1) throw config_error("mice: m must be >= 1");
  if (cfg.n_iter < 1) throw config_error("mice: n_iter must be >= 1");
  if (cfg.pmm_donors < 1) throw config_error("mice: pmm_donors must be >= 1");
  const Eigen::Index n = x_star.values.rows();
  const Eigen::Index p = x_star.values.cols();
  if (n == 0 || p == 0) throw data_error("mice: empty table");

  struct ColInfo {
    Eigen::Index col;
    Eigen::Index n_missing;
    std::vector<Eigen::Index> observed_rows;
    std::vector<Eigen::Index> missing_rows;
  };
  std::vector<ColInfo> incomplete;
  for (Eigen::Index j = 0; j < p; ++j) {
    ColInfo info;
    info.col = j;
    for (Eigen::Index i = 0; i < n; ++i)
      (x_star.is_missing(i, j) ? info.missing_rows : info.observed_rows).push_back(i);
    info.n_missing = static_cast<Eigen::Index>(info.missing_rows.size());
    if (info.observed_rows.empty())
      throw data_error("mice: column '" + x_star.names[j] + "' is fully missing");
    if (info.n_missing > 0) incomplete.push_back(std::move(info));
  }
  std::stable_sort(incomplete.begin(), incomplete.end(),
                   [](const ColInfo& a, const ColInfo& b) { return a.n_missing < b.n_missing; });

  ImputedSet out;
  out.m = cfg.m;
  out.rng_seed = seed;
  out.completed.assign(cfg.m, x_star.values);
  std::vector<std::vector<std::string>> chain_warnings(cfg.m);

  parallel_for(static_cast<std::size_t>(cfg.m), cfg.threads, [&](std::size_t chain) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(chain)));
    Eigen::MatrixXd& vals = out.completed[chain];
    std::set<std::string> dropped;

    for (const auto& info : incomplete) {
      std::uniform_int_distribution<std::size_t> pick(0, info.observed_rows.size() - 1);
      for (Eigen::Index i : info.missing_rows)
        vals(i, info.col) = vals(info.observed_rows[pick(rng)], info.col);
    }

    for (int iter = 0; iter < cfg.n_iter; ++iter) {
      for (const auto& info : incomplete) {
        const Eigen::Index j = info.col;
        // Predictors: every other column, standardized on the current data;
        // zero-variance columns are dropped for this fit.
        std::vector<Eigen::Index> preds;
        for (Eigen::Index k = 0; k < p; ++k) {
          if (k == j) continue;
          double mean = vals.col(k).mean();
          double ss = (vals.col(k).array() - mean).square().sum();
          if (ss <= 1e-12) {
            dropped.insert(x_star.names[k]);
            continue;
          }
          preds.push_back(k);
        }
        const Eigen::Index q = static_cast<Eigen::Index>(preds.size()) + 1;
        const Eigen::Index n_obs = static_cast<Eigen::Index>(info.observed_rows.size());
        Eigen::MatrixXd design_obs(n_obs, q);
        Eigen::MatrixXd design_mis(info.n_missing, q);
        design_obs.col(0).setOnes();
        design_mis.col(0).setOnes();
        for (Eigen::Index c = 0; c < q - 1; ++c) {
          const Eigen::Index k = preds[c];
          double mean = vals.col(k).mean();
          double sd = std::sqrt((vals.col(k).array() - mean).square().sum() / double(n - 1));
          for (Eigen::Index r = 0; r < n_obs; ++r)
            design_obs(r, c + 1) = (vals(info.observed_rows[r], k) - mean) / sd;
          for (Eigen::Index r = 0; r < info.n_missing; ++r)
            design_mis(r, c + 1) = (vals(info.missing_rows[r], k) - mean) / sd;
        }
        Eigen::VectorXd y_obs(n_obs);
        for (Eigen::Index r = 0; r < n_obs; ++r) y_obs(r) = vals(info.observed_rows[r], j);

        if (x_star.kinds[j] == ColumnKind::binary) {
          const double ymin = y_obs.minCoeff(), ymax = y_obs.maxCoeff();
          if (ymin == ymax) {
            for (Eigen::Index i : info.missing_rows) vals(i, j) = ymin;
            continue;
          }
          Eigen::VectorXd beta = logistic_draw(design_obs, y_obs, cfg.ridge, rng);
          Eigen::VectorXd eta = design_mis * beta;
          std::uniform_real_distribution<double> unif(0.0, 1.0);
          for (Eigen::Index r = 0; r < info.n_missing; ++r) {
            double prob = 1.0 / (1.0 + std::exp(-std::clamp(eta(r), -30.0, 30.0)));
            vals(info.missing_rows[r], j) = unif(rng) < prob ? 1.0 : 0.0;
          }
        } else {
          RidgeDraw draw = linear_draw(design_obs, y_obs, cfg.ridge, rng);
          Eigen::VectorXd fit_obs = design_obs * draw.beta_hat;
          Eigen::VectorXd fit_mis = design_mis * draw.beta_star;
          // Type-1 PMM: nearest observed fitted values, one donor drawn.
          std::vector<Eigen::Index> order(n_obs);
          std::iota(order.begin(), order.end(), 0);
          const int k_donors = std::min<int>(cfg.pmm_donors, int(n_obs));
          std::uniform_int_distribution<int> pick_donor(0, k_donors - 1);
          for (Eigen::Index r = 0; r < info.n_missing; ++r) {
            const double target = fit_mis(r);
            std::partial_sort(order.begin(), order.begin() + k_donors, order.end(),
                              [&](Eigen::Index a, Eigen::Index b) {
                                double da = std::abs(fit_obs(a) - target);
                                double db = std::abs(fit_obs(b) - target);
                                if (da != db) return da < db;
                                return a < b;
                              });
            vals(info.missing_rows[r], j) = y_obs(order[pick_donor(rng)]);
          }
        }
      }
    }
    chain_warnings[chain].assign(dropped.begin(), dropped.end());
  });

  std::set<std::string> merged;
  for (const auto& w : chain_warnings) merged.insert(w.begin(), w.end());
  for (const auto& name : merged)
    out.warnings.push_back("zero-variance predictor dropped: " + name);
  return out;
}

namespace {

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // 0 marks a dropped (constant) column

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    s.sd.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double ss = (x.col(j).array() - s.mean(j)).square().sum();
      s.sd(j) = x.rows() > 1 ? std::sqrt(ss / double(x.rows() - 1)) : 0.0;
      if (s.sd(j) < 1e-12) s.sd(j) = 0.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out.col(j) = s_col(x.col(j), j);
    return out;
  }

  Eigen::VectorXd s_col(const Eigen::VectorXd& col, Eigen::Index j) const {
    if (sd(j) == 0.0) return Eigen::VectorXd::Zero(col.size());
    return ((col.array() - mean(j)) / sd(j)).matrix();
  }
};

Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& xs, const Eigen::VectorXd& yc,
                            double lambda) {
  Eigen::MatrixXd gram = xs.transpose() * xs;
  gram.diagonal().array() += lambda;
  return gram.ldlt().solve(xs.transpose() * yc);
}

// Ridge with lambda picked by deterministic inner k-fold CV; returns
// held-out predictions for x_test.
Eigen::VectorXd ridge_cv_predict(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train,
                                 const Eigen::MatrixXd& x_test, std::uint64_t seed) {
  const Eigen::Index n = x_train.rows();
  Standardizer sz = Standardizer::fit(x_train);
  Eigen::MatrixXd xs = sz.apply(x_train);
  const double ybar = y_train.mean();
  Eigen::VectorXd yc = y_train.array() - ybar;

  static constexpr double kGrid[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0};
  const int inner = n >= 10 ? 5 : 2;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  double best_sse = kInf;
  double best_lambda = kGrid[0];
  for (double lambda : kGrid) {
    double sse = 0.0;
    for (int f = 0; f < inner; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (Eigen::Index i = 0; i < n; ++i)
        (int(i % inner) == f ? te : tr).push_back(order[i]);
      if (tr.empty() || te.empty()) continue;
      Eigen::MatrixXd xtr(tr.size(), xs.cols());
      Eigen::VectorXd ytr(tr.size());
      for (std::size_t r = 0; r < tr.size(); ++r) {
        xtr.row(r) = xs.row(tr[r]);
        ytr(r) = yc(tr[r]);
      }
      Eigen::VectorXd beta = ridge_solve(xtr, ytr, lambda);
      for (Eigen::Index idx : te) {
        double pred = xs.row(idx).dot(beta);
        sse += (yc(idx) - pred) * (yc(idx) - pred);
      }
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_lambda = lambda;
    }
  }
  Eigen::VectorXd beta = ridge_solve(xs, yc, best_lambda);
  Eigen::MatrixXd xts = sz.apply(x_test);
  return (xts * beta).array() + ybar;
}

}  // namespace

CvResult cv_evaluate(const CovariateTable& x, const corpus::DocTermMatrix& dtm,
                     const std::string& target_column, const CvConfig& cfg) {
  x.validate();
  if (cfg.folds < 2) throw config_error("cv_evaluate: folds must be >= 2");
  const Eigen::Index tcol = x.column_index(target_column);
  if (tcol < 0) throw config_error("cv_evaluate: unknown target column '" + target_column + "'");
  if (dtm.n_docs != static_cast<int>(x.ids.size()))
    throw data_error("cv_evaluate: dtm rows must match covariate rows");

  const Eigen::Index n = x.values.rows();
  const Eigen::Index p = x.values.cols();
  std::vector<Eigen::Index> eval_rows;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!x.is_missing(i, tcol)) eval_rows.push_back(i);
  if (static_cast<int>(eval_rows.size()) < cfg.folds)
    throw data_error("cv_evaluate: fewer observed target rows than folds");

  std::mt19937_64 rng(derive_seed(cfg.seed, 0x6376));
  std::shuffle(eval_rows.begin(), eval_rows.end(), rng);
  std::vector<int> fold_of(eval_rows.size());
  for (std::size_t i = 0; i < eval_rows.size(); ++i) fold_of[i] = int(i % cfg.folds);

  std::vector<Eigen::Index> struct_cols;
  for (Eigen::Index j = 0; j < p; ++j)
    if (j != tcol) struct_cols.push_back(j);

  Eigen::VectorXd y_all(eval_rows.size());
  Eigen::VectorXd pred_a(eval_rows.size()), pred_b(eval_rows.size());
  for (std::size_t i = 0; i < eval_rows.size(); ++i) y_all(i) = x.values(eval_rows[i], tcol);

  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<std::size_t> tr_pos, te_pos;
    for (std::size_t i = 0; i < eval_rows.size(); ++i)
      (fold_of[i] == f ? te_pos : tr_pos).push_back(i);
    if (te_pos.empty()) continue;
    if (tr_pos.empty()) throw data_error("cv_evaluate: empty training fold");

    // Mean-impute remaining missing predictors with training-fold means.
    Eigen::VectorXd col_mean = Eigen::VectorXd::Zero(struct_cols.size());
    for (std::size_t c = 0; c < struct_cols.size(); ++c) {
      double sum = 0;
      int cnt = 0;
      for (std::size_t i : tr_pos) {
        const Eigen::Index row = eval_rows[i];
        if (!x.is_missing(row, struct_cols[c])) {
          sum += x.values(row, struct_cols[c]);
          ++cnt;
        }
      }
      col_mean(c) = cnt > 0 ? sum / cnt : 0.0;
    }
    auto fill_struct = [&](const std::vector<std::size_t>& pos) {
      Eigen::MatrixXd out(pos.size(), struct_cols.size());
      for (std::size_t r = 0; r < pos.size(); ++r) {
        const Eigen::Index row = eval_rows[pos[r]];
        for (std::size_t c = 0; c < struct_cols.size(); ++c)
          out(r, c) = x.is_missing(row, struct_cols[c]) ? col_mean(c)
                                                        : x.values(row, struct_cols[c]);
      }
      return out;
    };
    Eigen::MatrixXd xa_train = fill_struct(tr_pos);
    Eigen::MatrixXd xa_test = fill_struct(te_pos);

    // MNIR on the training fold's complete cases only, then SR scores for
    // every row from the shared vocabulary.
    std::vector<int> cc_rows;
    for (std::size_t i : tr_pos) {
      const Eigen::Index row = eval_rows[i];
      bool complete = true;
      for (Eigen::Index j = 0; j < p && complete; ++j)
        if (x.is_missing(row, j)) complete = false;
      if (complete) cc_rows.push_back(int(row));
    }
    Eigen::MatrixXd sr_train, sr_test;
    bool have_text = false;
    if (!cc_rows.empty()) {
      std::vector<Eigen::Index> mnir_cols;
      for (Eigen::Index j : struct_cols) {
        double first = x.values(cc_rows[0], j);
        bool varies = false;
        for (int r : cc_rows)
          if (x.values(r, j) != first) {
            varies = true;
            break;
          }
        if (varies) mnir_cols.push_back(j);
      }
      if (!mnir_cols.empty() &&
          static_cast<Eigen::Index>(cc_rows.size()) >= static_cast<Eigen::Index>(mnir_cols.size()) + 2) {
        Eigen::MatrixXd xm(cc_rows.size(), mnir_cols.size());
        for (std::size_t r = 0; r < cc_rows.size(); ++r)
          for (std::size_t c = 0; c < mnir_cols.size(); ++c)
            xm(r, c) = x.values(cc_rows[r], mnir_cols[c]);
        corpus::DocTermMatrix sub = corpus::subset_rows(dtm, cc_rows);
        mnir::MnirModel model = mnir::fit_mnir(sub, xm, cfg.mnir);
        mnir::SrProjection proj = mnir::sr_scores(dtm, model);
        sr_train.resize(tr_pos.size(), proj.scores.cols());
        sr_test.resize(te_pos.size(), proj.scores.cols());
        for (std::size_t r = 0; r < tr_pos.size(); ++r)
          sr_train.row(r) = proj.scores.row(eval_rows[tr_pos[r]]);
        for (std::size_t r = 0; r < te_pos.size(); ++r)
          sr_test.row(r) = proj.scores.row(eval_rows[te_pos[r]]);
        have_text = true;
      }
    }
    if (!have_text)
      throw data_error("cv_evaluate: too few complete cases to refit the text model");

    Eigen::VectorXd y_train(tr_pos.size());
    for (std::size_t r = 0; r < tr_pos.size(); ++r) y_train(r) = y_all(tr_pos[r]);

    Eigen::MatrixXd xb_train(tr_pos.size(), xa_train.cols() + sr_train.cols());
    xb_train << xa_train, sr_train;
    Eigen::MatrixXd xb_test(te_pos.size(), xa_test.cols() + sr_test.cols());
    xb_test << xa_test, sr_test;

    std::uint64_t fold_seed = derive_seed(cfg.seed, 0x100 + std::uint64_t(f));
    Eigen::VectorXd pa = ridge_cv_predict(xa_train, y_train, xa_test, fold_seed);
    Eigen::VectorXd pb = ridge_cv_predict(xb_train, y_train, xb_test, derive_seed(fold_seed, 1));
    for (std::size_t r = 0; r < te_pos.size(); ++r) {
      pred_a(te_pos[r]) = pa(r);
      pred_b(te_pos[r]) = pb(r);
    }
  }

  auto rmse = [&](const Eigen::VectorXd& pred) {
    return std::sqrt((y_all - pred).squaredNorm() / double(y_all.size()));
  };
  auto r2 = [&](const Eigen::VectorXd& pred) {
    double my = y_all.mean(), mp = pred.mean();
    double num = ((y_all.array() - my) * (pred.array() - mp)).sum();
    double den = std::sqrt((y_all.array() - my).square().sum() *
                           (pred.array() - mp).square().sum());
    if (den <= 0) return 0.0;
    double rho = num / den;
    return rho * rho;
  };

  CvResult res;
  res.folds = cfg.folds;
  res.n_evaluated = static_cast<int>(eval_rows.size());
  res.rmse_structured = rmse(pred_a);
  res.rmse_text = rmse(pred_b);
  res.r2_structured = r2(pred_a);
  res.r2_text = r2(pred_b);
  return res;
}

PooledEstimate rubin_pool(const std::vector<double>& estimates,
                          const std::vector<double>& variances, double dfcom) {
  const std::size_t m = estimates.size();
  if (m == 0) throw data_error("rubin_pool: no estimates");
  if (variances.size() != m) throw data_error("rubin_pool: estimate/variance length mismatch");
  for (double v : variances)
    if (!(v >= 0)) throw data_error("rubin_pool: variances must be >= 0");

  PooledEstimate out;
  double mean = 0;
  for (double e : estimates) mean += e;
  mean /= double(m);
  double w = 0;
  for (double v : variances) w += v;
  w /= double(m);
  double b = 0;
  if (m > 1) {
    for (double e : estimates) b += (e - mean) * (e - mean);
    b /= double(m - 1);
  }
  out.estimate = mean;
  out.within = w;
  out.between = b;
  const double total = w + (1.0 + 1.0 / double(m)) * b;
  out.se = std::sqrt(total);

  if (m == 1 || b == 0.0 || total == 0.0) {
    out.df = kInf;
    return out;
  }
  const double lambda = (1.0 + 1.0 / double(m)) * b / total;
  const double nu_old = double(m - 1) / (lambda * lambda);
  if (std::isfinite(dfcom)) {
    const double nu_obs = (dfcom + 1.0) / (dfcom + 3.0) * dfcom * (1.0 - lambda);
    out.df = nu_old * nu_obs / (nu_old + nu_obs);
  } else {
    out.df = nu_old;
  }
  return out;
}

}  // namespace textcaus::impute

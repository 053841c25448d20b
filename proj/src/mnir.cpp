#include "textcaus/mnir.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "textcaus/common.hpp"

namespace textcaus::mnir {

namespace {

struct TokenFit {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  bool converged = false;
  double deviance = 0.0;
};

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) > 0) dev += y(i) * std::log(y(i) / mu(i)) - (y(i) - mu(i));
    else dev += mu(i);
  }
  return 2.0 * dev;
}

// One penalized Poisson fit at a fixed penalty, warm-started in place.
void fit_at_penalty(const Eigen::MatrixXd& xs, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& m, double lambda, int max_iter, double tol,
                    TokenFit& fit) {
  const Eigen::Index n = xs.rows();
  const Eigen::Index p = xs.cols();
  Eigen::VectorXd eta = (xs * fit.beta).array() + fit.alpha;
  Eigen::VectorXd mu(n), w(n), r(n), vk(p);
  fit.converged = false;
  for (int outer = 0; outer < max_iter; ++outer) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double lin = std::clamp(eta(i), -30.0, 30.0);
      mu(i) = m(i) * std::exp(lin);
      w(i) = std::max(mu(i), 1e-10);
      r(i) = (y(i) - mu(i)) / w(i);  // z_i - eta_i for the working response
    }
    const double wsum = w.sum();
    for (Eigen::Index k = 0; k < p; ++k)
      vk(k) = w.dot(xs.col(k).cwiseProduct(xs.col(k))) / double(n);

    double max_step = 0.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
      double sweep_step = 0.0;
      double da = w.dot(r) / wsum;
      fit.alpha += da;
      r.array() -= da;
      sweep_step = std::max(sweep_step, std::abs(da));
      for (Eigen::Index k = 0; k < p; ++k) {
        if (vk(k) <= 0) continue;
        double g = w.dot(xs.col(k).cwiseProduct(r)) / double(n) + vk(k) * fit.beta(k);
        double bk = soft_threshold(g, lambda) / vk(k);
        double db = bk - fit.beta(k);
        if (db != 0.0) {
          fit.beta(k) = bk;
          r -= xs.col(k) * db;
          sweep_step = std::max(sweep_step, std::abs(db));
        }
      }
      max_step = std::max(max_step, sweep_step);
      if (sweep_step < tol) break;
    }
    eta = (xs * fit.beta).array() + fit.alpha;
    if (max_step < tol) {
      fit.converged = true;
      break;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    mu(i) = m(i) * std::exp(std::clamp(eta(i), -30.0, 30.0));
  fit.deviance = poisson_deviance(y, mu);
}

double aicc(const TokenFit& fit, Eigen::Index n) {
  int df = 1;
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k)
    if (fit.beta(k) != 0.0) ++df;
  double penalty_term = 2.0 * df;
  if (n - df - 1 > 0) penalty_term += 2.0 * df * (df + 1.0) / double(n - df - 1);
  else return kInf;
  return fit.deviance + penalty_term;
}

}  // namespace

MnirModel fit_mnir(const corpus::DocTermMatrix& dtm, const Eigen::MatrixXd& x,
                   const MnirConfig& cfg) {
  const Eigen::Index n_docs = static_cast<Eigen::Index>(dtm.n_docs);
  const Eigen::Index p = x.cols();
  const std::size_t d = static_cast<std::size_t>(dtm.vocab.size());
  if (x.rows() != n_docs) throw data_error("fit_mnir: x rows must equal dtm docs");
  if (!x.allFinite()) throw data_error("fit_mnir: x must be complete (no missing values)");
  if (p == 0) throw data_error("fit_mnir: no covariates");
  if (cfg.penalty < 0) throw config_error("fit_mnir: penalty must be >= 0");
  if (cfg.grid_size < 1) throw config_error("fit_mnir: grid_size must be >= 1");

  std::vector<Eigen::Index> fit_docs;
  for (Eigen::Index i = 0; i < n_docs; ++i)
    if (dtm.row_totals[i] > 0) fit_docs.push_back(i);
  const Eigen::Index n = static_cast<Eigen::Index>(fit_docs.size());
  if (n == 0) throw data_error("fit_mnir: every document is empty");
  if (n < p + 2) throw data_error("fit_mnir: need at least p+2 non-empty documents");

  MnirModel model;
  model.penalty = cfg.penalty;
  model.vocab_hash = dtm.vocab.content_hash();
  model.covariate_means.resize(p);
  model.covariate_sds.resize(p);
  Eigen::MatrixXd xs(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double mean = 0;
    for (Eigen::Index i = 0; i < n; ++i) mean += x(fit_docs[i], j);
    mean /= double(n);
    double ss = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = x(fit_docs[i], j) - mean;
      ss += c * c;
    }
    double sd = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
    if (sd <= 0)
      throw data_error("fit_mnir: zero-variance covariate at column " + std::to_string(j));
    model.covariate_means(j) = mean;
    model.covariate_sds(j) = sd;
    for (Eigen::Index i = 0; i < n; ++i) xs(i, j) = (x(fit_docs[i], j) - mean) / sd;
  }

  Eigen::VectorXd m(n);
  for (Eigen::Index i = 0; i < n; ++i) m(i) = double(dtm.row_totals[fit_docs[i]]);
  const double total_m = m.sum();

  model.phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), p);
  model.fit_diagnostics.assign(d, {});

  parallel_for(d, cfg.threads, [&](std::size_t j) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      y(i) = double(dtm.count_at(int(fit_docs[i]), int(j)));
    TokenDiagnostic& diag = model.fit_diagnostics[j];
    const double total_y = y.sum();
    if (total_y == 0) {
      diag.converged = true;
      diag.deviance = 0.0;
      diag.penalty = cfg.penalty;
      return;
    }
    const double alpha0 = std::log(total_y / total_m);
    Eigen::VectorXd mu0 = m * (total_y / total_m);
    double lambda_max = 0.0;
    for (Eigen::Index k = 0; k < xs.cols(); ++k)
      lambda_max = std::max(lambda_max,
                            std::abs(xs.col(k).dot(y - mu0)) / double(n));

    std::vector<double> grid;
    if (cfg.penalty > 0) {
      grid.push_back(cfg.penalty);
    } else if (lambda_max <= 0) {
      grid.push_back(0.0);
    } else {
      double lo = std::log(lambda_max * cfg.grid_min_ratio);
      double hi = std::log(lambda_max);
      for (int g = 0; g < cfg.grid_size; ++g) {
        double t = cfg.grid_size == 1
                       ? hi
                       : hi + (lo - hi) * double(g) / double(cfg.grid_size - 1);
        grid.push_back(std::exp(t));
      }
    }

    TokenFit fit;
    fit.alpha = alpha0;
    fit.beta = Eigen::VectorXd::Zero(xs.cols());
    bool have_best = false;
    double best_aicc = kInf;
    double best_deviance = 0.0;
    Eigen::VectorXd best_beta;
    for (double lambda : grid) {
      fit_at_penalty(xs, y, m, lambda, cfg.max_iter, cfg.tol, fit);
      if (!fit.converged) continue;
      double score = aicc(fit, n);
      if (!have_best || score < best_aicc) {
        have_best = true;
        best_aicc = score;
        best_deviance = fit.deviance;
        best_beta = fit.beta;
        diag.penalty = lambda;
      }
    }
    if (!have_best) {
      diag.converged = false;
      diag.deviance = fit.deviance;
      diag.penalty = grid.back();
      return;  // phi row stays zero
    }
    diag.converged = true;
    diag.deviance = best_deviance;
    model.phi.row(static_cast<Eigen::Index>(j)) = best_beta.transpose();
  });

  return model;
}

SrProjection sr_scores(const corpus::DocTermMatrix& dtm, const MnirModel& model) {
  if (dtm.vocab.content_hash() != model.vocab_hash)
    throw data_error("sr_scores: dtm vocabulary does not match the model's");
  const Eigen::Index n = static_cast<Eigen::Index>(dtm.n_docs);
  const Eigen::Index p = model.phi.cols();
  SrProjection out;
  out.scores = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dtm.row_totals[i] == 0) continue;
    for (std::size_t e = dtm.row_ptr[i]; e < dtm.row_ptr[i + 1]; ++e)
      out.scores.row(i) += double(dtm.count[e]) * model.phi.row(dtm.col_idx[e]);
    out.scores.row(i) /= double(dtm.row_totals[i]);
  }
  return out;
}

void save_mnir(const MnirModel& model, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw data_error("save_mnir: cannot open " + path);
  f << std::setprecision(17);
  f << "textcaus-mnir v1\n";
  f << "vocab_hash " << model.vocab_hash << "\n";
  f << "dims " << model.phi.rows() << " " << model.phi.cols() << "\n";
  f << "penalty " << model.penalty << "\n";
  for (Eigen::Index j = 0; j < model.covariate_means.size(); ++j)
    f << (j ? " " : "") << model.covariate_means(j);
  f << "\n";
  for (Eigen::Index j = 0; j < model.covariate_sds.size(); ++j)
    f << (j ? " " : "") << model.covariate_sds(j);
  f << "\n";
  for (Eigen::Index r = 0; r < model.phi.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.phi.cols(); ++c)
      f << (c ? " " : "") << model.phi(r, c);
    f << "\n";
  }
  for (const auto& diag : model.fit_diagnostics)
    f << diag.converged << " " << diag.deviance << " " << diag.penalty << "\n";
  if (!f) throw data_error("save_mnir: write failed for " + path);
}

MnirModel load_mnir(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("load_mnir: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "textcaus-mnir v1")
    throw data_error("load_mnir: unrecognized file header in " + path);
  MnirModel model;
  std::string tag;
  Eigen::Index d = 0, p = 0;
  f >> tag >> model.vocab_hash;
  if (tag != "vocab_hash") throw data_error("load_mnir: malformed file " + path);
  f >> tag >> d >> p;
  if (tag != "dims" || d < 0 || p <= 0) throw data_error("load_mnir: malformed file " + path);
  f >> tag >> model.penalty;
  if (tag != "penalty") throw data_error("load_mnir: malformed file " + path);
  model.covariate_means.resize(p);
  model.covariate_sds.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) f >> model.covariate_means(j);
  for (Eigen::Index j = 0; j < p; ++j) f >> model.covariate_sds(j);
  model.phi.resize(d, p);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < p; ++c) f >> model.phi(r, c);
  model.fit_diagnostics.resize(d);
  for (auto& diag : model.fit_diagnostics)
    f >> diag.converged >> diag.deviance >> diag.penalty;
  if (!f) throw data_error("load_mnir: truncated file " + path);
  return model;
}

}  // namespace textcaus::mnir

// End-to-end acceptance harness. Each criterion prints one PASS/FAIL line;
// the process exits nonzero when any criterion fails. Tolerances and pass
// bars are pinned as constants below.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "support/testutil.hpp"
#include "textcaus/common.hpp"
#include "textcaus/config.hpp"
#include "textcaus/corpus.hpp"
#include "textcaus/effects.hpp"
#include "textcaus/impute.hpp"
#include "textcaus/io.hpp"
#include "textcaus/match.hpp"
#include "textcaus/mnir.hpp"
#include "textcaus/pipeline.hpp"
#include "textcaus/synth.hpp"
#include "textcaus/table.hpp"

namespace fs = std::filesystem;
using namespace textcaus;

namespace {

// ---- pinned tolerances and pass bars -------------------------------------
constexpr double kTolExact = 1e-10;        // micro-oracle agreement
constexpr double kTolMatchCost = 1e-9;     // total-cost agreement on grid distances
constexpr int kMatchInstances = 1000;      // criterion 1 instance count
constexpr double kMatchBudgetSec = 60.0;   // criterion 1 runtime bound
constexpr int kSrInstances = 100;          // criterion 2 instance count
constexpr double kCvWinRatio = 0.9;        // criterion 4: text wins at <= 0.9x RMSE
constexpr int kCvReps = 20;                // criterion 4 replications
constexpr int kCvColumnsNeeded = 4;        // criterion 4: winning columns required
constexpr double kCvBudgetSec = 600.0;     // criterion 4 runtime bound
constexpr int kBalanceReps = 10;           // criterion 5 replications
constexpr double kBalanceRatio = 0.5;      // criterion 5: text SMD <= 50% of psm SMD
constexpr double kBalanceStructBar = 0.15; // criterion 5: structured SMD bar
constexpr int kEffectReps = 50;            // criterion 6 replications
constexpr int kEffectCoverNeeded = 45;     // >= 90% coverage
constexpr int kEffectBiasNeeded = 40;      // >= 80% unadjusted bias detection
constexpr double kTrueAtt = 0.09;          // criterion 6 planted effect
constexpr int kScanReps = 50;              // criterion 7 replications per arm
constexpr int kScanPowerNeeded = 40;       // >= 80% planted discovery
constexpr double kScanFdrBar = 0.10;       // criterion 7 null-arm FDR bar
constexpr double kScanDelta = 0.3;         // criterion 7 planted interaction
constexpr int kScanN = 2625;               // criterion 7 sample size
constexpr int kPlantedTokenIndex = 32;     // carrier share ~0.44 at kScanN

struct Criterion {
  std::string name;
  std::function<bool(std::string&)> run;
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* pattern, ...) {
  va_list args;
  va_start(args, pattern);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return std::string(buf);
}

// Shared corpus construction: unigram tokens over all notes, df-pruned.
corpus::DocTermMatrix make_dtm(const synth::SynthDataset& data, int min_df = 5) {
  corpus::TokenizeConfig tok = corpus::TokenizeConfig::defaults();
  tok.ngram_max = 1;
  std::vector<corpus::PatientDoc> docs = corpus::aggregate_patient_docs(data.notes, 24.0);
  std::vector<std::vector<std::string>> token_docs;
  token_docs.reserve(docs.size());
  for (const auto& d : docs) token_docs.push_back(corpus::tokenize(d.text, tok));
  corpus::Vocabulary vocab = corpus::build_vocabulary(token_docs, {min_df, 0.95});
  return corpus::build_dtm(token_docs, vocab);
}

struct Matched {
  match::PropensityModel prop;
  match::MatchedSample psm;
  match::MatchedSample text;
};

// Propensity on the completed structured covariates, shared calipers, then
// propensity-distance and cosine-distance optimal full matches.
Matched run_matching(const Eigen::MatrixXd& xs, const std::vector<int>& z,
                     const corpus::DocTermMatrix& dtm, double caliper_width,
                     const match::FullMatchConfig& fm = {}) {
  Matched out;
  out.prop = match::fit_propensity(xs, z);
  match::CaliperGraph graph = match::caliper_graph(out.prop, z, caliper_width);
  std::vector<double> dist(graph.n_edges());
  for (std::size_t t = 0; t < graph.treated.size(); ++t)
    for (std::size_t e = graph.adj_ptr[t]; e < graph.adj_ptr[t + 1]; ++e)
      dist[e] = std::abs(out.prop.scores(graph.treated[t]) -
                         out.prop.scores(graph.controls[graph.adj[e]]));
  out.psm = match::optimal_full_match(graph, dist, fm);
  out.text = match::text_match_within_calipers(dtm, graph, fm);
  return out;
}

// ---- criterion 1: matching optimality vs exhaustive search ---------------
bool criterion_matching(std::string& detail) {
  const double t0 = now_s();
  testutil::Rng rng(20240901);
  int agreed = 0;
  for (int it = 0; it < kMatchInstances; ++it) {
    const int nt = testutil::rint(rng, 1, 4);
    const int nc = testutil::rint(rng, 1, 4);
    const double edge_prob = testutil::runif(rng, 0.25, 1.0);
    match::CaliperGraph graph = testutil::random_graph(rng, nt, nc, edge_prob);
    // Grid-valued distances make the scaled integer costs lossless, so the
    // optimum is comparable to the enumeration at fixed precision.
    std::vector<double> dist(graph.n_edges());
    for (auto& d : dist) d = 1e-4 * testutil::rint(rng, 0, 20000);

    const double expected = testutil::brute_force_full_match(graph, dist);
    bool ok = false;
    try {
      match::MatchedSample sample = match::optimal_full_match(graph, dist);
      ok = std::isfinite(expected) &&
           std::abs(sample.total_distance - expected) <= kTolMatchCost;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::infeasible) throw;
      ok = std::isinf(expected);
    }
    if (ok) ++agreed;
  }
  const double elapsed = now_s() - t0;
  detail = fmt("%d/%d instances match exhaustive search, %.1f s (budget %.0f s)", agreed,
               kMatchInstances, elapsed, kMatchBudgetSec);
  return agreed == kMatchInstances && elapsed < kMatchBudgetSec;
}

// ---- criterion 2: SR scores vs dense C_i Phi / m_i -----------------------
bool criterion_sr_scores(std::string& detail) {
  testutil::Rng rng(77001);
  std::normal_distribution<double> normal(0.0, 1.0);
  int agreed = 0;
  double worst = 0.0;
  for (int it = 0; it < kSrInstances; ++it) {
    const int n = testutil::rint(rng, 2, 50);
    const int d = testutil::rint(rng, 10, 200);
    const int p = testutil::rint(rng, 1, 10);
    corpus::DocTermMatrix dtm = testutil::random_dtm(rng, n, d, 0.3, 5);
    mnir::MnirModel model;
    model.vocab_hash = dtm.vocab.content_hash();
    model.phi.resize(dtm.vocab.size(), p);
    for (Eigen::Index i = 0; i < model.phi.size(); ++i) model.phi(i) = normal(rng);
    model.covariate_means = Eigen::VectorXd::Zero(p);
    model.covariate_sds = Eigen::VectorXd::Ones(p);

    mnir::SrProjection sr = mnir::sr_scores(dtm, model);
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(p);
      if (dtm.row_totals[i] > 0)
        expected = dtm.dense_row(i).transpose() * model.phi /
                   static_cast<double>(dtm.row_totals[i]);
      err = std::max(err, (sr.scores.row(i) - expected).cwiseAbs().maxCoeff());
    }
    worst = std::max(worst, err);
    if (err <= kTolExact) ++agreed;
  }
  detail = fmt("%d/%d instances within %.0e (worst %.2e)", agreed, kSrInstances, kTolExact,
               worst);
  return agreed == kSrInstances;
}

// ---- criterion 3: statistical micro-oracles ------------------------------
bool criterion_micro_oracles(std::string& detail) {
  std::vector<std::string> fails;

  impute::PooledEstimate pooled = impute::rubin_pool({1.0, 3.0}, {1.0, 1.0});
  if (std::abs(pooled.estimate - 2.0) > kTolExact || std::abs(pooled.se - 2.0) > kTolExact)
    fails.push_back(fmt("rubin_pool est=%.12f se=%.12f", pooled.estimate, pooled.se));

  effects::BhResult bh = effects::bh_fdr({0.01, 0.02, 0.04, 0.5}, 0.05);
  int n_disc = 0;
  for (bool b : bh.discovered) n_disc += b;
  if (n_disc != 2) fails.push_back(fmt("bh_fdr discoveries=%d", n_disc));

  Eigen::VectorXd xy(4);
  xy << 1, 2, 3, 4;
  const double cut = effects::youden_threshold(xy, {0, 0, 1, 1});
  if (std::abs(cut - 2.5) > kTolExact) fails.push_back(fmt("youden=%.12f", cut));

  // Two-set weighted hand example; the sandwich below re-derives the
  // cluster-robust SE from first principles.
  Eigen::VectorXd y(5), w(5);
  y << 3, 1, 2, 5, 2;
  w << 1, 0.5, 0.5, 1, 1;
  const std::vector<int> z = {1, 0, 0, 1, 0};
  const std::vector<int> sets = {0, 0, 0, 1, 1};
  effects::EffectEstimate att = effects::att_estimate(y, z, w, sets);

  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 5; ++i) {
    Eigen::Vector2d x(1.0, static_cast<double>(z[i]));
    a += w(i) * x * x.transpose();
  }
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (int i = 0; i < 5; ++i) b += w(i) * y(i) * Eigen::Vector2d(1.0, z[i]);
  Eigen::Vector2d beta = a.inverse() * b;
  Eigen::Matrix2d meat = Eigen::Matrix2d::Zero();
  for (int g = 0; g < 2; ++g) {
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    for (int i = 0; i < 5; ++i) {
      if (sets[i] != g) continue;
      const double resid = y(i) - beta(0) - beta(1) * z[i];
      score += w(i) * resid * Eigen::Vector2d(1.0, z[i]);
    }
    meat += score * score.transpose();
  }
  Eigen::Matrix2d cov = 2.0 * a.inverse() * meat * a.inverse();  // G/(G-1) = 2
  const double se_closed = std::sqrt(cov(1, 1));
  if (std::abs(att.estimate - beta(1)) > kTolExact || std::abs(att.se - se_closed) > kTolExact)
    fails.push_back(fmt("att est=%.12f vs %.12f, se=%.12f vs %.12f", att.estimate, beta(1),
                        att.se, se_closed));
  if (std::abs(att.estimate - 2.25) > kTolExact || std::abs(att.se - 0.75) > kTolExact)
    fails.push_back(fmt("att hand values est=%.12f se=%.12f", att.estimate, att.se));

  if (fails.empty()) {
    detail = fmt("rubin_pool, bh_fdr, youden_threshold, att sandwich all within %.0e",
                 kTolExact);
    return true;
  }
  detail.clear();
  for (const auto& f : fails) detail += (detail.empty() ? "" : "; ") + f;
  return false;
}

// ---- criterion 4: text-assisted imputation beats structured-only ---------
bool criterion_imputation(std::string& detail) {
  const double t0 = now_s();
  std::vector<int> wins(5, 0);
  for (int rep = 0; rep < kCvReps; ++rep) {
    synth::SynthConfig cfg;
    cfg.n_patients = 700;
    cfg.p_covariates = 12;
    cfg.vocab_size = 150;
    cfg.notes_per_patient = {2, 4};
    cfg.text_signal_strength = 2.5;  // the "strong" signal regime
    cfg.confounding_strength = 0.5;
    cfg.true_att = kTrueAtt;
    cfg.missing_rates = {0, 0.2, 0.2, 0.2, 0.2, 0.2};
    cfg.mar_dependence = {0.0, 0.0};  // MCAR
    cfg.seed = 9000 + static_cast<std::uint64_t>(rep);
    synth::SynthDataset data = synth::generate(cfg);
    corpus::DocTermMatrix dtm = make_dtm(data);
    for (int c = 1; c <= 5; ++c) {
      impute::CvConfig cv;
      cv.folds = 5;
      cv.seed = 1234 + static_cast<std::uint64_t>(rep);
      cv.mnir.penalty = 0.1;
      char name[16];
      std::snprintf(name, sizeof(name), "cov%02d", c);
      impute::CvResult res = impute::cv_evaluate(data.covariates, dtm, name, cv);
      if (res.rmse_text <= kCvWinRatio * res.rmse_structured) ++wins[c - 1];
    }
  }
  const double elapsed = now_s() - t0;
  int columns_won = 0;
  std::string per_col;
  for (int c = 0; c < 5; ++c) {
    if (2 * wins[c] > kCvReps) ++columns_won;
    per_col += fmt("%s%d/%d", c ? ", " : "", wins[c], kCvReps);
  }
  detail = fmt("%d/5 columns win majority (wins: %s), %.0f s (budget %.0f s)", columns_won,
               per_col.c_str(), elapsed, kCvBudgetSec);
  return columns_won >= kCvColumnsNeeded && elapsed < kCvBudgetSec;
}

// ---- criterion 5: text matching balances the text-only confounder --------
bool criterion_balance(std::string& detail) {
  double sum_psm = 0, sum_text = 0, sum_struct = 0;
  for (int rep = 0; rep < kBalanceReps; ++rep) {
    synth::SynthConfig cfg;
    cfg.n_patients = 900;
    cfg.p_covariates = 8;
    cfg.vocab_size = 120;
    cfg.notes_per_patient = {4, 7};  // longer records sharpen the cosine signal
    cfg.text_signal_strength = 1.5;
    cfg.confounding_strength = 0.8;
    cfg.true_att = kTrueAtt;
    cfg.seed = 4000 + static_cast<std::uint64_t>(rep);
    synth::SynthDataset data = synth::generate(cfg);
    corpus::DocTermMatrix dtm = make_dtm(data);
    Matched m = run_matching(data.covariates_full.values, data.z, dtm, 0.1);

    corpus::KeyTermMatrix terms =
        corpus::key_term_covariates(dtm, data.ground_truth.confounder_tokens);
    synth::RunOutputs out;
    out.balance_psm = match::balance_table(data.covariates_full.values,
                                           data.covariates_full.names, terms.values,
                                           terms.terms, data.z, m.psm.weights);
    out.balance_text = match::balance_table(data.covariates_full.values,
                                            data.covariates_full.names, terms.values,
                                            terms.terms, data.z, m.text.weights);
    synth::Scorecard card = synth::evaluate_run(data, out);
    sum_psm += card.planted_text_smd_psm;
    sum_text += card.planted_text_smd_text;
    sum_struct += card.max_structured_abs_smd_text;
  }
  const double mean_psm = sum_psm / kBalanceReps;
  const double mean_text = sum_text / kBalanceReps;
  const double mean_struct = sum_struct / kBalanceReps;
  detail = fmt("planted-text SMD %.3f (text) vs %.3f (psm), ratio %.2f (bar %.2f); "
               "structured max %.3f (bar %.2f)",
               mean_text, mean_psm, mean_text / mean_psm, kBalanceRatio, mean_struct,
               kBalanceStructBar);
  return mean_text <= kBalanceRatio * mean_psm && mean_struct < kBalanceStructBar;
}

// ---- criterion 6: pooled text-matched ATT recovers the truth -------------
bool criterion_att_recovery(std::string& detail) {
  const double t0 = now_s();
  int covered = 0, biased = 0;
  for (int rep = 0; rep < kEffectReps; ++rep) {
    synth::SynthConfig cfg;
    cfg.n_patients = 1000;
    cfg.p_covariates = 10;
    cfg.vocab_size = 150;
    cfg.notes_per_patient = {2, 4};
    cfg.text_signal_strength = 1.5;
    cfg.confounding_strength = 0.8;
    cfg.true_att = kTrueAtt;
    cfg.missing_rates = {0, 0.15, 0.15, 0.15};
    cfg.seed = 7000 + static_cast<std::uint64_t>(rep);
    synth::SynthDataset data = synth::generate(cfg);
    const int n = cfg.n_patients;
    corpus::DocTermMatrix dtm = make_dtm(data);

    // Text-assisted chain: MNIR on complete cases, SR augment, MICE, then a
    // text match and ATT per imputation, pooled by Rubin's rules.
    std::vector<int> complete;
    for (int i = 0; i < n; ++i) {
      bool ok = dtm.row_totals[i] > 0;
      for (int j = 0; j < data.covariates.n_cols() && ok; ++j)
        ok = !data.covariates.is_missing(i, j);
      if (ok) complete.push_back(i);
    }
    Eigen::MatrixXd x_cc(static_cast<Eigen::Index>(complete.size()),
                         data.covariates.n_cols());
    for (std::size_t i = 0; i < complete.size(); ++i)
      x_cc.row(static_cast<Eigen::Index>(i)) = data.covariates.values.row(complete[i]);
    mnir::MnirConfig mc;
    mc.penalty = 0.1;
    mnir::MnirModel model = mnir::fit_mnir(corpus::subset_rows(dtm, complete), x_cc, mc);
    mnir::SrProjection sr = mnir::sr_scores(dtm, model);
    CovariateTable aug = impute::augment(data.covariates, sr);

    impute::MiceConfig ic;
    ic.m = 3;
    ic.n_iter = 5;
    impute::ImputedSet imp = impute::mice(aug, 5550 + static_cast<std::uint64_t>(rep), ic);

    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = data.y[i];
    std::vector<double> ests, vars;
    const int p = data.covariates.n_cols();
    for (int k = 0; k < imp.m; ++k) {
      Matched m = run_matching(imp.completed[k].leftCols(p), data.z, dtm, 0.1);
      effects::EffectEstimate fit =
          effects::att_estimate(y, data.z, m.text.weights, m.text.set_index);
      ests.push_back(fit.estimate);
      vars.push_back(fit.se * fit.se);
    }
    impute::PooledEstimate pooled = impute::rubin_pool(ests, vars);
    if (std::abs(pooled.estimate - kTrueAtt) <= 2.0 * pooled.se) ++covered;

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    std::vector<int> singleton(n);
    for (int i = 0; i < n; ++i) singleton[i] = i;
    effects::EffectEstimate unadj = effects::att_estimate(y, data.z, ones, singleton);
    if (std::abs(unadj.estimate - kTrueAtt) > 2.0 * unadj.se) ++biased;
  }
  detail = fmt("coverage %d/%d (need >= %d), unadjusted biased %d/%d (need >= %d), %.0f s",
               covered, kEffectReps, kEffectCoverNeeded, biased, kEffectReps,
               kEffectBiasNeeded, now_s() - t0);
  return covered >= kEffectCoverNeeded && biased >= kEffectBiasNeeded;
}

// ---- criterion 7: heterogeneity scan power, FDR, shrinkage ---------------
struct ScanRep {
  bool hit = false;
  int n_disc = 0;
  int n_false = 0;
  double sq_err_raw = 0;
  double sq_err_shrunk = 0;
  long n_rules = 0;
};

ScanRep scan_once(std::uint64_t seed, bool plant) {
  synth::SynthConfig cfg = synth::paper_like_config(seed);
  if (cfg.n_patients != kScanN)
    throw data_error("acceptance: unexpected replication-scale patient count");
  cfg.missing_rates = {0};  // complete covariates: the scan is the target here
  if (plant) cfg.planted_interaction = {kPlantedTokenIndex, kScanDelta};
  synth::SynthDataset data = synth::generate(cfg);
  corpus::DocTermMatrix dtm = make_dtm(data);

  Matched m;
  try {
    m = run_matching(data.covariates_full.values, data.z, dtm, 0.35, {6, 6});
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::infeasible) throw;
    // Rare control-sparse score regions make ratio bounds infeasible; the
    // unbounded match is always available.
    m = run_matching(data.covariates_full.values, data.z, dtm, 0.35, {});
  }

  std::vector<int> retained;
  for (int i = 0; i < m.text.n_units; ++i)
    if (m.text.weights(i) > 0) retained.push_back(i);
  effects::RuleBuildResult rules = effects::token_rules(dtm, retained, {});

  Eigen::VectorXd y(cfg.n_patients);
  for (int i = 0; i < cfg.n_patients; ++i) y(i) = data.y[i];
  std::vector<effects::SubgroupEffect> scan = effects::interaction_scan(
      y, data.z, rules.rules, m.text.weights, m.text.set_index, {});
  effects::finalize_scan(scan, 0.05);

  ScanRep rep;
  for (std::size_t ri = 0; ri < scan.size(); ++ri) {
    const auto& s = scan[ri];
    if (!s.valid) continue;
    const bool is_planted = plant && s.source == effects::RuleSource::token_presence &&
                            s.label == data.ground_truth.planted_token;
    if (s.discovered) {
      ++rep.n_disc;
      if (is_planted)
        rep.hit = true;
      else
        ++rep.n_false;
    }
    // Truth for every rule: weighted contrast of the generator's individual
    // effects (y1 - y0) between the rule's cells on the matched sample.
    const auto& ind = rules.rules[ri].indicator;
    double sw1 = 0, sw0 = 0, s1 = 0, s0 = 0;
    for (int i = 0; i < cfg.n_patients; ++i) {
      const double w = m.text.weights(i);
      if (w <= 0) continue;
      const double te = data.y1[i] - data.y0[i];
      if (ind[i]) {
        sw1 += w;
        s1 += w * te;
      } else {
        sw0 += w;
        s0 += w * te;
      }
    }
    const double truth = s1 / sw1 - s0 / sw0;
    rep.sq_err_raw += (s.interaction_estimate - truth) * (s.interaction_estimate - truth);
    rep.sq_err_shrunk += (s.shrunken_estimate - truth) * (s.shrunken_estimate - truth);
    ++rep.n_rules;
  }
  return rep;
}

bool criterion_heterogeneity(std::string& detail) {
  const double t0 = now_s();
  int hits = 0;
  double sq_raw = 0, sq_shr = 0;
  long n_rules = 0;
  for (int rep = 0; rep < kScanReps; ++rep) {
    ScanRep r = scan_once(100 + static_cast<std::uint64_t>(rep), true);
    hits += r.hit;
    sq_raw += r.sq_err_raw;
    sq_shr += r.sq_err_shrunk;
    n_rules += r.n_rules;
  }
  double fdr_sum = 0;
  for (int rep = 0; rep < kScanReps; ++rep) {
    ScanRep r = scan_once(300 + static_cast<std::uint64_t>(rep), false);
    fdr_sum += r.n_disc > 0 ? static_cast<double>(r.n_false) / r.n_disc : 0.0;
  }
  const double mean_fdr = fdr_sum / kScanReps;
  const double mse_raw = sq_raw / static_cast<double>(n_rules);
  const double mse_shr = sq_shr / static_cast<double>(n_rules);
  detail = fmt("planted found %d/%d (need >= %d); null-arm FDR %.3f (bar %.2f); "
               "MSE shrunken %.2e vs raw %.2e; %.0f s",
               hits, kScanReps, kScanPowerNeeded, mean_fdr, kScanFdrBar, mse_shr, mse_raw,
               now_s() - t0);
  return hits >= kScanPowerNeeded && mean_fdr <= kScanFdrBar && mse_shr < mse_raw;
}

// ---- criterion 8: byte-identical reruns at 1 and 8 threads ---------------
std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("acceptance: cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

const std::vector<std::string> kComparedOutputs = {
    "match/balance.csv",        "effects/effects.csv",
    "hetfx/scan.csv",           "report/imputation_comparison.csv",
    "report/balance.csv",       "report/effects.csv",
    "report/subgroups.csv",     "report/summary.txt",
};

bool criterion_determinism(std::string& detail) {
  const fs::path root = fs::temp_directory_path() / "textcaus_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  synth::SynthConfig scfg;
  scfg.n_patients = 200;
  scfg.p_covariates = 6;
  scfg.vocab_size = 60;
  scfg.notes_per_patient = {2, 3};
  scfg.confounding_strength = 0.5;
  scfg.true_att = 0.1;
  scfg.missing_rates = {0.0, 0.25, 0.25};
  scfg.seed = 2024;
  io::write_synth_dataset(synth::generate(scfg), (root / "data").string());

  auto write_config = [&](const std::string& name, const std::string& out_dir,
                          int threads) {
    std::ostringstream os;
    os << "{\n"
       << "  \"seed\": 11,\n"
       << "  \"output_dir\": \"" << out_dir << "\",\n"
       << "  \"threads\": " << threads << ",\n"
       << "  \"inputs\": {\n"
       << "    \"notes\": \"data/notes.jsonl\",\n"
       << "    \"covariates\": \"data/covariates.csv\",\n"
       << "    \"treatment_outcome\": \"data/treatment_outcome.csv\"\n"
       << "  },\n"
       << "  \"preprocessing\": {\"ngram_max\": 1, \"min_df\": 2},\n"
       << "  \"mnir\": {\"penalty\": 0.05},\n"
       << "  \"mice\": {\"m\": 2, \"n_iter\": 3},\n"
       << "  \"matching\": {\"caliper_width\": 0.35},\n"
       << "  \"scan\": {\"methods\": [\"structured\", \"token\"], \"min_subgroup\": 10},\n"
       << "  \"report\": {\"cv_folds\": 4, \"cv_targets\": [\"cov01\"]}\n"
       << "}\n";
    const fs::path path = root / (name + ".json");
    std::ofstream f(path);
    f << os.str();
    return path.string();
  };

  auto run_once = [&](const std::string& tag, int threads) {
    const fs::path out = root / tag;
    config::RunConfig cfg = config::load_run_config(write_config(tag, out.string(), threads));
    pipeline::run_pipeline(cfg);
    return out;
  };

  const fs::path a1 = run_once("t1_a", 1);
  const fs::path b1 = run_once("t1_b", 1);
  const fs::path a8 = run_once("t8_a", 8);
  const fs::path b8 = run_once("t8_b", 8);

  int mismatched = 0;
  for (const auto& rel : kComparedOutputs) {
    const std::string ref = slurp(a1 / rel);
    if (slurp(b1 / rel) != ref || slurp(a8 / rel) != ref || slurp(b8 / rel) != ref)
      ++mismatched;
  }
  fs::remove_all(root);
  detail = fmt("%zu report files compared across 2 runs x {1, 8} threads; %d mismatched",
               kComparedOutputs.size(), mismatched);
  return mismatched == 0;
}

// ---- criterion 9: module property suites ---------------------------------
bool criterion_property_suites(std::string& detail) {
#ifdef TEXTCAUS_TESTS_PATH
  const std::string cmd = std::string(TEXTCAUS_TESTS_PATH) + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  const bool ok = status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  detail = ok ? "unit binary green (includes the >=200-case property suites per module)"
              : fmt("unit binary exited with status %d", status);
  return ok;
#else
  detail = "unit binary path missing from the build";
  return false;
#endif
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {"matching optimality", criterion_matching},
      {"sr-score oracle", criterion_sr_scores},
      {"statistical micro-oracles", criterion_micro_oracles},
      {"text-assisted imputation", criterion_imputation},
      {"confounder balance", criterion_balance},
      {"att recovery", criterion_att_recovery},
      {"heterogeneity scan", criterion_heterogeneity},
      {"determinism", criterion_determinism},
      {"property suites", criterion_property_suites},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool pass = false;
    try {
      pass = criteria[i].run(detail);
    } catch (const Error& e) {
      detail = fmt("exception: %s", e.what());
    } catch (const std::exception& e) {
      detail = fmt("exception: %s", e.what());
    }
    std::printf("criterion %zu (%s): %s — %s\n", i + 1, criteria[i].name.c_str(),
                pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  if (failures == 0)
    std::printf("acceptance: all %zu criteria passed\n", criteria.size());
  else
    std::printf("acceptance: %d of %zu criteria FAILED\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

#include "textcaus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "textcaus/common.hpp"

namespace textcaus::synth {

namespace {

const char* kSeedWords[] = {
    "tachycardia", "bradycardia", "hypotension", "hypertension", "sepsis",
    "afebrile", "intubated", "extubated", "sedated", "alert", "oriented",
    "confused", "lethargic", "dyspnea", "hypoxia", "edema", "afib", "sinus",
    "tachy", "rhythm", "lasix", "heparin", "insulin", "vanco", "zosyn",
    "propofol", "fentanyl", "norepi", "levophed", "dopamine", "creatinine",
    "lactate", "bun", "sodium", "potassium", "glucose", "hemoglobin",
    "platelets", "wbc", "bnp", "troponin", "ventilator", "bipap", "cannula",
    "foley", "telemetry", "dnr", "comfort", "family", "consult", "transfer",
    "stable", "unstable", "improving", "worsening", "deteriorating",
    "resolving", "febrile", "chills", "cough", "wheezing", "rales",
    "crackles", "murmur", "distended", "tender", "guarding", "ambulating",
    "bedrest", "npo", "tolerating", "weaned", "diuresis", "oliguria",
    "anuria", "encephalopathy", "delirium", "agitated", "restrained",
    "pressors", "drips"};
constexpr int kNumSeedWords = int(sizeof(kSeedWords) / sizeof(kSeedWords[0]));

std::string token_name(int idx) {
  std::string base = kSeedWords[idx % kNumSeedWords];
  const int round = idx / kNumSeedWords;
  if (round > 0) base += std::to_string(round);
  return base;
}

double invlogit(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double logit(double p) { return std::log(p / (1.0 - p)); }
double clip_prob(double p) { return std::clamp(p, 0.01, 0.99); }

enum class TokenGroup { sev_hi, sev_lo, conf_hi, conf_lo, verb_hi, verb_lo, neutral };

TokenGroup group_of(int idx) {
  switch (idx % 8) {
    case 0: return TokenGroup::sev_hi;
    case 1: return TokenGroup::sev_lo;
    case 2: return TokenGroup::conf_hi;
    case 3: return TokenGroup::conf_lo;
    case 4: return TokenGroup::verb_hi;
    case 5: return TokenGroup::verb_lo;
    default: return TokenGroup::neutral;
  }
}

constexpr double kLoadH = 0.7;            // covariate loading on severity
constexpr double kSurvIntercept = 1.1;    // control survival near 0.72
constexpr double kSurvSlope = -0.8;
constexpr double kTreatIntercept = 0.05;  // treated share near 51%
constexpr int kNoteLenBase = 25;
constexpr double kNoteLenPoisson = 15.0;

}  // namespace

void SynthConfig::validate() const {
  if (n_patients < 10) throw config_error("synth: n_patients must be >= 10");
  if (p_covariates < 2) throw config_error("synth: p_covariates must be >= 2");
  if (vocab_size < 10) throw config_error("synth: vocab_size must be >= 10");
  if (notes_per_patient.min_notes < 1 ||
      notes_per_patient.max_notes < notes_per_patient.min_notes)
    throw config_error("synth: invalid notes_per_patient range");
  if (text_signal_strength < 0) throw config_error("synth: text_signal_strength must be >= 0");
  if (planted_interaction.token_index >= vocab_size)
    throw config_error("synth: planted token index out of vocabulary range");
  if (static_cast<int>(missing_rates.size()) > p_covariates)
    throw config_error("synth: more missing rates than covariates");
  for (double r : missing_rates)
    if (!(r >= 0.0 && r <= 0.9))
      throw config_error("synth: missing rates must lie in [0, 0.9]");
  if (!missing_rates.empty() && missing_rates[0] != 0.0)
    throw config_error("synth: the anchor covariate (column 0) must stay fully observed");
}

SynthConfig paper_like_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_patients = 2625;
  cfg.p_covariates = 45;
  cfg.vocab_size = 400;
  cfg.notes_per_patient = {2, 6};
  cfg.text_signal_strength = 1.0;
  cfg.confounding_strength = 0.6;
  cfg.true_att = 0.09;
  cfg.seed = seed;
  cfg.missing_rates.assign(45, 0.0);
  // 15 partially observed columns; rates span the replication's 0.4%-40%.
  for (int k = 0; k < 15; ++k)
    cfg.missing_rates[1 + k] = 0.01 + 0.39 * double(k) / 14.0;
  return cfg;
}

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_patients;
  const int p = cfg.p_covariates;
  const int v = cfg.vocab_size;
  const int n_verb = std::min(10, p);

  std::vector<double> rates(cfg.missing_rates);
  rates.resize(p, 0.0);

  std::vector<double> base_weight(v);
  for (int t = 0; t < v; ++t) base_weight[t] = 1.0 / double(t + 1);

  std::vector<std::string> tokens(v);
  for (int t = 0; t < v; ++t) tokens[t] = token_name(t);

  SynthDataset data;
  data.ground_truth.true_att = cfg.true_att;
  if (cfg.planted_interaction.token_index >= 0)
    data.ground_truth.planted_token = tokens[cfg.planted_interaction.token_index];
  for (int t = 0; t < v; ++t) {
    switch (group_of(t)) {
      case TokenGroup::sev_hi:
      case TokenGroup::sev_lo:
        data.ground_truth.severity_tokens.push_back(tokens[t]);
        break;
      case TokenGroup::conf_hi:
      case TokenGroup::conf_lo:
        data.ground_truth.confounder_tokens.push_back(tokens[t]);
        break;
      default:
        break;
    }
  }

  auto is_binary_col = [](int c) { return c % 5 == 4; };

  data.covariates_full.ids.resize(n);
  data.covariates_full.names.resize(p);
  data.covariates_full.kinds.resize(p);
  for (int c = 0; c < p; ++c) {
    std::ostringstream name;
    name << "cov" << (c < 10 ? "0" : "") << c;
    data.covariates_full.names[c] = name.str();
    data.covariates_full.kinds[c] =
        is_binary_col(c) ? ColumnKind::binary : ColumnKind::continuous;
  }
  data.covariates_full.values.resize(n, p);
  data.z.resize(n);
  data.y.resize(n);
  data.y0.resize(n);
  data.y1.resize(n);
  data.ground_truth.planted_indicator.assign(n, 0);
  data.ground_truth.severity.resize(n);
  data.ground_truth.text_latent.resize(n);

  std::vector<std::vector<corpus::ClinicalNote>> notes_by_patient(n);
  Eigen::MatrixXd masked = Eigen::MatrixXd::Zero(n, p);  // 1 -> cell hidden

  const double mean_notes =
      0.5 * (cfg.notes_per_patient.min_notes + cfg.notes_per_patient.max_notes);
  const double mean_total_tokens = mean_notes * (kNoteLenBase + kNoteLenPoisson);
  const double loglen_center = std::log1p(mean_total_tokens);

  parallel_for(static_cast<std::size_t>(n), 0, [&](std::size_t idx) {
    const int i = static_cast<int>(idx);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x70000000ULL + std::uint64_t(i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    {
      std::ostringstream id;
      id << "p";
      std::string digits = std::to_string(i);
      for (std::size_t k = digits.size(); k < 6; ++k) id << '0';
      id << digits;
      data.covariates_full.ids[i] = id.str();
    }

    const double h = normal(rng);
    const double u = normal(rng);
    data.ground_truth.severity(i) = h;
    data.ground_truth.text_latent(i) = u;

    Eigen::VectorXd xstd(p);
    const double load_w = std::sqrt(1.0 - kLoadH * kLoadH);
    for (int c = 0; c < p; ++c) {
      const double raw = kLoadH * h + load_w * normal(rng);
      if (is_binary_col(c)) {
        const double b = raw > 0 ? 1.0 : 0.0;
        data.covariates_full.values(i, c) = b;
        xstd(c) = 2.0 * b - 1.0;
      } else {
        data.covariates_full.values(i, c) = raw;
        xstd(c) = raw;
      }
    }

    // Patient-specific token distribution.
    const double gamma = cfg.text_signal_strength;
    std::vector<double> cdf(v);
    double acc = 0.0;
    for (int t = 0; t < v; ++t) {
      double tilt = 0.0;
      switch (group_of(t)) {
        case TokenGroup::sev_hi: tilt = gamma * h; break;
        case TokenGroup::sev_lo: tilt = -gamma * h; break;
        case TokenGroup::conf_hi: tilt = gamma * u; break;
        case TokenGroup::conf_lo: tilt = -gamma * u; break;
        case TokenGroup::verb_hi: tilt = 0.8 * gamma * xstd((t / 8) % n_verb); break;
        case TokenGroup::verb_lo: tilt = -0.8 * gamma * xstd((t / 8) % n_verb); break;
        case TokenGroup::neutral: break;
      }
      acc += base_weight[t] * std::exp(std::clamp(tilt, -8.0, 8.0));
      cdf[t] = acc;
    }

    std::uniform_int_distribution<int> note_count(cfg.notes_per_patient.min_notes,
                                                  cfg.notes_per_patient.max_notes);
    std::poisson_distribution<int> extra_len(kNoteLenPoisson);
    const int n_notes = note_count(rng);
    long total_tokens = 0;
    bool has_planted = false;
    static const corpus::NoteCategory kCats[] = {corpus::NoteCategory::nursing,
                                                 corpus::NoteCategory::physician,
                                                 corpus::NoteCategory::other};
    for (int nn = 0; nn < n_notes; ++nn) {
      const int len = kNoteLenBase + extra_len(rng);
      std::ostringstream text;
      for (int t = 0; t < len; ++t) {
        const double draw = unif(rng) * acc;
        const int tok = int(std::lower_bound(cdf.begin(), cdf.end(), draw) - cdf.begin());
        if (tok == cfg.planted_interaction.token_index) has_planted = true;
        if (t > 0) text << (t % 12 == 0 ? ". " : " ");
        text << tokens[std::min(tok, v - 1)];
      }
      text << ".";
      corpus::ClinicalNote note;
      note.patient_id = data.covariates_full.ids[i];
      note.category = kCats[nn % 3];
      note.chart_offset_hours = 20.0 * unif(rng);
      note.text = text.str();
      notes_by_patient[i].push_back(std::move(note));
      total_tokens += len;
    }
    data.ground_truth.planted_indicator[i] = has_planted ? 1 : 0;

    const double p_treat =
        clip_prob(invlogit(kTreatIntercept + cfg.confounding_strength * (h + u)));
    data.z[i] = unif(rng) < p_treat ? 1 : 0;

    const double p0 = clip_prob(invlogit(kSurvIntercept + kSurvSlope * h));
    double p1 = p0 + cfg.true_att;
    if (has_planted) p1 += cfg.planted_interaction.delta;
    p1 = clip_prob(p1);
    const double shared = unif(rng);
    data.y0[i] = shared < p0 ? 1 : 0;
    data.y1[i] = shared < p1 ? 1 : 0;
    data.y[i] = data.z[i] ? data.y1[i] : data.y0[i];

    const double loglen_std = (std::log1p(double(total_tokens)) - loglen_center) / 0.5;
    for (int c = 0; c < p; ++c) {
      if (rates[c] <= 0.0) continue;
      const double pm = clip_prob(invlogit(logit(rates[c]) +
                                           cfg.mar_dependence.on_anchor * xstd(0) +
                                           cfg.mar_dependence.on_length * loglen_std));
      if (unif(rng) < pm) masked(i, c) = 1.0;
    }
  });

  for (int i = 0; i < n; ++i)
    for (const auto& note : notes_by_patient[i]) data.notes.push_back(note);

  data.covariates = data.covariates_full;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < p; ++c)
      if (masked(i, c) > 0) data.covariates.values(i, c) = kNaN;

  double att_sum = 0.0;
  long n_treated = 0;
  for (int i = 0; i < n; ++i) {
    if (!data.z[i]) continue;
    // Recompute the potential-outcome means for the sample ATT.
    const double h = data.ground_truth.severity(i);
    const double p0 = clip_prob(invlogit(kSurvIntercept + kSurvSlope * h));
    double p1 = p0 + cfg.true_att;
    if (data.ground_truth.planted_indicator[i]) p1 += cfg.planted_interaction.delta;
    p1 = clip_prob(p1);
    att_sum += p1 - p0;
    ++n_treated;
  }
  data.ground_truth.sample_att = n_treated > 0 ? att_sum / double(n_treated) : 0.0;

  data.covariates.validate();
  data.covariates_full.validate();
  return data;
}

Scorecard evaluate_run(const SynthDataset& data, const RunOutputs& outputs) {
  Scorecard card;
  card.imputation_rmse_text = kNaN;
  card.imputation_rmse_structured = kNaN;
  card.att_bias = kNaN;
  card.planted_text_smd_psm = kNaN;
  card.planted_text_smd_text = kNaN;
  card.max_structured_abs_smd_text = kNaN;
  card.empirical_fdr = kNaN;

  auto imputation_rmse = [&](const std::vector<Eigen::MatrixXd>& completed) {
    if (completed.empty()) return kNaN;
    double total = 0.0;
    long count = 0;
    const Eigen::Index nr = data.covariates.values.rows();
    const Eigen::Index nc = data.covariates.values.cols();
    for (const auto& mat : completed) {
      if (mat.rows() != nr || mat.cols() != nc)
        throw data_error("evaluate_run: completed matrix shape mismatch");
      for (Eigen::Index i = 0; i < nr; ++i)
        for (Eigen::Index c = 0; c < nc; ++c)
          if (data.covariates.is_missing(int(i), int(c))) {
            const double diff = mat(i, c) - data.covariates_full.values(i, c);
            total += diff * diff;
            ++count;
          }
    }
    if (count == 0) return 0.0;
    return std::sqrt(total / double(count));
  };
  card.imputation_rmse_text = imputation_rmse(outputs.completed_text);
  card.imputation_rmse_structured = imputation_rmse(outputs.completed_structured);

  if (outputs.att) {
    card.att_bias = outputs.att->estimate - data.ground_truth.true_att;
    card.att_covered_2se = std::abs(card.att_bias) <= 2.0 * outputs.att->se;
  }

  const std::set<std::string> planted(data.ground_truth.confounder_tokens.begin(),
                                      data.ground_truth.confounder_tokens.end());
  auto text_smd = [&](const match::BalanceReport& report) {
    double sum = 0.0;
    int cnt = 0;
    for (const auto& row : report.rows)
      if (row.kind == "text" && planted.count(row.name) && std::isfinite(row.smd_after)) {
        sum += std::abs(row.smd_after);
        ++cnt;
      }
    return cnt > 0 ? sum / cnt : kNaN;
  };
  if (outputs.balance_psm) card.planted_text_smd_psm = text_smd(*outputs.balance_psm);
  if (outputs.balance_text) {
    card.planted_text_smd_text = text_smd(*outputs.balance_text);
    double mx = 0.0;
    bool any = false;
    for (const auto& row : outputs.balance_text->rows)
      if (row.kind == "structured" && std::isfinite(row.smd_after)) {
        mx = std::max(mx, std::abs(row.smd_after));
        any = true;
      }
    card.max_structured_abs_smd_text = any ? mx : kNaN;
  }

  if (!outputs.scan.empty()) {
    int n_disc = 0, n_false = 0;
    bool planted_found = false;
    for (const auto& eff : outputs.scan) {
      if (!eff.valid || !eff.discovered) continue;
      ++n_disc;
      const bool is_planted = eff.source == effects::RuleSource::token_presence &&
                              eff.label == data.ground_truth.planted_token;
      if (is_planted) planted_found = true;
      else ++n_false;
    }
    card.n_discoveries = n_disc;
    card.planted_discovered = planted_found;
    card.empirical_fdr = n_disc > 0 ? double(n_false) / double(n_disc) : 0.0;
  }
  return card;
}

}  // namespace textcaus::synth

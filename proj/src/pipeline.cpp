#include "textcaus/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "textcaus/common.hpp"
#include "textcaus/corpus.hpp"
#include "textcaus/effects.hpp"
#include "textcaus/impute.hpp"
#include "textcaus/io.hpp"
#include "textcaus/match.hpp"
#include "textcaus/mnir.hpp"
#include "textcaus/table.hpp"

namespace textcaus::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& rel) {
  return (fs::path(dir) / rel).string();
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw data_error("cannot create directory " + path);
}

void require_artifact(const config::RunConfig& cfg, const std::string& rel,
                      const std::string& producer) {
  if (!fs::exists(join(cfg.output_dir, rel)))
    throw data_error("missing artifact " + rel + "; run the '" + producer + "' stage first");
}

std::map<std::string, ColumnKind> binary_kind_map(const config::RunConfig& cfg) {
  std::map<std::string, ColumnKind> kinds;
  for (const auto& name : cfg.inputs.binary_columns) kinds[name] = ColumnKind::binary;
  return kinds;
}

CovariateTable load_covariates(const config::RunConfig& cfg) {
  CovariateTable table = io::read_covariates_csv(cfg.inputs.covariates, binary_kind_map(cfg));
  table.validate();
  if (table.n_rows() == 0) throw data_error(cfg.inputs.covariates + ": no data rows");
  return table;
}

corpus::TokenizeConfig tokenize_config(const config::RunConfig& cfg) {
  corpus::TokenizeConfig tok;
  tok.ngram_min = cfg.preprocessing.ngram_min;
  tok.ngram_max = cfg.preprocessing.ngram_max;
  tok.stem = cfg.preprocessing.stem;
  if (cfg.inputs.stop_words) {
    tok.stop_words.clear();
    for (const auto& line : io::read_lines(*cfg.inputs.stop_words))
      corpus::add_stop_words(tok.stop_words, line);
  } else {
    tok.stop_words = corpus::default_stop_words();
  }
  return tok;
}

corpus::DocTermMatrix load_dtm(const config::RunConfig& cfg) {
  require_artifact(cfg, "dtm/dtm.txt", "dtm");
  require_artifact(cfg, "dtm/vocab.txt", "dtm");
  return io::read_dtm(join(cfg.output_dir, "dtm/dtm.txt"),
                      join(cfg.output_dir, "dtm/vocab.txt"));
}

int read_imputation_count(const config::RunConfig& cfg) {
  require_artifact(cfg, "impute/impute.json", "impute");
  std::ifstream f(join(cfg.output_dir, "impute/impute.json"));
  json obj = json::parse(f, nullptr, false);
  if (obj.is_discarded() || !obj.contains("m") || !obj["m"].is_number_integer())
    throw data_error("impute/impute.json is unreadable; rerun the 'impute' stage");
  const int m = obj["m"].get<int>();
  if (m < 1) throw data_error("impute/impute.json reports no imputations");
  return m;
}

std::string completed_rel(int k) { return "impute/completed_" + std::to_string(k) + ".csv"; }

CovariateTable load_completed(const config::RunConfig& cfg, int k) {
  require_artifact(cfg, completed_rel(k), "impute");
  CovariateTable table = io::read_covariates_csv(join(cfg.output_dir, completed_rel(k)), {});
  if (!table.values.allFinite())
    throw data_error(completed_rel(k) + " has missing cells; rerun the 'impute' stage");
  return table;
}

Eigen::MatrixXd select_columns(const CovariateTable& table,
                               const std::vector<std::string>& names,
                               const std::string& context) {
  Eigen::MatrixXd out(table.n_rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const int idx = table.column_index(names[j]);
    if (idx < 0)
      throw data_error(context + ": column " + names[j] +
                       " not found; rerun the 'impute' stage");
    out.col(static_cast<Eigen::Index>(j)) = table.values.col(idx);
  }
  return out;
}

struct TextBlock {
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

// Columns the balance table reports for the text side: the configured key
// terms when given, otherwise the 20 highest-document-frequency tokens.
TextBlock balance_text_block(const config::RunConfig& cfg, const corpus::DocTermMatrix& dtm) {
  TextBlock block;
  if (cfg.inputs.key_terms) {
    std::vector<std::string> terms;
    for (const auto& line : io::read_lines(*cfg.inputs.key_terms))
      if (line.find_first_not_of(" \t\r") != std::string::npos) terms.push_back(line);
    if (terms.empty()) throw data_error(*cfg.inputs.key_terms + ": no key terms");
    corpus::KeyTermMatrix ktm = corpus::key_term_covariates(dtm, terms);
    block.names = ktm.terms;
    block.values = ktm.values;
    return block;
  }
  const int d = dtm.vocab.size();
  std::vector<int> order(d);
  for (int j = 0; j < d; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dtm.vocab.document_frequency[a] != dtm.vocab.document_frequency[b])
      return dtm.vocab.document_frequency[a] > dtm.vocab.document_frequency[b];
    return a < b;
  });
  const int k = std::min(20, d);
  block.values = Eigen::MatrixXd::Zero(dtm.n_docs, k);
  for (int j = 0; j < k; ++j) {
    block.names.push_back(dtm.vocab.tokens[order[j]]);
    for (int i = 0; i < dtm.n_docs; ++i)
      block.values(i, j) = dtm.count_at(i, order[j]);
  }
  return block;
}

std::string sample_rel(const std::string& approach, int k) {
  return "match/" + approach + "_sample_" + std::to_string(k) + ".csv";
}

double parse_csv_value(const std::string& field, const std::string& context) {
  if (field == "NA" || field.empty()) return kNaN;
  return io::parse_double(field, context);
}

// Reads a CSV produced by this pipeline back as header + field rows.
std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    rows.push_back(io::split_csv_line(line));
  }
  if (rows.empty()) throw data_error(path + ": empty file");
  return rows;
}

// ---------------------------------------------------------------- stages

std::vector<std::string> stage_ingest(const config::RunConfig& cfg) {
  CovariateTable covariates = load_covariates(cfg);
  io::read_treatment_csv(cfg.inputs.treatment_outcome, covariates.ids);  // validation

  std::vector<corpus::ClinicalNote> notes = io::read_notes_jsonl(cfg.inputs.notes);
  std::vector<corpus::PatientDoc> docs =
      corpus::aggregate_patient_docs(notes, cfg.preprocessing.cutoff_hours);

  std::set<std::string> known(covariates.ids.begin(), covariates.ids.end());
  std::map<std::string, std::string> text_by_id;
  for (auto& doc : docs) {
    if (!known.count(doc.patient_id))
      throw data_error(cfg.inputs.notes + ": notes reference unknown patient_id " +
                       doc.patient_id);
    text_by_id[doc.patient_id] = std::move(doc.text);
  }
  std::vector<corpus::PatientDoc> aligned;
  aligned.reserve(covariates.ids.size());
  for (const auto& id : covariates.ids) {
    auto it = text_by_id.find(id);
    aligned.push_back({id, it == text_by_id.end() ? std::string() : it->second});
  }

  ensure_dir(join(cfg.output_dir, "ingest"));
  io::write_docs_jsonl(aligned, join(cfg.output_dir, "ingest/docs.jsonl"));
  return {"ingest/docs.jsonl"};
}

std::vector<std::string> stage_dtm(const config::RunConfig& cfg) {
  require_artifact(cfg, "ingest/docs.jsonl", "ingest");
  std::vector<corpus::PatientDoc> docs =
      io::read_docs_jsonl(join(cfg.output_dir, "ingest/docs.jsonl"));
  if (docs.empty()) throw data_error("ingest/docs.jsonl: no documents");

  const corpus::TokenizeConfig tok = tokenize_config(cfg);
  std::vector<std::vector<std::string>> token_docs(docs.size());
  parallel_for(docs.size(), cfg.threads,
               [&](std::size_t i) { token_docs[i] = corpus::tokenize(docs[i].text, tok); });

  corpus::VocabConfig vcfg;
  vcfg.min_df = cfg.preprocessing.min_df;
  vcfg.max_df_fraction = cfg.preprocessing.max_df_fraction;
  corpus::Vocabulary vocab = corpus::build_vocabulary(token_docs, vcfg);
  if (vocab.size() == 0)
    throw data_error(
        "vocabulary is empty after document-frequency filtering; lower preprocessing.min_df");
  corpus::DocTermMatrix dtm = corpus::build_dtm(token_docs, vocab);

  ensure_dir(join(cfg.output_dir, "dtm"));
  io::write_dtm(dtm, join(cfg.output_dir, "dtm/dtm.txt"), join(cfg.output_dir, "dtm/vocab.txt"));
  return {"dtm/dtm.txt", "dtm/vocab.txt"};
}

std::vector<std::string> stage_mnir(const config::RunConfig& cfg) {
  CovariateTable x = load_covariates(cfg);
  corpus::DocTermMatrix dtm = load_dtm(cfg);
  if (dtm.n_docs != x.n_rows())
    throw data_error("dtm row count differs from the covariate table; rerun the 'dtm' stage");

  std::vector<int> complete;
  for (int i = 0; i < x.n_rows(); ++i) {
    bool ok = true;
    for (int j = 0; j < x.n_cols() && ok; ++j) ok = !x.is_missing(i, j);
    if (ok) complete.push_back(i);
  }
  if (complete.empty())
    throw data_error("no complete-case rows available to fit the text model");

  // fit_mnir drops documents without tokens; screen columns that are
  // constant over the rows it will actually use.
  std::vector<int> fit_rows;
  for (int i : complete)
    if (dtm.row_totals[i] > 0) fit_rows.push_back(i);
  std::vector<int> used_cols;
  std::vector<std::string> used_names;
  for (int j = 0; j < x.n_cols(); ++j) {
    double lo = kInf, hi = -kInf;
    for (int i : fit_rows) {
      lo = std::min(lo, x.values(i, j));
      hi = std::max(hi, x.values(i, j));
    }
    if (hi > lo) {
      used_cols.push_back(j);
      used_names.push_back(x.names[j]);
    }
  }
  if (used_cols.empty())
    throw data_error("all covariates are constant on complete-case rows; cannot fit MNIR");

  Eigen::MatrixXd x_cc(static_cast<Eigen::Index>(complete.size()),
                       static_cast<Eigen::Index>(used_cols.size()));
  for (std::size_t i = 0; i < complete.size(); ++i)
    for (std::size_t j = 0; j < used_cols.size(); ++j)
      x_cc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          x.values(complete[i], used_cols[j]);

  mnir::MnirConfig mcfg = cfg.mnir;
  mcfg.threads = cfg.threads;
  mnir::MnirModel model = mnir::fit_mnir(corpus::subset_rows(dtm, complete), x_cc, mcfg);
  mnir::SrProjection sr = mnir::sr_scores(dtm, model);

  ensure_dir(join(cfg.output_dir, "mnir"));
  mnir::save_mnir(model, join(cfg.output_dir, "mnir/model.txt"));

  CovariateTable sr_table;
  sr_table.ids = x.ids;
  for (const auto& name : used_names) sr_table.names.push_back(impute::kSrPrefix + name);
  sr_table.kinds.assign(used_names.size(), ColumnKind::continuous);
  sr_table.values = sr.scores;
  io::write_covariates_csv(sr_table, join(cfg.output_dir, "mnir/sr.csv"));

  int converged = 0;
  for (const auto& diag : model.fit_diagnostics)
    if (diag.converged) ++converged;
  json info{{"n_tokens", dtm.vocab.size()},
            {"n_converged", converged},
            {"n_fit_rows", static_cast<int>(fit_rows.size())},
            {"covariates", used_names}};
  std::ofstream f(join(cfg.output_dir, "mnir/mnir.json"));
  f << info.dump(2) << "\n";
  if (!f) throw data_error("cannot write mnir/mnir.json");
  return {"mnir/model.txt", "mnir/sr.csv", "mnir/mnir.json"};
}

std::vector<std::string> stage_impute(const config::RunConfig& cfg) {
  CovariateTable x = load_covariates(cfg);
  require_artifact(cfg, "mnir/sr.csv", "mnir");
  CovariateTable sr_table = io::read_covariates_csv(join(cfg.output_dir, "mnir/sr.csv"), {});
  if (sr_table.ids != x.ids)
    throw data_error("mnir/sr.csv patient ids differ from the covariate table; rerun the "
                     "'mnir' stage");

  CovariateTable augmented = concat_columns(x, sr_table.values, sr_table.names, "");

  impute::MiceConfig icfg = cfg.mice;
  icfg.threads = cfg.threads;
  impute::ImputedSet imputed =
      impute::mice(augmented, derive_seed(cfg.seed, fnv1a("impute")), icfg);

  ensure_dir(join(cfg.output_dir, "impute"));
  std::vector<std::string> outputs;
  for (int k = 0; k < imputed.m; ++k) {
    CovariateTable completed;
    completed.ids = augmented.ids;
    completed.names = augmented.names;
    completed.kinds = augmented.kinds;
    completed.values = imputed.completed[k];
    io::write_covariates_csv(completed, join(cfg.output_dir, completed_rel(k + 1)));
    outputs.push_back(completed_rel(k + 1));
  }
  json info{{"m", imputed.m}, {"seed", imputed.rng_seed}, {"warnings", imputed.warnings}};
  std::ofstream f(join(cfg.output_dir, "impute/impute.json"));
  f << info.dump(2) << "\n";
  if (!f) throw data_error("cannot write impute/impute.json");
  outputs.push_back("impute/impute.json");
  return outputs;
}

std::vector<std::string> stage_match(const config::RunConfig& cfg) {
  CovariateTable x = load_covariates(cfg);
  io::TreatmentOutcome zy = io::read_treatment_csv(cfg.inputs.treatment_outcome, x.ids);
  corpus::DocTermMatrix dtm = load_dtm(cfg);
  if (dtm.n_docs != x.n_rows())
    throw data_error("dtm row count differs from the covariate table; rerun the 'dtm' stage");
  const int m = read_imputation_count(cfg);

  Eigen::VectorXd any_missing = Eigen::VectorXd::Zero(x.n_rows());
  for (int i = 0; i < x.n_rows(); ++i)
    for (int j = 0; j < x.n_cols(); ++j)
      if (x.is_missing(i, j)) {
        any_missing(i) = 1;
        break;
      }
  std::vector<std::string> balance_names = x.names;
  balance_names.push_back("any_missing");
  const TextBlock text_block = balance_text_block(cfg, dtm);

  ensure_dir(join(cfg.output_dir, "match"));
  std::vector<match::BalanceReport> balance_psm(m), balance_text(m);
  std::vector<std::string> outputs;
  for (int k = 1; k <= m; ++k) {
    outputs.push_back(sample_rel("psm", k));
    outputs.push_back(sample_rel("text", k));
  }

  const match::FullMatchConfig fm{cfg.matching.max_controls_per_treated,
                                  cfg.matching.max_treated_per_control};
  parallel_for(static_cast<std::size_t>(m), cfg.threads, [&](std::size_t slot) {
    const int k = static_cast<int>(slot) + 1;
    CovariateTable completed = load_completed(cfg, k);
    if (completed.ids != x.ids)
      throw data_error(completed_rel(k) + " ids differ from the covariate table; rerun the "
                       "'impute' stage");
    Eigen::MatrixXd xs = select_columns(completed, x.names, completed_rel(k));

    match::PropensityModel prop = match::fit_propensity(xs, zy.z);
    match::CaliperGraph graph = match::caliper_graph(prop, zy.z, cfg.matching.caliper_width,
                                                    cfg.matching.caliper_scale);
    std::vector<double> distances(graph.n_edges());
    for (std::size_t t = 0; t < graph.treated.size(); ++t)
      for (std::size_t e = graph.adj_ptr[t]; e < graph.adj_ptr[t + 1]; ++e)
        distances[e] = std::abs(prop.scores(graph.treated[t]) -
                                prop.scores(graph.controls[graph.adj[e]]));
    match::MatchedSample psm = match::optimal_full_match(graph, distances, fm);
    match::MatchedSample text = match::text_match_within_calipers(dtm, graph, fm);

    io::write_matched_sample_csv(psm, x.ids, join(cfg.output_dir, sample_rel("psm", k)));
    io::write_matched_sample_csv(text, x.ids, join(cfg.output_dir, sample_rel("text", k)));

    Eigen::MatrixXd x_balance(xs.rows(), xs.cols() + 1);
    x_balance.leftCols(xs.cols()) = xs;
    x_balance.col(xs.cols()) = any_missing;
    balance_psm[slot] = match::balance_table(x_balance, balance_names, text_block.values,
                                             text_block.names, zy.z, psm.weights);
    balance_text[slot] = match::balance_table(x_balance, balance_names, text_block.values,
                                              text_block.names, zy.z, text.weights);
  });

  io::write_balance_csv(balance_psm, balance_text, join(cfg.output_dir, "match/balance.csv"));
  outputs.push_back("match/balance.csv");
  return outputs;
}

struct PooledAtt {
  std::string approach;
  double estimate = kNaN;
  double se = kNaN;
  double ci_low = kNaN;
  double ci_high = kNaN;
  double p_value = kNaN;
  double df = kInf;
  double n_effective = kNaN;
};

PooledAtt pool_att(const std::string& approach, const std::vector<effects::EffectEstimate>& fits) {
  PooledAtt row;
  row.approach = approach;
  std::vector<double> estimates, variances;
  double ess = 0;
  for (const auto& fit : fits) {
    estimates.push_back(fit.estimate);
    variances.push_back(fit.se * fit.se);
    ess += fit.n_effective;
  }
  impute::PooledEstimate pooled = impute::rubin_pool(estimates, variances);
  row.estimate = pooled.estimate;
  row.se = pooled.se;
  row.df = pooled.df;
  row.ci_low = pooled.estimate - 1.96 * pooled.se;
  row.ci_high = pooled.estimate + 1.96 * pooled.se;
  row.p_value = pooled.se > 0 ? normal_two_sided_p(pooled.estimate / pooled.se)
                              : (pooled.estimate == 0 ? 1.0 : 0.0);
  row.n_effective = ess / double(fits.size());
  return row;
}

std::vector<std::string> stage_effects(const config::RunConfig& cfg) {
  CovariateTable x = load_covariates(cfg);
  io::TreatmentOutcome zy = io::read_treatment_csv(cfg.inputs.treatment_outcome, x.ids);
  const int m = read_imputation_count(cfg);
  const int n = x.n_rows();

  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = zy.y[i];

  std::vector<PooledAtt> rows;
  {
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    std::vector<int> singleton(n);
    for (int i = 0; i < n; ++i) singleton[i] = i;
    effects::EffectEstimate fit = effects::att_estimate(y, zy.z, ones, singleton);
    PooledAtt row;
    row.approach = "unadjusted";
    row.estimate = fit.estimate;
    row.se = fit.se;
    row.ci_low = fit.ci_low;
    row.ci_high = fit.ci_high;
    row.p_value = fit.p_value;
    row.df = kInf;
    row.n_effective = fit.n_effective;
    rows.push_back(row);
  }
  for (const std::string approach : {"psm", "text"}) {
    std::vector<effects::EffectEstimate> fits;
    for (int k = 1; k <= m; ++k) {
      require_artifact(cfg, sample_rel(approach, k), "match");
      match::MatchedSample sample =
          io::read_matched_sample_csv(join(cfg.output_dir, sample_rel(approach, k)), x.ids);
      fits.push_back(effects::att_estimate(y, zy.z, sample.weights, sample.set_index));
    }
    rows.push_back(pool_att(approach, fits));
  }

  ensure_dir(join(cfg.output_dir, "effects"));
  const std::string path = join(cfg.output_dir, "effects/effects.csv");
  std::ofstream f(path);
  if (!f) throw data_error("cannot write " + path);
  f << "approach,estimate,se,ci_low,ci_high,p_value,df,n_effective\n";
  for (const auto& row : rows) {
    f << row.approach << "," << io::format_double(row.estimate) << ","
      << io::format_double(row.se) << "," << io::format_double(row.ci_low) << ","
      << io::format_double(row.ci_high) << "," << io::format_double(row.p_value) << ","
      << io::format_double(row.df) << "," << io::format_double(row.n_effective) << "\n";
  }
  f.flush();
  if (!f) throw data_error("write failed for " + path);
  return {"effects/effects.csv"};
}

std::vector<std::string> stage_hetfx(const config::RunConfig& cfg) {
  CovariateTable x = load_covariates(cfg);
  io::TreatmentOutcome zy = io::read_treatment_csv(cfg.inputs.treatment_outcome, x.ids);
  corpus::DocTermMatrix dtm = load_dtm(cfg);
  const int m = read_imputation_count(cfg);
  const int n = x.n_rows();
  const std::string approach = cfg.scan.weights;

  Eigen::MatrixXd consensus = Eigen::MatrixXd::Zero(n, x.n_cols());
  std::vector<match::MatchedSample> samples;
  for (int k = 1; k <= m; ++k) {
    CovariateTable completed = load_completed(cfg, k);
    consensus += select_columns(completed, x.names, completed_rel(k));
    require_artifact(cfg, sample_rel(approach, k), "match");
    samples.push_back(
        io::read_matched_sample_csv(join(cfg.output_dir, sample_rel(approach, k)), x.ids));
  }
  consensus /= double(m);

  std::vector<int> retained;
  for (int i = 0; i < n; ++i) {
    bool in_all = true;
    for (const auto& sample : samples)
      if (!(sample.weights(i) > 0)) {
        in_all = false;
        break;
      }
    if (in_all) retained.push_back(i);
  }
  if (retained.empty())
    throw infeasible_error("no units retained across all imputations; loosen the caliper");

  effects::SubgroupConfig sub;
  sub.pca_k = cfg.scan.pca_k;
  sub.min_subgroup = cfg.scan.min_subgroup;

  std::vector<effects::SubgroupRule> rules;
  int n_degenerate = 0;
  std::map<std::string, int> per_source;
  Eigen::MatrixXd embeddings;
  bool embeddings_loaded = false;
  auto need_embeddings = [&]() -> const Eigen::MatrixXd& {
    if (!embeddings_loaded) {
      if (!cfg.inputs.embeddings)
        throw config_error("scan.methods: embedding methods need inputs.embeddings");
      embeddings = io::read_embeddings_csv(*cfg.inputs.embeddings, x.ids);
      embeddings_loaded = true;
    }
    return embeddings;
  };
  for (const std::string& method : cfg.scan.methods) {
    effects::RuleBuildResult built;
    if (method == "structured")
      built = effects::structured_rules(consensus, x.names, zy.y, retained, sub);
    else if (method == "token")
      built = effects::token_rules(dtm, retained, sub);
    else if (method == "dtm_pca")
      built = effects::pca_rules(dtm.dense(), effects::RuleSource::dtm_pca, zy.y, retained, sub);
    else if (method == "embedding_raw")
      built = effects::embedding_raw_rules(need_embeddings(), zy.y, retained, sub);
    else if (method == "embedding_pca")
      built = effects::pca_rules(need_embeddings(), effects::RuleSource::embedding_pca, zy.y,
                                 retained, sub);
    else
      throw config_error("scan.methods: unknown method " + method);
    per_source[method] = static_cast<int>(built.rules.size());
    n_degenerate += built.n_degenerate;
    for (auto& rule : built.rules) rules.push_back(std::move(rule));
  }
  if (rules.empty())
    throw infeasible_error("no candidate subgroup rules survived; loosen scan.min_subgroup");

  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = zy.y[i];
  effects::ScanConfig scfg;
  scfg.fdr_q = cfg.scan.fdr_q;
  scfg.threads = cfg.threads;
  std::vector<std::vector<effects::SubgroupEffect>> scans;
  for (const auto& sample : samples)
    scans.push_back(effects::interaction_scan(y, zy.z, rules, sample.weights,
                                              sample.set_index, scfg));
  std::vector<effects::SubgroupEffect> pooled =
      effects::pool_subgroup_scan(scans, cfg.scan.fdr_q);

  ensure_dir(join(cfg.output_dir, "hetfx"));
  io::write_scan_csv(pooled, join(cfg.output_dir, "hetfx/scan.csv"));

  int n_valid = 0, n_discovered = 0;
  for (const auto& eff : pooled) {
    if (eff.valid) ++n_valid;
    if (eff.discovered) ++n_discovered;
  }
  json info{{"weights", approach},
            {"methods", cfg.scan.methods},
            {"n_rules", static_cast<int>(rules.size())},
            {"n_degenerate", n_degenerate},
            {"n_valid", n_valid},
            {"n_discovered", n_discovered},
            {"rules_per_method", per_source}};
  std::ofstream f(join(cfg.output_dir, "hetfx/scan.json"));
  f << info.dump(2) << "\n";
  if (!f) throw data_error("cannot write hetfx/scan.json");
  return {"hetfx/scan.csv", "hetfx/scan.json"};
}

std::vector<std::string> stage_report(const config::RunConfig& cfg) {
  require_artifact(cfg, "match/balance.csv", "match");
  require_artifact(cfg, "effects/effects.csv", "effects");
  require_artifact(cfg, "hetfx/scan.csv", "hetfx");
  CovariateTable x = load_covariates(cfg);
  io::TreatmentOutcome zy = io::read_treatment_csv(cfg.inputs.treatment_outcome, x.ids);
  corpus::DocTermMatrix dtm = load_dtm(cfg);
  const int m = read_imputation_count(cfg);

  ensure_dir(join(cfg.output_dir, "report"));

  // Table-2-style: held-out imputation quality, with vs without text.
  std::vector<std::string> targets = cfg.report.cv_targets;
  if (targets.empty()) {
    std::vector<std::pair<int, int>> by_missing;  // (-count, column)
    for (int j = 0; j < x.n_cols(); ++j) {
      const int count = x.missing_count(j);
      if (count > 0) by_missing.emplace_back(-count, j);
    }
    std::sort(by_missing.begin(), by_missing.end());
    for (std::size_t i = 0; i < by_missing.size() && i < 5; ++i)
      targets.push_back(x.names[by_missing[i].second]);
  }
  struct CvRow {
    std::string target;
    impute::CvResult result;
  };
  std::vector<CvRow> cv_rows;
  for (const auto& target : targets) {
    impute::CvConfig ccfg;
    ccfg.folds = cfg.report.cv_folds;
    ccfg.seed = derive_seed(cfg.seed, fnv1a("cv:" + target));
    ccfg.mnir = cfg.mnir;
    ccfg.mnir.threads = cfg.threads;
    cv_rows.push_back({target, impute::cv_evaluate(x, dtm, target, ccfg)});
  }
  {
    const std::string path = join(cfg.output_dir, "report/imputation_comparison.csv");
    std::ofstream f(path);
    if (!f) throw data_error("cannot write " + path);
    f << "target,n_used,folds,rmse_structured,rmse_text,rmse_change_pct,"
         "r2_structured,r2_text\n";
    for (const auto& row : cv_rows) {
      const double rs = row.result.rmse_structured;
      const double pct = rs > 0 ? 100.0 * (rs - row.result.rmse_text) / rs : kNaN;
      f << row.target << "," << row.result.n_evaluated << "," << row.result.folds << ","
        << io::format_double(row.result.rmse_structured) << ","
        << io::format_double(row.result.rmse_text) << "," << io::format_double(pct) << ","
        << io::format_double(row.result.r2_structured) << ","
        << io::format_double(row.result.r2_text) << "\n";
    }
    f.flush();
    if (!f) throw data_error("write failed for " + path);
  }

  for (const auto& [src, dst] : std::vector<std::pair<std::string, std::string>>{
           {"match/balance.csv", "report/balance.csv"},
           {"effects/effects.csv", "report/effects.csv"},
           {"hetfx/scan.csv", "report/subgroups.csv"}}) {
    std::error_code ec;
    fs::copy_file(join(cfg.output_dir, src), join(cfg.output_dir, dst),
                  fs::copy_options::overwrite_existing, ec);
    if (ec) throw data_error("cannot copy " + src + " to " + dst);
  }

  // Plain-text roll-up of the stage outputs.
  int n_treated = 0;
  for (int v : zy.z) n_treated += v;
  int n_empty_docs = 0;
  for (int i = 0; i < dtm.n_docs; ++i)
    if (dtm.row_totals[i] == 0) ++n_empty_docs;

  std::ostringstream out;
  out << "textcaus run summary\n";
  out << "====================\n";
  out << "seed: " << cfg.seed << "\n";
  out << "patients: " << x.n_rows() << " (" << n_treated << " treated, "
      << (x.n_rows() - n_treated) << " control)\n";
  out << "covariates: " << x.n_cols() << "\n";
  out << "vocabulary: " << dtm.vocab.size() << " tokens; " << n_empty_docs
      << " patients without usable text\n";
  out << "imputations: " << m << "\n";

  out << "\nimputation cross-validation (held-out RMSE)\n";
  if (cv_rows.empty()) out << "  no partially observed targets evaluated\n";
  for (const auto& row : cv_rows) {
    const double rs = row.result.rmse_structured;
    const double pct = rs > 0 ? 100.0 * (rs - row.result.rmse_text) / rs : kNaN;
    out << "  " << row.target << ": structured " << io::format_double(rs) << ", with text "
        << io::format_double(row.result.rmse_text) << " (" << io::format_double(pct)
        << "% change)\n";
  }

  out << "\nmatching (mean over " << m << " imputations)\n";
  for (const std::string approach : {"psm", "text"}) {
    double sets = 0, dropped_t = 0, dropped_c = 0, ess = 0;
    for (int k = 1; k <= m; ++k) {
      match::MatchedSample sample =
          io::read_matched_sample_csv(join(cfg.output_dir, sample_rel(approach, k)), x.ids);
      sets += double(sample.sets.size());
      dropped_t += double(sample.dropped_treated.size());
      dropped_c += double(sample.dropped_control.size());
      ess += match::effective_sample_size(sample.weights);
    }
    out << "  " << approach << ": sets " << io::format_double(sets / m) << ", dropped treated "
        << io::format_double(dropped_t / m) << ", dropped controls "
        << io::format_double(dropped_c / m) << ", ESS " << io::format_double(ess / m) << "\n";
  }

  {
    auto rows = read_csv_rows(join(cfg.output_dir, "match/balance.csv"));
    int n_struct = 0, flag_before = 0, flag_psm = 0, flag_text = 0;
    double worst_text = 0;
    std::string worst_name;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() < 11) continue;
      const std::string where = "match/balance.csv row " + std::to_string(r);
      const double before = parse_csv_value(row[2], where);
      const double psm = parse_csv_value(row[5], where);
      const double text = parse_csv_value(row[8], where);
      if (row[1] == "structured") ++n_struct;
      if (std::isfinite(before) && std::abs(before) > 0.1) ++flag_before;
      if (std::isfinite(psm) && std::abs(psm) > 0.1) ++flag_psm;
      if (std::isfinite(text) && std::abs(text) > 0.1) ++flag_text;
      if (std::isfinite(text) && std::abs(text) >= worst_text) {
        if (std::abs(text) > worst_text || worst_name.empty()) {
          worst_text = std::abs(text);
          worst_name = row[0];
        }
      }
    }
    out << "\nbalance (|SMD| > 0.1 flags, " << (rows.size() - 1) << " rows, " << n_struct
        << " structured)\n";
    out << "  before: " << flag_before << ", after propensity: " << flag_psm
        << ", after text: " << flag_text << "\n";
    if (!worst_name.empty())
      out << "  worst after text: " << worst_name << " (" << io::format_double(worst_text)
          << ")\n";
  }

  {
    auto rows = read_csv_rows(join(cfg.output_dir, "effects/effects.csv"));
    out << "\ntreatment effect on the outcome (ATT)\n";
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() < 8) continue;
      out << "  " << row[0] << ": " << row[1] << " (se " << row[2] << ", 95% CI [" << row[3]
          << ", " << row[4] << "], p " << row[5] << ")\n";
    }
  }

  {
    auto rows = read_csv_rows(join(cfg.output_dir, "hetfx/scan.csv"));
    int discovered = 0;
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (rows[r].size() >= 8 && rows[r][7] == "1") ++discovered;
    out << "\nsubgroup scan (" << (rows.size() - 1) << " rules, " << discovered
        << " discovered at q=" << io::format_double(cfg.scan.fdr_q) << ")\n";
    const std::size_t top = std::min<std::size_t>(rows.size(), 6);
    for (std::size_t r = 1; r < top; ++r) {
      const auto& row = rows[r];
      if (row.size() < 8) continue;
      out << "  " << row[0] << " [" << row[1] << "]: shrunken " << row[6] << ", q " << row[5]
          << (row[7] == "1" ? " *" : "") << "\n";
    }
  }

  const std::string path = join(cfg.output_dir, "report/summary.txt");
  std::ofstream f(path);
  if (!f) throw data_error("cannot write " + path);
  f << out.str();
  f.flush();
  if (!f) throw data_error("write failed for " + path);
  return {"report/imputation_comparison.csv", "report/balance.csv", "report/effects.csv",
          "report/subgroups.csv", "report/summary.txt"};
}

}  // namespace

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order = {"ingest", "dtm",     "mnir",  "impute",
                                                 "match",  "effects", "hetfx", "report"};
  return order;
}

StageResult run_stage(const config::RunConfig& cfg, const std::string& stage) {
  if (cfg.output_dir.empty()) throw config_error("output_dir: must be set");
  ensure_dir(cfg.output_dir);

  const auto start = std::chrono::steady_clock::now();
  StageResult result;
  result.stage = stage;
  if (stage == "ingest")
    result.outputs = stage_ingest(cfg);
  else if (stage == "dtm")
    result.outputs = stage_dtm(cfg);
  else if (stage == "mnir")
    result.outputs = stage_mnir(cfg);
  else if (stage == "impute")
    result.outputs = stage_impute(cfg);
  else if (stage == "match")
    result.outputs = stage_match(cfg);
  else if (stage == "effects")
    result.outputs = stage_effects(cfg);
  else if (stage == "hetfx")
    result.outputs = stage_hetfx(cfg);
  else if (stage == "report")
    result.outputs = stage_report(cfg);
  else
    throw config_error("unknown stage '" + stage + "'");
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RunManifest run_pipeline(const config::RunConfig& cfg) {
  RunManifest manifest;
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << cfg.content_hash();
  manifest.config_hash = hash.str();
  manifest.version = kVersion;
  for (const auto& stage : stage_order()) manifest.stages.push_back(run_stage(cfg, stage));
  write_manifest(manifest, cfg.output_dir);
  return manifest;
}

void write_manifest(const RunManifest& manifest, const std::string& output_dir) {
  json stages = json::array();
  for (const auto& stage : manifest.stages)
    stages.push_back(
        {{"stage", stage.stage}, {"seconds", stage.seconds}, {"outputs", stage.outputs}});
  json obj{{"version", manifest.version},
           {"config_hash", manifest.config_hash},
           {"stages", stages}};

  const std::string path = join(output_dir, "manifest.json");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw data_error("cannot write " + tmp);
    f << obj.dump(2) << "\n";
    f.flush();
    if (!f) throw data_error("write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw data_error("cannot move manifest into place at " + path);
}

}  // namespace textcaus::pipeline

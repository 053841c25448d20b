#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <string>
#include <vector>

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

namespace py = pybind11;
using namespace textcaus;

namespace {

corpus::DocTermMatrix dtm_from_dense(const Eigen::MatrixXd& counts) {
  const int n = static_cast<int>(counts.rows());
  const int d = static_cast<int>(counts.cols());
  std::vector<std::vector<std::string>> docs(static_cast<std::size_t>(n));
  corpus::Vocabulary vocab;
  for (int j = 0; j < d; ++j) {
    vocab.tokens.push_back("t" + std::to_string(j));
    vocab.ngram_order.push_back(1);
    vocab.document_frequency.push_back(0);
  }
  corpus::DocTermMatrix dtm;
  dtm.n_docs = n;
  dtm.vocab = vocab;
  dtm.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double c = counts(i, j);
      if (c < 0 || c != std::floor(c))
        throw data_error("counts must be nonnegative integers");
      if (c > 0) {
        dtm.col_idx.push_back(j);
        dtm.count.push_back(static_cast<int>(c));
        ++dtm.vocab.document_frequency[j];
      }
    }
    dtm.row_ptr[static_cast<std::size_t>(i) + 1] = dtm.col_idx.size();
  }
  dtm.row_totals.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    long total = 0;
    for (std::size_t e = dtm.row_ptr[i]; e < dtm.row_ptr[i + 1]; ++e) total += dtm.count[e];
    dtm.row_totals[static_cast<std::size_t>(i)] = total;
  }
  return dtm;
}

py::dict effect_to_dict(const effects::EffectEstimate& e) {
  py::dict out;
  out["estimate"] = e.estimate;
  out["se"] = e.se;
  out["ci_low"] = e.ci_low;
  out["ci_high"] = e.ci_high;
  out["p_value"] = e.p_value;
  out["n_effective"] = e.n_effective;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "textcaus core: text-assisted causal analysis primitives";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::config)
        PyErr_SetString(PyExc_ValueError, e.what());
      else
        PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  m.def(
      "tokenize",
      [](const std::string& text, int ngram_min, int ngram_max, bool stem,
         bool drop_stop_words) {
        corpus::TokenizeConfig cfg;
        cfg.ngram_min = ngram_min;
        cfg.ngram_max = ngram_max;
        cfg.stem = stem;
        if (drop_stop_words) cfg.stop_words = corpus::default_stop_words();
        return corpus::tokenize(text, cfg);
      },
      py::arg("text"), py::arg("ngram_min") = 1, py::arg("ngram_max") = 3,
      py::arg("stem") = false, py::arg("drop_stop_words") = true,
      "Normalize text into the n-gram tokens the pipeline uses.");

  m.def(
      "sr_scores",
      [](const Eigen::MatrixXd& counts, const Eigen::MatrixXd& x, double penalty) {
        corpus::DocTermMatrix dtm = dtm_from_dense(counts);
        mnir::MnirConfig cfg;
        cfg.penalty = penalty;
        mnir::MnirModel model = mnir::fit_mnir(dtm, x, cfg);
        return mnir::sr_scores(dtm, model).scores;
      },
      py::arg("counts"), py::arg("x"), py::arg("penalty") = 0.0,
      "Fit MNIR on dense counts and return the per-document SR scores.");

  m.def(
      "fit_propensity",
      [](const Eigen::MatrixXd& x, const std::vector<int>& z) {
        return match::fit_propensity(x, z).scores;
      },
      py::arg("x"), py::arg("z"), "Logistic propensity scores for treatment z given x.");

  m.def(
      "full_match",
      [](const Eigen::MatrixXd& distance, double caliper) {
        const int nt = static_cast<int>(distance.rows());
        const int nc = static_cast<int>(distance.cols());
        if (nt == 0 || nc == 0) throw data_error("full_match: empty arm");
        match::CaliperGraph graph;
        graph.n_units = nt + nc;
        for (int t = 0; t < nt; ++t) graph.treated.push_back(t);
        for (int c = 0; c < nc; ++c) graph.controls.push_back(nt + c);
        graph.adj_ptr.assign(static_cast<std::size_t>(nt) + 1, 0);
        std::vector<double> dist;
        for (int t = 0; t < nt; ++t) {
          for (int c = 0; c < nc; ++c) {
            const double d = distance(t, c);
            if (std::isfinite(d) && d <= caliper) {
              graph.adj.push_back(c);
              dist.push_back(d);
            }
          }
          graph.adj_ptr[static_cast<std::size_t>(t) + 1] = graph.adj.size();
        }
        match::MatchedSample sample = match::optimal_full_match(graph, dist);
        py::dict out;
        out["set_index"] = sample.set_index;
        out["weights"] = sample.weights;
        out["total_distance"] = sample.total_distance;
        out["n_sets"] = static_cast<int>(sample.sets.size());
        return out;
      },
      py::arg("distance"), py::arg("caliper") = std::numeric_limits<double>::infinity(),
      "Optimal full matching on a treated-by-control distance matrix. Rows are\n"
      "treated units (unit ids 0..nt-1), columns controls (ids nt..nt+nc-1).\n"
      "Entries above the caliper (or non-finite) are inadmissible.");

  m.def(
      "att_estimate",
      [](const Eigen::VectorXd& y, const std::vector<int>& z, const Eigen::VectorXd& w,
         const std::vector<int>& set_ids) {
        return effect_to_dict(effects::att_estimate(y, z, w, set_ids));
      },
      py::arg("y"), py::arg("z"), py::arg("weights"), py::arg("set_ids"),
      "Weighted ATT with cluster-robust SE over matched sets.");

  m.def(
      "rubin_pool",
      [](const std::vector<double>& estimates, const std::vector<double>& variances,
         double dfcom) {
        impute::PooledEstimate p = impute::rubin_pool(estimates, variances, dfcom);
        py::dict out;
        out["estimate"] = p.estimate;
        out["se"] = p.se;
        out["df"] = p.df;
        out["within"] = p.within;
        out["between"] = p.between;
        return out;
      },
      py::arg("estimates"), py::arg("variances"),
      py::arg("dfcom") = std::numeric_limits<double>::infinity(),
      "Rubin's rules across imputations with Barnard-Rubin df.");

  m.def(
      "bh_fdr",
      [](const std::vector<double>& p_values, double q) {
        effects::BhResult r = effects::bh_fdr(p_values, q);
        std::vector<int> discovered(r.discovered.size());
        for (std::size_t i = 0; i < r.discovered.size(); ++i) discovered[i] = r.discovered[i];
        return py::make_tuple(discovered, r.q_values);
      },
      py::arg("p_values"), py::arg("q") = 0.05,
      "Benjamini-Hochberg: (discovered flags, q-values).");

  m.def("youden_threshold", &effects::youden_threshold, py::arg("x"), py::arg("y"),
        "Cut maximizing sensitivity + specificity - 1 for the rule x > t.");

  m.def("shrink", &effects::shrink, py::arg("estimates"), py::arg("ses"),
        "Normal-normal empirical-Bayes shrinkage of subgroup estimates.");

  m.def("pca_scores", &effects::pca_scores, py::arg("matrix"), py::arg("k"),
        "Centered-PCA scores (U_k S_k) with deterministic component signs.");

  m.def("effective_sample_size", &match::effective_sample_size, py::arg("weights"),
        "Kish effective sample size of a weight vector.");

  m.def(
      "generate_synth",
      [](const std::string& out_dir, std::uint64_t seed, int n_patients, int p_covariates,
         int vocab_size, double text_signal_strength, double confounding_strength,
         double true_att, int planted_token, double planted_delta,
         const std::vector<double>& missing_rates) {
        synth::SynthConfig cfg;
        cfg.n_patients = n_patients;
        cfg.p_covariates = p_covariates;
        cfg.vocab_size = vocab_size;
        cfg.text_signal_strength = text_signal_strength;
        cfg.confounding_strength = confounding_strength;
        cfg.true_att = true_att;
        cfg.planted_interaction = {planted_token, planted_delta};
        cfg.missing_rates = missing_rates;
        cfg.seed = seed;
        synth::SynthDataset data = synth::generate(cfg);
        io::write_synth_dataset(data, out_dir);
        return data.ground_truth.sample_att;
      },
      py::arg("out_dir"), py::arg("seed"), py::arg("n_patients") = 500,
      py::arg("p_covariates") = 10, py::arg("vocab_size") = 200,
      py::arg("text_signal_strength") = 1.0, py::arg("confounding_strength") = 0.0,
      py::arg("true_att") = 0.0, py::arg("planted_token") = -1,
      py::arg("planted_delta") = 0.0, py::arg("missing_rates") = std::vector<double>{},
      "Write a synthetic dataset to out_dir; returns the sample ATT.");

  m.def(
      "run_stage",
      [](const std::string& config_path, const std::string& stage) {
        config::RunConfig cfg = config::load_run_config(config_path);
        return pipeline::run_stage(cfg, stage).outputs;
      },
      py::arg("config_path"), py::arg("stage"),
      "Run one pipeline stage from a JSON run configuration.");

  m.def(
      "run_pipeline",
      [](const std::string& config_path) {
        config::RunConfig cfg = config::load_run_config(config_path);
        pipeline::RunManifest manifest = pipeline::run_pipeline(cfg);
        py::dict out;
        for (const auto& stage : manifest.stages) out[stage.stage.c_str()] = stage.outputs;
        return out;
      },
      py::arg("config_path"), "Run every stage; returns {stage: [artifacts]}.");

  m.attr("__version__") = pipeline::kVersion;
}

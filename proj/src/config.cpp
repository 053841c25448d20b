#include "textcaus/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "textcaus/common.hpp"

namespace textcaus::config {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw config_error("config: " + path + ": " + msg);
}

class Cursor {
 public:
  Cursor(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  bool has(const std::string& key) const {
    return node_.is_object() && node_.contains(key) && !node_.at(key).is_null();
  }

  Cursor child(const std::string& key) const {
    return Cursor(node_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  const std::string& path() const { return path_; }
  const json& raw() const { return node_; }

  template <typename T>
  T as(const char* type_name) const {
    try {
      return node_.get<T>();
    } catch (const json::exception&) {
      fail(path_, std::string("expected ") + type_name);
    }
  }

  double number() const {
    if (!node_.is_number()) fail(path_, "expected number");
    return node_.get<double>();
  }

  int integer() const {
    if (!node_.is_number_integer()) fail(path_, "expected integer");
    return node_.get<int>();
  }

  bool boolean() const {
    if (!node_.is_boolean()) fail(path_, "expected boolean");
    return node_.get<bool>();
  }

  std::string str() const {
    if (!node_.is_string()) fail(path_, "expected string");
    return node_.get<std::string>();
  }

  std::vector<std::string> str_list() const {
    if (!node_.is_array()) fail(path_, "expected array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < node_.size(); ++i) {
      if (!node_[i].is_string())
        fail(path_ + "[" + std::to_string(i) + "]", "expected string");
      out.push_back(node_[i].get<std::string>());
    }
    return out;
  }

 private:
  const json& node_;
  std::string path_;
};

void check_known_keys(const Cursor& c, const std::set<std::string>& known) {
  if (!c.raw().is_object()) fail(c.path().empty() ? "(root)" : c.path(), "expected object");
  for (const auto& [key, value] : c.raw().items())
    if (!known.count(key))
      fail(c.path().empty() ? key : c.path() + "." + key, "unknown field");
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

void require_file(const std::string& field, const std::string& path) {
  if (!fs::exists(path)) fail(field, "file does not exist: " + path);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir,
                           bool require_inputs) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: invalid JSON: ") + e.what());
  }
  Cursor c(root, "");
  check_known_keys(c, {"seed", "output_dir", "threads", "inputs", "preprocessing",
                       "mnir", "mice", "matching", "scan", "report"});

  RunConfig cfg;
  if (!c.has("seed")) fail("seed", "required (no implicit randomness)");
  {
    const json& s = root.at("seed");
    if (!s.is_number_integer() || s.get<long long>() < 0)
      fail("seed", "expected nonnegative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (!c.has("output_dir")) fail("output_dir", "required");
  {
    // Relative output dirs land under TEXTCAUS_OUTPUT_ROOT when that is
    // set; otherwise they resolve like the input paths do.
    const std::string raw = c.child("output_dir").str();
    const char* root = std::getenv("TEXTCAUS_OUTPUT_ROOT");
    if (root && *root && !fs::path(raw).is_absolute())
      cfg.output_dir = resolve(root, raw);
    else
      cfg.output_dir = resolve(base_dir, raw);
  }
  if (c.has("threads")) {
    cfg.threads = c.child("threads").integer();
    if (cfg.threads < 0) fail("threads", "must be >= 0 (0 = hardware default)");
  }

  if (!c.has("inputs")) fail("inputs", "required");
  {
    Cursor in = c.child("inputs");
    check_known_keys(in, {"notes", "covariates", "treatment_outcome", "embeddings",
                          "key_terms", "stop_words", "binary_columns"});
    for (const char* key : {"notes", "covariates", "treatment_outcome"})
      if (!in.has(key)) fail(std::string("inputs.") + key, "required");
    cfg.inputs.notes = resolve(base_dir, in.child("notes").str());
    cfg.inputs.covariates = resolve(base_dir, in.child("covariates").str());
    cfg.inputs.treatment_outcome = resolve(base_dir, in.child("treatment_outcome").str());
    if (in.has("embeddings"))
      cfg.inputs.embeddings = resolve(base_dir, in.child("embeddings").str());
    if (in.has("key_terms"))
      cfg.inputs.key_terms = resolve(base_dir, in.child("key_terms").str());
    if (in.has("stop_words"))
      cfg.inputs.stop_words = resolve(base_dir, in.child("stop_words").str());
    if (in.has("binary_columns"))
      cfg.inputs.binary_columns = in.child("binary_columns").str_list();
    if (require_inputs) {
      require_file("inputs.notes", cfg.inputs.notes);
      require_file("inputs.covariates", cfg.inputs.covariates);
      require_file("inputs.treatment_outcome", cfg.inputs.treatment_outcome);
      if (cfg.inputs.embeddings) require_file("inputs.embeddings", *cfg.inputs.embeddings);
      if (cfg.inputs.key_terms) require_file("inputs.key_terms", *cfg.inputs.key_terms);
      if (cfg.inputs.stop_words) require_file("inputs.stop_words", *cfg.inputs.stop_words);
    }
  }

  if (c.has("preprocessing")) {
    Cursor pp = c.child("preprocessing");
    check_known_keys(pp, {"cutoff_hours", "ngram_min", "ngram_max", "stem", "min_df",
                          "max_df_fraction"});
    auto& out = cfg.preprocessing;
    if (pp.has("cutoff_hours")) out.cutoff_hours = pp.child("cutoff_hours").number();
    if (out.cutoff_hours <= 0) fail("preprocessing.cutoff_hours", "must be > 0");
    if (pp.has("ngram_min")) out.ngram_min = pp.child("ngram_min").integer();
    if (pp.has("ngram_max")) out.ngram_max = pp.child("ngram_max").integer();
    if (out.ngram_min < 1 || out.ngram_max < out.ngram_min)
      fail("preprocessing.ngram_min", "need 1 <= ngram_min <= ngram_max");
    if (pp.has("stem")) out.stem = pp.child("stem").boolean();
    if (pp.has("min_df")) out.min_df = pp.child("min_df").integer();
    if (out.min_df < 1) fail("preprocessing.min_df", "must be >= 1");
    if (pp.has("max_df_fraction")) out.max_df_fraction = pp.child("max_df_fraction").number();
    if (!(out.max_df_fraction > 0 && out.max_df_fraction <= 1))
      fail("preprocessing.max_df_fraction", "must lie in (0, 1]");
  }

  if (c.has("mnir")) {
    Cursor mn = c.child("mnir");
    check_known_keys(mn, {"penalty", "grid_size", "max_iter", "tol", "grid_min_ratio"});
    if (mn.has("penalty")) cfg.mnir.penalty = mn.child("penalty").number();
    if (cfg.mnir.penalty < 0) fail("mnir.penalty", "must be >= 0");
    if (mn.has("grid_size")) cfg.mnir.grid_size = mn.child("grid_size").integer();
    if (cfg.mnir.grid_size < 1) fail("mnir.grid_size", "must be >= 1");
    if (mn.has("max_iter")) cfg.mnir.max_iter = mn.child("max_iter").integer();
    if (cfg.mnir.max_iter < 1) fail("mnir.max_iter", "must be >= 1");
    if (mn.has("tol")) cfg.mnir.tol = mn.child("tol").number();
    if (!(cfg.mnir.tol > 0)) fail("mnir.tol", "must be > 0");
    if (mn.has("grid_min_ratio")) cfg.mnir.grid_min_ratio = mn.child("grid_min_ratio").number();
    if (!(cfg.mnir.grid_min_ratio > 0 && cfg.mnir.grid_min_ratio < 1))
      fail("mnir.grid_min_ratio", "must lie in (0, 1)");
  }

  if (c.has("mice")) {
    Cursor mi = c.child("mice");
    check_known_keys(mi, {"m", "n_iter", "pmm_donors"});
    if (mi.has("m")) cfg.mice.m = mi.child("m").integer();
    if (cfg.mice.m < 1) fail("mice.m", "must be >= 1");
    if (mi.has("n_iter")) cfg.mice.n_iter = mi.child("n_iter").integer();
    if (cfg.mice.n_iter < 1) fail("mice.n_iter", "must be >= 1");
    if (mi.has("pmm_donors")) cfg.mice.pmm_donors = mi.child("pmm_donors").integer();
    if (cfg.mice.pmm_donors < 1) fail("mice.pmm_donors", "must be >= 1");
  }

  if (c.has("matching")) {
    Cursor ma = c.child("matching");
    check_known_keys(ma, {"caliper_width", "caliper_scale", "max_controls_per_treated",
                          "max_treated_per_control"});
    if (ma.has("caliper_width")) cfg.matching.caliper_width = ma.child("caliper_width").number();
    if (!(cfg.matching.caliper_width > 0)) fail("matching.caliper_width", "must be > 0");
    if (ma.has("caliper_scale")) {
      const std::string s = ma.child("caliper_scale").str();
      if (s == "probability") cfg.matching.caliper_scale = match::CaliperScale::probability;
      else if (s == "logit") cfg.matching.caliper_scale = match::CaliperScale::logit;
      else fail("matching.caliper_scale", "expected 'probability' or 'logit'");
    }
    if (ma.has("max_controls_per_treated"))
      cfg.matching.max_controls_per_treated = ma.child("max_controls_per_treated").integer();
    if (ma.has("max_treated_per_control"))
      cfg.matching.max_treated_per_control = ma.child("max_treated_per_control").integer();
    if (cfg.matching.max_controls_per_treated < 0)
      fail("matching.max_controls_per_treated", "must be >= 0 (0 = unbounded)");
    if (cfg.matching.max_treated_per_control < 0)
      fail("matching.max_treated_per_control", "must be >= 0 (0 = unbounded)");
  }

  if (c.has("scan")) {
    Cursor sc = c.child("scan");
    check_known_keys(sc, {"methods", "pca_k", "fdr_q", "min_subgroup", "weights"});
    if (sc.has("methods")) cfg.scan.methods = sc.child("methods").str_list();
    static const std::set<std::string> kMethods = {"structured", "token", "dtm_pca",
                                                   "embedding", "embedding_pca"};
    for (const auto& mth : cfg.scan.methods)
      if (!kMethods.count(mth))
        fail("scan.methods", "unknown method '" + mth + "'");
    if (sc.has("pca_k")) cfg.scan.pca_k = sc.child("pca_k").integer();
    if (cfg.scan.pca_k < 1) fail("scan.pca_k", "must be >= 1");
    if (sc.has("fdr_q")) cfg.scan.fdr_q = sc.child("fdr_q").number();
    if (!(cfg.scan.fdr_q > 0 && cfg.scan.fdr_q < 1)) fail("scan.fdr_q", "must lie in (0, 1)");
    if (sc.has("min_subgroup")) cfg.scan.min_subgroup = sc.child("min_subgroup").integer();
    if (cfg.scan.min_subgroup < 1) fail("scan.min_subgroup", "must be >= 1");
    if (sc.has("weights")) cfg.scan.weights = sc.child("weights").str();
    if (cfg.scan.weights != "text" && cfg.scan.weights != "psm")
      fail("scan.weights", "expected 'text' or 'psm'");
  }

  if (c.has("report")) {
    Cursor rp = c.child("report");
    check_known_keys(rp, {"cv_targets", "cv_folds"});
    if (rp.has("cv_targets")) cfg.report.cv_targets = rp.child("cv_targets").str_list();
    if (rp.has("cv_folds")) cfg.report.cv_folds = rp.child("cv_folds").integer();
    if (cfg.report.cv_folds < 2) fail("report.cv_folds", "must be >= 2");
  }

  const bool wants_embeddings =
      std::any_of(cfg.scan.methods.begin(), cfg.scan.methods.end(), [](const std::string& s) {
        return s == "embedding" || s == "embedding_pca";
      });
  if (wants_embeddings && !cfg.inputs.embeddings)
    fail("scan.methods", "embedding methods need inputs.embeddings");

  return cfg;
}

RunConfig load_run_config(const std::string& path, bool require_inputs) {
  std::ifstream f(path);
  if (!f) throw config_error("config: cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str(), fs::path(path).parent_path().string(), require_inputs);
}

std::string dump_run_config(const RunConfig& cfg) {
  json root;
  root["seed"] = cfg.seed;
  root["output_dir"] = cfg.output_dir;
  root["threads"] = cfg.threads;
  json in;
  in["notes"] = cfg.inputs.notes;
  in["covariates"] = cfg.inputs.covariates;
  in["treatment_outcome"] = cfg.inputs.treatment_outcome;
  if (cfg.inputs.embeddings) in["embeddings"] = *cfg.inputs.embeddings;
  if (cfg.inputs.key_terms) in["key_terms"] = *cfg.inputs.key_terms;
  if (cfg.inputs.stop_words) in["stop_words"] = *cfg.inputs.stop_words;
  if (!cfg.inputs.binary_columns.empty()) in["binary_columns"] = cfg.inputs.binary_columns;
  root["inputs"] = in;
  root["preprocessing"] = {{"cutoff_hours", cfg.preprocessing.cutoff_hours},
                           {"ngram_min", cfg.preprocessing.ngram_min},
                           {"ngram_max", cfg.preprocessing.ngram_max},
                           {"stem", cfg.preprocessing.stem},
                           {"min_df", cfg.preprocessing.min_df},
                           {"max_df_fraction", cfg.preprocessing.max_df_fraction}};
  root["mnir"] = {{"penalty", cfg.mnir.penalty},
                  {"grid_size", cfg.mnir.grid_size},
                  {"max_iter", cfg.mnir.max_iter},
                  {"tol", cfg.mnir.tol},
                  {"grid_min_ratio", cfg.mnir.grid_min_ratio}};
  root["mice"] = {{"m", cfg.mice.m},
                  {"n_iter", cfg.mice.n_iter},
                  {"pmm_donors", cfg.mice.pmm_donors}};
  root["matching"] = {
      {"caliper_width", cfg.matching.caliper_width},
      {"caliper_scale",
       cfg.matching.caliper_scale == match::CaliperScale::probability ? "probability" : "logit"},
      {"max_controls_per_treated", cfg.matching.max_controls_per_treated},
      {"max_treated_per_control", cfg.matching.max_treated_per_control}};
  root["scan"] = {{"methods", cfg.scan.methods},
                  {"pca_k", cfg.scan.pca_k},
                  {"fdr_q", cfg.scan.fdr_q},
                  {"min_subgroup", cfg.scan.min_subgroup},
                  {"weights", cfg.scan.weights}};
  root["report"] = {{"cv_targets", cfg.report.cv_targets},
                    {"cv_folds", cfg.report.cv_folds}};
  return root.dump(2);
}

std::uint64_t RunConfig::content_hash() const {
  return fnv1a(dump_run_config(*this));
}

}  // namespace textcaus::config

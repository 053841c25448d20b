#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "textcaus/common.hpp"
#include "textcaus/config.hpp"
#include "textcaus/io.hpp"
#include "textcaus/pipeline.hpp"
#include "textcaus/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct StageArgs {
  std::string config_path;
  std::string output_dir;  // optional override
  int threads = -1;        // optional override; -1 keeps the config value
};

textcaus::config::RunConfig load_for_stage(const StageArgs& args) {
  textcaus::config::RunConfig cfg = textcaus::config::load_run_config(args.config_path);
  if (!args.output_dir.empty()) cfg.output_dir = fs::absolute(args.output_dir).string();
  if (args.threads >= 0) cfg.threads = args.threads;
  return cfg;
}

void add_stage_options(CLI::App* sub, StageArgs& args) {
  sub->add_option("-c,--config", args.config_path, "Run configuration (JSON)")->required();
  sub->add_option("-o,--out", args.output_dir, "Override the configured output directory");
  sub->add_option("-t,--threads", args.threads, "Override the configured worker count");
}

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string preset = "small";
  std::optional<int> patients;
  std::optional<int> covariates;
  std::optional<int> vocab;
  std::optional<double> signal;
  std::optional<double> confounding;
  std::optional<double> att;
  std::optional<int> planted_token;
  std::optional<double> planted_delta;
  std::optional<double> missing_rate;
  std::optional<int> missing_columns;
};

textcaus::synth::SynthConfig build_synth_config(const SynthArgs& args) {
  using textcaus::synth::SynthConfig;
  SynthConfig cfg;
  if (args.preset == "paper") {
    cfg = textcaus::synth::paper_like_config(args.seed);
  } else if (args.preset == "small") {
    cfg.n_patients = 600;
    cfg.p_covariates = 12;
    cfg.vocab_size = 150;
    cfg.notes_per_patient = {2, 4};
    cfg.text_signal_strength = 1.0;
    cfg.confounding_strength = 0.6;
    cfg.true_att = 0.09;
    cfg.seed = args.seed;
    cfg.missing_rates.assign(static_cast<std::size_t>(cfg.p_covariates), 0.0);
    for (int k = 1; k <= 4; ++k) cfg.missing_rates[static_cast<std::size_t>(k)] = 0.2;
  } else {
    throw textcaus::config_error("synth: unknown preset '" + args.preset + "'");
  }
  cfg.seed = args.seed;
  if (args.patients) cfg.n_patients = *args.patients;
  if (args.covariates) cfg.p_covariates = *args.covariates;
  if (args.vocab) cfg.vocab_size = *args.vocab;
  if (args.signal) cfg.text_signal_strength = *args.signal;
  if (args.confounding) cfg.confounding_strength = *args.confounding;
  if (args.att) cfg.true_att = *args.att;
  if (args.planted_token) cfg.planted_interaction.token_index = *args.planted_token;
  if (args.planted_delta) cfg.planted_interaction.delta = *args.planted_delta;
  if (args.patients || args.covariates) {
    // Keep the mask aligned when the shape was overridden.
    cfg.missing_rates.resize(static_cast<std::size_t>(cfg.p_covariates), 0.0);
  }
  if (args.missing_rate) {
    const int cols = args.missing_columns.value_or(
        std::min(cfg.p_covariates - 1, static_cast<int>(cfg.missing_rates.size()) - 1));
    cfg.missing_rates.assign(static_cast<std::size_t>(cfg.p_covariates), 0.0);
    for (int j = 1; j <= cols && j < cfg.p_covariates; ++j)
      cfg.missing_rates[static_cast<std::size_t>(j)] = *args.missing_rate;
  }
  return cfg;
}

int run_synth(const SynthArgs& args) {
  textcaus::synth::SynthConfig cfg = build_synth_config(args);
  textcaus::synth::SynthDataset data = textcaus::synth::generate(cfg);
  textcaus::io::write_synth_dataset(data, args.out_dir);

  // A run configuration pointing at the generated files, ready for
  // `textcaus pipeline -c <out>/config.json`.
  textcaus::config::RunConfig run;
  run.seed = cfg.seed;
  run.output_dir = "run";
  run.inputs.notes = "notes.jsonl";
  run.inputs.covariates = "covariates.csv";
  run.inputs.treatment_outcome = "treatment_outcome.csv";
  // Generated notes carry their signal in single tokens; higher-order
  // n-grams only inflate the vocabulary.
  run.preprocessing.ngram_max = 1;
  const std::string config_path = (fs::path(args.out_dir) / "config.json").string();
  std::ofstream f(config_path);
  if (!f) throw textcaus::data_error("cannot write " + config_path);
  f << textcaus::config::dump_run_config(run);
  f.flush();
  if (!f) throw textcaus::data_error("write failed for " + config_path);

  std::cout << "wrote synthetic dataset (" << cfg.n_patients << " patients) to "
            << args.out_dir << "\n";
  return 0;
}

int run_one_stage(const StageArgs& args, const std::string& stage) {
  textcaus::config::RunConfig cfg = load_for_stage(args);
  textcaus::pipeline::StageResult result = textcaus::pipeline::run_stage(cfg, stage);
  for (const auto& rel : result.outputs) std::cout << rel << "\n";
  return 0;
}

int run_full_pipeline(const StageArgs& args) {
  textcaus::config::RunConfig cfg = load_for_stage(args);
  textcaus::pipeline::RunManifest manifest = textcaus::pipeline::run_pipeline(cfg);
  for (const auto& stage : manifest.stages)
    std::cout << stage.stage << ": " << stage.outputs.size() << " artifact"
              << (stage.outputs.size() == 1 ? "" : "s") << "\n";
  std::cout << "manifest.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textcaus: augment observational causal analyses with clinical text"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic EHR-style dataset");
  synth->add_option("-o,--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("-s,--seed", synth_args.seed, "RNG seed")->required();
  synth->add_option("--preset", synth_args.preset, "small or paper (default small)");
  synth->add_option("--patients", synth_args.patients, "Number of patients");
  synth->add_option("--covariates", synth_args.covariates, "Number of covariates");
  synth->add_option("--vocab", synth_args.vocab, "Vocabulary size");
  synth->add_option("--signal", synth_args.signal, "Text signal strength");
  synth->add_option("--confounding", synth_args.confounding, "Confounding strength");
  synth->add_option("--att", synth_args.att, "True ATT (risk difference)");
  synth->add_option("--planted-token", synth_args.planted_token,
                    "Token index carrying a planted interaction");
  synth->add_option("--planted-delta", synth_args.planted_delta,
                    "Planted interaction size (risk difference)");
  synth->add_option("--missing-rate", synth_args.missing_rate,
                    "MAR missingness rate for the masked columns");
  synth->add_option("--missing-columns", synth_args.missing_columns,
                    "How many columns (from the second) get the missing rate");

  StageArgs stage_args;
  std::vector<std::pair<CLI::App*, std::string>> stage_subs;
  for (const auto& stage : textcaus::pipeline::stage_order()) {
    CLI::App* sub = app.add_subcommand(stage, "Run the " + stage + " stage");
    add_stage_options(sub, stage_args);
    stage_subs.emplace_back(sub, stage);
  }
  CLI::App* pipe = app.add_subcommand("pipeline", "Run every stage in order");
  add_stage_options(pipe, stage_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (pipe->parsed()) return run_full_pipeline(stage_args);
    for (const auto& [sub, stage] : stage_subs)
      if (sub->parsed()) return run_one_stage(stage_args, stage);
    return 1;
  } catch (const textcaus::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case textcaus::ErrorKind::config:
        return 2;
      case textcaus::ErrorKind::data:
        return 3;
      case textcaus::ErrorKind::infeasible:
        return 4;
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

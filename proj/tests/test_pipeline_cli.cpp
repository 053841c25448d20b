#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "textcaus/common.hpp"
#include "textcaus/config.hpp"
#include "textcaus/io.hpp"
#include "textcaus/pipeline.hpp"
#include "textcaus/synth.hpp"

using namespace textcaus;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

struct PipelineFixture {
  fs::path root;

  PipelineFixture() : root(fs::temp_directory_path() / "textcaus_pipe_test") {
    fs::remove_all(root);
    fs::create_directories(root);
    synth::SynthConfig scfg;
    scfg.n_patients = 160;
    scfg.p_covariates = 6;
    scfg.vocab_size = 50;
    scfg.notes_per_patient = {2, 3};
    scfg.confounding_strength = 0.5;
    scfg.true_att = 0.1;
    scfg.missing_rates = {0.0, 0.25, 0.25};
    scfg.seed = 2024;
    io::write_synth_dataset(synth::generate(scfg), (root / "data").string());
  }
  ~PipelineFixture() { fs::remove_all(root); }

  // Returns the path of a config whose relative inputs point at the dataset.
  std::string write_config(const std::string& name, const std::string& out_dir,
                           int threads) const {
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
  }
};

const std::vector<std::string> kReportFiles = {
    "match/balance.csv",       "effects/effects.csv",
    "hetfx/scan.csv",          "report/summary.txt",
    "report/imputation_comparison.csv", "report/effects.csv",
};

void check_same_outputs(const fs::path& a, const fs::path& b) {
  for (const auto& rel : kReportFiles) CHECK(slurp(a / rel) == slurp(b / rel));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TEXTCAUS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("pipeline runs end to end, deterministically, file-decoupled") {
  PipelineFixture fx;
  const fs::path out_a = fx.root / "outA";
  config::RunConfig cfg = config::load_run_config(fx.write_config("a", out_a.string(), 1));
  pipeline::RunManifest manifest = pipeline::run_pipeline(cfg);

  CHECK(manifest.version == pipeline::kVersion);
  CHECK(manifest.config_hash.size() == 16);
  REQUIRE(manifest.stages.size() == pipeline::stage_order().size());
  for (std::size_t i = 0; i < manifest.stages.size(); ++i) {
    CHECK(manifest.stages[i].stage == pipeline::stage_order()[i]);
    CHECK(manifest.stages[i].seconds >= 0.0);
    CHECK(!manifest.stages[i].outputs.empty());
    for (const auto& rel : manifest.stages[i].outputs) CHECK(fs::exists(out_a / rel));
  }
  REQUIRE(fs::exists(out_a / "manifest.json"));
  const nlohmann::json mj = nlohmann::json::parse(slurp(out_a / "manifest.json"));
  CHECK(mj.at("version").get<std::string>() == pipeline::kVersion);
  CHECK(mj.at("config_hash").get<std::string>() == manifest.config_hash);
  CHECK(mj.at("stages").size() == manifest.stages.size());

  SUBCASE("a second run reproduces every report byte for byte") {
    const fs::path out_b = fx.root / "outB";
    config::RunConfig cfg_b = config::load_run_config(fx.write_config("b", out_b.string(), 1));
    pipeline::run_pipeline(cfg_b);
    check_same_outputs(out_a, out_b);
  }

  SUBCASE("thread count does not change the numbers") {
    const fs::path out_c = fx.root / "outC";
    config::RunConfig cfg_c = config::load_run_config(fx.write_config("c", out_c.string(), 2));
    pipeline::run_pipeline(cfg_c);
    check_same_outputs(out_a, out_c);
  }

  SUBCASE("running the stages one at a time gives the same answers") {
    const fs::path out_d = fx.root / "outD";
    config::RunConfig cfg_d = config::load_run_config(fx.write_config("d", out_d.string(), 1));
    for (const auto& stage : pipeline::stage_order()) pipeline::run_stage(cfg_d, stage);
    check_same_outputs(out_a, out_d);
  }

  SUBCASE("a stage can be re-run in isolation from its artifacts") {
    const std::string saved = slurp(out_a / "effects" / "effects.csv");
    fs::remove_all(out_a / "effects");
    pipeline::run_stage(cfg, "effects");
    CHECK(slurp(out_a / "effects" / "effects.csv") == saved);
  }
}

TEST_CASE("missing artifacts point at the stage that makes them") {
  PipelineFixture fx;
  config::RunConfig cfg =
      config::load_run_config(fx.write_config("fresh", (fx.root / "empty").string(), 1));
  try {
    pipeline::run_stage(cfg, "mnir");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    const std::string msg = e.what();
    CHECK(msg.find("missing artifact") != std::string::npos);
    CHECK(msg.find("run the '") != std::string::npos);
    CHECK(msg.find("' stage first") != std::string::npos);
  }
  for (const char* stage : {"dtm", "impute", "match", "effects", "hetfx", "report"}) {
    CHECK_THROWS_AS(pipeline::run_stage(cfg, stage), Error);
  }
  CHECK_THROWS_AS(pipeline::run_stage(cfg, "no_such_stage"), Error);
}

TEST_CASE("ingest rejects notes for unknown patients") {
  PipelineFixture fx;
  {
    std::ofstream notes(fx.root / "data" / "notes.jsonl", std::ios::app);
    notes << R"({"patient_id":"ghost","category":"nursing","chart_offset_hours":1.0,)"
          << R"("text":"not in the cohort"})" << "\n";
  }
  config::RunConfig cfg =
      config::load_run_config(fx.write_config("ghost", (fx.root / "out").string(), 1));
  try {
    pipeline::run_stage(cfg, "ingest");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("command line drives the whole thing with meaningful exit codes") {
  const fs::path root = fs::temp_directory_path() / "textcaus_cli_test";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = (root / "demo").string();

  CHECK(run_cli("synth --out " + data +
                " --seed 5 --preset small --patients 160 --covariates 6 --vocab 60") == 0);
  CHECK(fs::exists(fs::path(data) / "config.json"));
  CHECK(fs::exists(fs::path(data) / "covariates.csv"));
  CHECK(fs::exists(fs::path(data) / "ground_truth.json"));

  CHECK(run_cli("pipeline -c " + data + "/config.json") == 0);
  CHECK(fs::exists(fs::path(data) / "run" / "report" / "summary.txt"));
  CHECK(fs::exists(fs::path(data) / "run" / "manifest.json"));

  // A single stage re-run against existing artifacts also succeeds.
  CHECK(run_cli("effects -c " + data + "/config.json") == 0);

  // Config problems exit 2, missing artifacts exit 3.
  CHECK(run_cli("pipeline -c " + (root / "nope.json").string()) == 2);
  CHECK(run_cli("effects -c " + data + "/config.json -o " + (root / "vacant").string()) == 3);

  SUBCASE("synth requires a seed") {
    CHECK(run_cli("synth --out " + (root / "x").string()) != 0);
  }
  fs::remove_all(root);
}

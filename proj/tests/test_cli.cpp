#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace std;
namespace fs = std::filesystem;

namespace {

const char* kCli = TSFM_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

bool files_equal(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_tiny_configs(const fs::path& dir) {
  std::ofstream mc(dir / "model.json");
  mc << R"({"token_len":24,"d_model":16,"n_blocks":1,"n_heads":2,"ffn_mult":2,
            "max_tokens":32,"phi_hidden":8,"n_features":10})";
  std::ofstream tc(dir / "train.json");
  tc << R"({"epochs":2,"batch_size":16,"lookback":96,"horizon":24,"stride":8,
            "triplets_per_step":1,"checkpoint_every":2,"seed":7})";
}

}  // namespace

TEST_CASE("help and flag validation") {
  CHECK(run("--help") == 0);
  CHECK(run("synth --help") == 0);
  CHECK(run("synth --definitely-not-a-flag x") == 2);
  CHECK(run("") == 2);  // a subcommand is required
  CHECK(run("synth") == 2);  // --out is required
}

TEST_CASE("synth is deterministic byte-for-byte") {
  TempDir a("tsfm_cli_synth_a"), b("tsfm_cli_synth_b");
  CHECK(run("synth --out " + (a.path / "c").string() + " --cells 3 --cycles 60 --seed 7") == 0);
  CHECK(run("synth --out " + (b.path / "c").string() + " --cells 3 --cycles 60 --seed 7") == 0);
  size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path / "c")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path / "c");
    CHECK(files_equal(entry.path(), b.path / "c" / rel));
    ++compared;
  }
  CHECK(compared >= 4);  // manifest + 3 trajectory files at least
}

TEST_CASE("full pipeline end to end") {
  TempDir dir("tsfm_cli_pipeline");
  const fs::path corpus = dir.path / "corpus";
  const fs::path rundir = dir.path / "run";
  write_tiny_configs(dir.path);

  CHECK(run("synth --out " + corpus.string() + " --cells 4 --cycles 200 --seed 7") == 0);
  CHECK(run("ingest --manifest " + (corpus / "manifest.json").string()) == 0);
  CHECK(run("featurize --manifest " + (corpus / "manifest.json").string() + " --out " +
            (rundir / "features").string()) == 0);
  CHECK(fs::exists(rundir / "features" / "features_physical.csv"));
  CHECK(fs::exists(rundir / "features" / "features_df.csv"));
  CHECK(fs::exists(rundir / "features" / "feature_stats.csv"));

  CHECK(run("train --manifest " + (corpus / "manifest.json").string() + " --out " +
            rundir.string() + " --model-config " + (dir.path / "model.json").string() +
            " --train-config " + (dir.path / "train.json").string()) == 0);
  const fs::path ckpt = rundir / "ckpt_epoch_2.bin";
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(rundir / "config.json"));
  CHECK(fs::exists(rundir / "report.csv"));

  CHECK(run("forecast --checkpoint " + ckpt.string() + " --manifest " +
            (corpus / "manifest.json").string() + " --out " + (rundir / "forecast.csv").string() +
            " --steps 24") == 0);
  CHECK(fs::exists(rundir / "forecast.csv"));

  CHECK(run("evaluate --checkpoint " + ckpt.string() + " --manifest " +
            (corpus / "manifest.json").string() + " --out " + rundir.string()) == 0);
  CHECK(fs::exists(rundir / "metrics_per_cell.csv"));
  CHECK(fs::exists(rundir / "metrics_per_dataset.csv"));
  CHECK(fs::exists(rundir / "rank_table.csv"));

  CHECK(run("explain --checkpoint " + ckpt.string() + " --manifest " +
            (corpus / "manifest.json").string() + " --out " + rundir.string() +
            " --n-perturb 32 --max-cells 1 --svg") == 0);
  CHECK(fs::exists(rundir / "lime_map_cell_0.csv"));
  CHECK(fs::exists(rundir / "lime_scatter.csv"));

  CHECK(run("report --run " + rundir.string() + " --out " + (rundir / "summary").string()) == 0);
  CHECK(fs::exists(rundir / "summary" / "summary.json"));
  const std::string summary = slurp(rundir / "summary" / "summary.json");
  CHECK(summary.find("\"train\": true") != std::string::npos);
  CHECK(summary.find("\"evaluate\": true") != std::string::npos);
  CHECK(summary.find("\"explain\": true") != std::string::npos);
}

TEST_CASE("forecast without a checkpoint is an upstream error") {
  TempDir dir("tsfm_cli_noupstream");
  const fs::path corpus = dir.path / "corpus";
  REQUIRE(run("synth --out " + corpus.string() + " --cells 1 --cycles 40 --seed 1") == 0);
  CHECK(run("forecast --checkpoint " + (dir.path / "missing.bin").string() + " --manifest " +
            (corpus / "manifest.json").string() + " --out " + (dir.path / "f.csv").string()) ==
        3);
}

TEST_CASE("data errors exit with code 3") {
  TempDir dir("tsfm_cli_dataerr");
  std::ofstream bad(dir.path / "manifest.json");
  bad << R"({"datasets":[{"dataset_id":"D","cells":[
    {"cell_id":"a","trajectory_file":"gone.csv"}]}]})";
  bad.close();
  CHECK(run("ingest --manifest " + (dir.path / "manifest.json").string()) == 3);
}

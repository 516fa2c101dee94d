#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "tsfm/corpus.hpp"
#include "tsfm/csv.hpp"
#include "tsfm/errors.hpp"

using namespace tsfm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::trunc);
  os << content;
}

// Two cells, `cycles` points each, linear fade.
void write_basic_corpus(const fs::path& dir, int cycles = 100) {
  std::string c1 = "cell_id,cycle_index,discharge_capacity_ah\n";
  std::string c2 = c1;
  for (int i = 1; i <= cycles; ++i) {
    c1 += "a," + std::to_string(i) + "," + format_double(1.1 - 0.001 * i) + "\n";
    c2 += "b," + std::to_string(i) + "," + format_double(2.0 - 0.002 * i) + "\n";
  }
  write_file(dir / "a.csv", c1);
  write_file(dir / "b.csv", c2);
  write_file(dir / "manifest.json", R"({
    "version": 1,
    "datasets": [
      {"dataset_id": "D1", "cells": [
        {"cell_id": "a", "chemistry": "LFP", "nominal_capacity_ah": 1.1,
         "temperature_c": 25.5, "trajectory_file": "a.csv"},
        {"cell_id": "b", "chemistry": "NMC", "trajectory_file": "b.csv"}
      ]}
    ]})");
}

}  // namespace

TEST_CASE("ingest counts cells and points") {
  TempDir dir("tsfm_corpus_ingest");
  write_basic_corpus(dir.path, 100);
  const Corpus c = ingest_corpus(dir.path / "manifest.json");
  CHECK(c.n_cells() == 2);
  CHECK(c.total_points() == 200);
  CHECK(c.trajectories[0].cell.chemistry == "LFP");
  CHECK(c.trajectories[0].cell.nominal_capacity_ah.has_value());
  CHECK(c.trajectories[0].cell.temperature_c == 25.5);
  CHECK(!c.trajectories[1].cell.nominal_capacity_ah.has_value());
  CHECK(!c.trajectories[1].cell.temperature_c.has_value());
}

TEST_CASE("ingest rejects zero capacity with row diagnostics") {
  TempDir dir("tsfm_corpus_zero");
  write_file(dir.path / "a.csv",
             "cell_id,cycle_index,discharge_capacity_ah\na,1,1.0\na,2,0\na,3,0.9\n");
  write_file(dir.path / "manifest.json", R"({"datasets":[{"dataset_id":"D1","cells":[
    {"cell_id":"a","trajectory_file":"a.csv"}]}]})");
  try {
    (void)ingest_corpus(dir.path / "manifest.json");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::schema_violation);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("discharge_capacity_ah") != std::string::npos);
  }
}

TEST_CASE("ingest rejects non-monotone cycles") {
  TempDir dir("tsfm_corpus_mono");
  write_file(dir.path / "a.csv",
             "cell_id,cycle_index,discharge_capacity_ah\na,1,1.0\na,2,0.9\na,2,0.8\na,3,0.7\n");
  write_file(dir.path / "manifest.json", R"({"datasets":[{"dataset_id":"D1","cells":[
    {"cell_id":"a","trajectory_file":"a.csv"}]}]})");
  try {
    (void)ingest_corpus(dir.path / "manifest.json");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::non_monotone_cycles);
  }
}

TEST_CASE("ingest reports missing files") {
  TempDir dir("tsfm_corpus_missing");
  write_file(dir.path / "manifest.json", R"({"datasets":[{"dataset_id":"D1","cells":[
    {"cell_id":"a","trajectory_file":"nope.csv"}]}]})");
  try {
    (void)ingest_corpus(dir.path / "manifest.json");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::missing_file);
  }
  CHECK_THROWS_AS((void)ingest_corpus(dir.path / "absent_manifest.json"), Error);
}

TEST_CASE("normalize_capacity") {
  CapacityTrajectory t;
  t.cell.cell_id = "x";
  t.cell.dataset_id = "D";
  t.cell.nominal_capacity_ah = 1.1;
  t.cycles = {1, 2, 3};
  t.capacity_ah = {1.1, 1.05, 1.0};
  const CapacityTrajectory n = normalize_capacity(t);
  CHECK(n.capacity_ah[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(n.normalized);
  CHECK_THROWS_AS((void)normalize_capacity(n), Error);  // AlreadyNormalized

  // fallback: max over first 5 cycles
  CapacityTrajectory f;
  f.cell.cell_id = "y";
  f.cell.dataset_id = "D";
  f.cycles = {1, 2, 3, 4, 5, 6};
  f.capacity_ah = {1.9, 2.0, 1.95, 1.9, 1.85, 1.8};
  const CapacityTrajectory nf = normalize_capacity(f);
  CHECK(nf.capacity_ah[5] == doctest::Approx(0.9).epsilon(1e-15));

  CapacityTrajectory empty;
  empty.cell.cell_id = "z";
  try {
    (void)normalize_capacity(empty);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_trajectory);
  }
}

TEST_CASE("make_windows counts and slicing") {
  auto traj = [](int len) {
    CapacityTrajectory t;
    t.cell.cell_id = "w";
    t.cell.dataset_id = "D";
    for (int i = 0; i < len; ++i) {
      t.cycles.push_back(i + 10);  // cycle indices need not start at 1
      t.capacity_ah.push_back(1.0 - 0.0005 * i);
    }
    t.normalized = true;
    return t;
  };
  CHECK(make_windows(traj(200), 96, 24, 8).size() == 11);
  CHECK(make_windows(traj(119), 96, 24, 8).empty());
  CHECK(make_windows(traj(120), 96, 24, 1).size() == 1);

  // lookback + horizon reproduces the trajectory slice exactly
  const auto t = traj(200);
  const auto ws = make_windows(t, 96, 24, 8);
  for (size_t w = 0; w < ws.size(); ++w) {
    const size_t start = w * 8;
    CHECK(ws[w].start_cycle == t.cycles[start]);
    for (int i = 0; i < 96; ++i) CHECK(ws[w].lookback[i] == t.capacity_ah[start + i]);
    for (int i = 0; i < 24; ++i) CHECK(ws[w].horizon[i] == t.capacity_ah[start + 96 + i]);
  }
}

TEST_CASE("split_seen_unseen") {
  Corpus corpus;
  for (int d = 1; d <= 4; ++d)
    for (int c = 0; c < 6; ++c) {
      CapacityTrajectory t;
      t.cell.dataset_id = "D" + std::to_string(d);
      t.cell.cell_id = "c" + std::to_string(c);
      t.cycles = {1, 2};
      t.capacity_ah = {1.0, 0.99};
      corpus.trajectories.push_back(std::move(t));
      corpus.profiles.emplace_back();
    }

  SplitSpec spec;
  spec.holdout_dataset_ids = {"D4"};
  spec.train_fraction_within_seen = 0.5;
  spec.seed = 3;
  const SplitResult r = split_seen_unseen(corpus, spec);
  CHECK(r.unseen_test.n_cells() == 6);
  for (const auto& t : r.unseen_test.trajectories) CHECK(t.cell.dataset_id == "D4");
  CHECK(r.train.n_cells() + r.seen_test.n_cells() == 18);

  // partition property: union covers, pairwise disjoint
  std::set<std::string> all;
  for (const auto& part : {r.train, r.seen_test, r.unseen_test})
    for (const auto& t : part.trajectories) CHECK(all.insert(t.cell.key()).second);
  CHECK(all.size() == corpus.n_cells());

  // determinism
  const SplitResult r2 = split_seen_unseen(corpus, spec);
  REQUIRE(r2.train.n_cells() == r.train.n_cells());
  for (size_t i = 0; i < r.train.n_cells(); ++i)
    CHECK(r2.train.trajectories[i].cell.key() == r.train.trajectories[i].cell.key());

  // fraction 1.0 -> no seen_test
  spec.train_fraction_within_seen = 1.0;
  CHECK(split_seen_unseen(corpus, spec).seen_test.n_cells() == 0);

  spec.holdout_dataset_ids = {"D9"};
  try {
    (void)split_seen_unseen(corpus, spec);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::unknown_dataset_id);
  }
}

TEST_CASE("generate_synthetic regimes") {
  SyntheticConfig cfg;
  cfg.n_cells = 2;
  cfg.cycles_per_cell = 50;
  cfg.a = 1.0;
  cfg.b = 0.0;
  cfg.noise_sigma = 0.0;
  const Corpus c = generate_synthetic(cfg);
  for (const auto& t : c.trajectories)
    for (double q : t.capacity_ah) CHECK(q == cfg.q0);  // degenerate fade

  cfg.b = 0.002;
  const Corpus dec = generate_synthetic(cfg);
  for (const auto& t : dec.trajectories)
    for (size_t i = 0; i + 1 < t.length(); ++i)
      CHECK(t.capacity_ah[i + 1] < t.capacity_ah[i]);  // strictly decreasing

  // determinism: bit-identical corpora from one seed
  cfg.noise_sigma = 0.01;
  cfg.seed = 77;
  const Corpus s1 = generate_synthetic(cfg);
  const Corpus s2 = generate_synthetic(cfg);
  REQUIRE(s1.n_cells() == s2.n_cells());
  for (size_t i = 0; i < s1.n_cells(); ++i)
    for (size_t j = 0; j < s1.trajectories[i].length(); ++j)
      CHECK(s1.trajectories[i].capacity_ah[j] == s2.trajectories[i].capacity_ah[j]);

  cfg.q0 = -1.0;
  try {
    (void)generate_synthetic(cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == errc::invalid_config);
  }
}

TEST_CASE("synthetic KNEE accelerates fade and profiles drift with degradation") {
  SyntheticConfig cfg;
  cfg.n_cells = 1;
  cfg.cycles_per_cell = 200;
  cfg.regime = FadeRegime::KNEE;
  cfg.a = 1.0;
  cfg.b = 0.0005;
  cfg.noise_sigma = 0.0;
  const Corpus c = generate_synthetic(cfg);
  const auto& y = c.trajectories[0].capacity_ah;
  // last-decile fade rate clearly exceeds first-decile fade rate
  const double early = y[0] - y[20];
  const double late = y[179] - y[199];
  CHECK(late > 2.0 * early);

  // charge time grows monotonically with capacity loss
  REQUIRE(!c.profiles[0].empty());
  const auto& first = c.profiles[0].front();
  const auto& last = c.profiles[0].back();
  auto charge_span = [](const CycleProfile& p) {
    double t0 = 1e300, t1 = -1e300;
    for (size_t i = 0; i < p.samples(); ++i)
      if (p.step_label[i] == "charge") {
        t0 = std::min(t0, p.time_s[i]);
        t1 = std::max(t1, p.time_s[i]);
      }
    return t1 - t0;
  };
  CHECK(charge_span(last) > charge_span(first));
}

TEST_CASE("write then ingest round trips exactly") {
  TempDir dir("tsfm_corpus_roundtrip");
  SyntheticConfig cfg;
  cfg.n_cells = 3;
  cfg.cycles_per_cell = 40;
  cfg.noise_sigma = 0.004;
  cfg.seed = 5;
  const Corpus orig = generate_synthetic(cfg);
  write_corpus(orig, dir.path);
  const Corpus back = ingest_corpus(dir.path / "manifest.json");

  REQUIRE(back.n_cells() == orig.n_cells());
  for (size_t i = 0; i < orig.n_cells(); ++i) {
    const auto& a = orig.trajectories[i];
    const auto& b = back.trajectories[i];
    CHECK(a.cell.key() == b.cell.key());
    CHECK(a.cell.nominal_capacity_ah == b.cell.nominal_capacity_ah);
    REQUIRE(a.length() == b.length());
    for (size_t j = 0; j < a.length(); ++j) {
      CHECK(a.cycles[j] == b.cycles[j]);
      CHECK(a.capacity_ah[j] == b.capacity_ah[j]);  // bit exact
    }
    REQUIRE(orig.profiles[i].size() == back.profiles[i].size());
    for (size_t p = 0; p < orig.profiles[i].size(); ++p) {
      const auto& pa = orig.profiles[i][p];
      const auto& pb = back.profiles[i][p];
      REQUIRE(pa.samples() == pb.samples());
      for (size_t s = 0; s < pa.samples(); ++s) {
        CHECK(pa.time_s[s] == pb.time_s[s]);
        CHECK(pa.voltage_v[s] == pb.voltage_v[s]);
        CHECK(pa.current_a[s] == pb.current_a[s]);
        CHECK(pa.step_label[s] == pb.step_label[s]);
      }
    }
  }
}

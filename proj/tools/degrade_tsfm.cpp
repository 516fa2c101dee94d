// degrade-tsfm: batch pipeline for battery capacity degradation forecasting.
// Subcommands: synth, ingest, featurize, train, forecast, evaluate, explain,
// report. Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "tsfm/corpus.hpp"
#include "tsfm/csv.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/evaluation.hpp"
#include "tsfm/features.hpp"
#include "tsfm/lime.hpp"
#include "tsfm/model.hpp"
#include "tsfm/svg.hpp"
#include "tsfm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

int exit_code_for(const tsfm::Error& e) {
  switch (e.classify()) {
    case tsfm::error_class::usage: return 2;
    case tsfm::error_class::data: return 3;
    case tsfm::error_class::numeric: return 4;
  }
  return 4;
}

void print_error(const tsfm::Error& e) {
  json j;
  j["code"] = e.code_name();
  switch (e.classify()) {
    case tsfm::error_class::usage: j["class"] = "usage"; break;
    case tsfm::error_class::data: j["class"] = "data"; break;
    case tsfm::error_class::numeric: j["class"] = "numeric"; break;
  }
  j["message"] = e.what();
  std::cerr << "error: " << j.dump() << "\n";
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) tsfm::raise(tsfm::errc::missing_file, path.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

tsfm::Corpus load_normalized(const fs::path& manifest) {
  tsfm::Corpus corpus = tsfm::ingest_corpus(manifest);
  for (auto& traj : corpus.trajectories)
    if (!traj.normalized) traj = tsfm::normalize_capacity(traj);
  return corpus;
}

std::map<std::string, tsfm::Forecaster> baseline_forecasters() {
  return {{"persistence", tsfm::persistence_forecaster()},
          {"drift", tsfm::drift_forecaster()}};
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  int cells = 8;
  int cycles = 300;
  std::string regime = "SMOOTH_EXP";
  uint64_t seed = 0;
  double q0 = 1.1;
  double a = -1, b = -1, c = -1;  // negative: use regime default
  double noise = -1;
  bool no_profiles = false;
  std::string dataset_id;
};

int run_synth(const SynthArgs& args) {
  const auto regime = tsfm::fade_regime_from_name(args.regime);
  if (!regime) tsfm::raise(tsfm::errc::bad_flags, "unknown regime " + args.regime);
  tsfm::SyntheticConfig cfg;
  cfg.n_cells = args.cells;
  cfg.cycles_per_cell = args.cycles;
  cfg.regime = *regime;
  cfg.seed = args.seed;
  cfg.q0 = args.q0;
  cfg.emit_profiles = !args.no_profiles;
  cfg.dataset_id = args.dataset_id;
  switch (*regime) {
    case tsfm::FadeRegime::SMOOTH_EXP: cfg.a = 1.0; cfg.b = 0.0015; cfg.c = 0.0; break;
    case tsfm::FadeRegime::DOUBLE_EXP: cfg.a = 0.6; cfg.b = 0.004; cfg.c = 0.0003; break;
    case tsfm::FadeRegime::KNEE: cfg.a = 1.0; cfg.b = 0.001; cfg.c = 0.0; break;
    case tsfm::FadeRegime::NOISY_PLATEAU: cfg.a = 1.0; cfg.b = 0.0; cfg.c = 0.0; break;
  }
  if (args.a >= 0) cfg.a = args.a;
  if (args.b >= 0) cfg.b = args.b;
  if (args.c >= 0) cfg.c = args.c;
  cfg.noise_sigma = args.noise >= 0 ? args.noise : 0.002;

  const tsfm::Corpus corpus = tsfm::generate_synthetic(cfg);
  tsfm::write_corpus(corpus, args.out);
  std::cout << "wrote " << corpus.n_cells() << " cells, " << corpus.total_points()
            << " capacity points to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ingest

int run_ingest(const std::string& manifest, const std::string& out) {
  const tsfm::Corpus corpus = tsfm::ingest_corpus(manifest);
  size_t profiles = 0;
  for (const auto& p : corpus.profiles) profiles += p.size();
  std::cout << "datasets: " << corpus.dataset_ids().size() << "\n"
            << "cells: " << corpus.n_cells() << "\n"
            << "capacity points: " << corpus.total_points() << "\n"
            << "cycle profiles: " << profiles << "\n";
  if (!out.empty()) {
    tsfm::write_corpus(corpus, out);
    std::cout << "canonical copy written to " << out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// featurize

int run_featurize(const std::string& manifest, const std::string& out) {
  tsfm::Corpus corpus = load_normalized(manifest);
  fs::create_directories(out);

  // Chemistry labels as class ids, in first-appearance order.
  std::vector<std::string> chem_names;
  auto chem_id = [&](const std::string& c) {
    for (size_t i = 0; i < chem_names.size(); ++i)
      if (chem_names[i] == c) return static_cast<int>(i);
    chem_names.push_back(c);
    return static_cast<int>(chem_names.size() - 1);
  };

  // Per-cycle physical features.
  struct PhysRow {
    std::string dataset, cell;
    int64_t cycle;
    std::array<double, tsfm::kPhysicalFeatureCount> v;
    int chem;
    double capacity;
  };
  std::vector<PhysRow> phys;
  for (size_t i = 0; i < corpus.trajectories.size(); ++i) {
    if (i >= corpus.profiles.size() || corpus.profiles[i].empty()) continue;
    const auto& traj = corpus.trajectories[i];
    std::map<int64_t, double> cap_by_cycle;
    for (size_t r = 0; r < traj.length(); ++r) cap_by_cycle[traj.cycles[r]] = traj.capacity_ah[r];
    for (const auto& prof : corpus.profiles[i]) {
      PhysRow row;
      row.dataset = traj.cell.dataset_id;
      row.cell = traj.cell.cell_id;
      row.cycle = prof.cycle_index;
      row.v = tsfm::extract_physical_features(prof).as_array();
      row.chem = chem_id(traj.cell.chemistry);
      const auto it = cap_by_cycle.find(prof.cycle_index);
      row.capacity = it == cap_by_cycle.end() ? std::numeric_limits<double>::quiet_NaN()
                                              : it->second;
      phys.push_back(std::move(row));
    }
  }
  {
    std::vector<std::string> header = {"cell_id", "cycle_index"};
    for (const char* n : tsfm::kPhysicalFeatureNames) header.push_back(n);
    header.push_back("dataset_id");
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : phys) {
      std::vector<std::string> row = {r.cell, std::to_string(r.cycle)};
      for (double v : r.v) row.push_back(tsfm::format_double(v));
      row.push_back(r.dataset);
      rows.push_back(std::move(row));
    }
    tsfm::write_csv(fs::path(out) / "features_physical.csv", header, rows);
  }

  // Per-cell degradation features (cells with >= 20 cycles).
  struct DfRow {
    std::string dataset, cell;
    tsfm::DegradationFeatureVector v;
    int chem;
  };
  std::vector<DfRow> dfs;
  size_t skipped = 0;
  for (const auto& traj : corpus.trajectories) {
    if (traj.length() < 20) {
      ++skipped;
      continue;
    }
    dfs.push_back({traj.cell.dataset_id, traj.cell.cell_id,
                   tsfm::extract_degradation_features(traj), chem_id(traj.cell.chemistry)});
  }
  if (skipped > 0) std::cerr << skipped << " cells shorter than 20 cycles skipped for DFs\n";
  {
    std::vector<std::string> header = {"cell_id"};
    for (const char* n : tsfm::kDegradationFeatureNames) header.push_back(n);
    header.push_back("dataset_id");
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : dfs) {
      std::vector<std::string> row = {r.cell};
      for (double v : r.v) row.push_back(tsfm::format_double(v));
      row.push_back(r.dataset);
      rows.push_back(std::move(row));
    }
    tsfm::write_csv(fs::path(out) / "features_df.csv", header, rows);
  }

  // Feature statistics: MI / eta^2 against chemistry, Pearson r against
  // capacity (physical features only); entries stay empty when undefined.
  std::vector<std::vector<std::string>> stat_rows;
  auto stats_for = [&](const std::string& kind, const std::string& name,
                       const std::vector<double>& values, const std::vector<int>& labels,
                       const std::vector<double>* capacity) {
    std::vector<std::string> row = {name, kind};
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= values.empty() ? 1.0 : static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mu) * (v - mu);
    var /= values.empty() ? 1.0 : static_cast<double>(values.size());
    row.push_back(tsfm::format_double(mu));
    row.push_back(tsfm::format_double(std::sqrt(var)));
    const std::set<int> classes(labels.begin(), labels.end());
    if (classes.size() >= 2) {
      row.push_back(tsfm::format_double(tsfm::mutual_information(values, labels)));
      try {
        row.push_back(tsfm::format_double(tsfm::anova_eta_squared(values, labels)));
      } catch (const tsfm::Error&) {
        row.push_back("");
      }
    } else {
      row.push_back("");
      row.push_back("");
    }
    if (capacity != nullptr) {
      try {
        row.push_back(tsfm::format_double(tsfm::pearson_correlation(values, *capacity)));
      } catch (const tsfm::Error&) {
        row.push_back("");
      }
    } else {
      row.push_back("");
    }
    stat_rows.push_back(std::move(row));
  };

  if (!phys.empty()) {
    std::vector<int> labels;
    std::vector<double> capacity;
    for (const auto& r : phys) {
      labels.push_back(r.chem);
      capacity.push_back(r.capacity);
    }
    for (int j = 0; j < tsfm::kPhysicalFeatureCount; ++j) {
      std::vector<double> values;
      values.reserve(phys.size());
      for (const auto& r : phys) values.push_back(r.v[static_cast<size_t>(j)]);
      stats_for("physical", tsfm::kPhysicalFeatureNames[static_cast<size_t>(j)], values, labels,
                &capacity);
    }
  }
  if (!dfs.empty()) {
    std::vector<int> labels;
    for (const auto& r : dfs) labels.push_back(r.chem);
    for (int j = 0; j < tsfm::kDegradationFeatureCount; ++j) {
      std::vector<double> values;
      values.reserve(dfs.size());
      for (const auto& r : dfs) values.push_back(r.v[static_cast<size_t>(j)]);
      stats_for("degradation", tsfm::kDegradationFeatureNames[static_cast<size_t>(j)], values,
                labels, nullptr);
    }
  }
  tsfm::write_csv(fs::path(out) / "feature_stats.csv",
                  {"feature", "kind", "mean", "std", "mi_nats", "eta_squared",
                   "pearson_r_vs_capacity"},
                  stat_rows);
  std::cout << "featurize: " << phys.size() << " cycle rows, " << dfs.size() << " cells -> "
            << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string manifest, out;
  std::string model_config, train_config;
  uint64_t seed = 0;
  bool seed_set = false;
  bool lora = false;
  std::vector<std::string> holdout;
  double train_fraction = 0.75;
};

int run_train(const TrainArgs& args) {
  tsfm::TimerConfig mc;
  if (!args.model_config.empty()) mc = tsfm::TimerConfig::from_json(read_text(args.model_config));
  tsfm::TrainConfig tc;
  if (!args.train_config.empty()) tc = tsfm::TrainConfig::from_json(read_text(args.train_config));
  if (args.seed_set) tc.seed = args.seed;
  if (args.lora) tc.use_lora = true;

  tsfm::Corpus corpus = load_normalized(args.manifest);
  tsfm::SplitSpec split_spec;
  split_spec.holdout_dataset_ids.insert(args.holdout.begin(), args.holdout.end());
  split_spec.train_fraction_within_seen = args.train_fraction;
  split_spec.seed = tc.seed;
  const tsfm::SplitResult split = tsfm::split_seen_unseen(corpus, split_spec);

  tsfm::TimerModel model(mc, tc.seed);
  const tsfm::Corpus* val = split.seen_test.n_cells() > 0 ? &split.seen_test : nullptr;
  const tsfm::TrainReport report = tsfm::train(split.train, val, model, tc, args.out);

  {
    ordered_json sj;
    auto keys = [](const tsfm::Corpus& c) {
      std::vector<std::string> out;
      for (const auto& t : c.trajectories) out.push_back(t.cell.key());
      return out;
    };
    sj["train"] = keys(split.train);
    sj["seen_test"] = keys(split.seen_test);
    sj["unseen_test"] = keys(split.unseen_test);
    std::ofstream os(fs::path(args.out) / "split.json", std::ios::trunc);
    os << sj.dump(2) << "\n";
  }
  std::cout << "trained " << report.epochs.size() << " epochs; final checkpoint "
            << report.final_checkpoint.string() << "\n";
  if (!report.epochs.empty()) {
    const auto& last = report.epochs.back();
    std::cout << "final l_total " << tsfm::format_double(last.l_total);
    if (!std::isnan(last.val_mape))
      std::cout << " val_mape_pct " << tsfm::format_double(last.val_mape * 100.0);
    std::cout << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// forecast

int run_forecast(const std::string& checkpoint, const std::string& manifest,
                 const std::string& out, const std::string& cell_key, int steps) {
  if (!fs::exists(checkpoint))
    tsfm::raise(tsfm::errc::upstream_artifact_missing, "checkpoint " + checkpoint);
  const tsfm::TimerModel model = tsfm::load_model_checkpoint(checkpoint);
  tsfm::Corpus corpus = load_normalized(manifest);

  std::vector<std::vector<std::string>> rows;
  size_t matched = 0;
  for (const auto& traj : corpus.trajectories) {
    if (!cell_key.empty() && traj.cell.key() != cell_key && traj.cell.cell_id != cell_key)
      continue;
    ++matched;
    const auto fc = model.autoregressive_forecast(traj.capacity_ah, steps);
    for (size_t j = 0; j < fc.size(); ++j)
      rows.push_back({traj.cell.dataset_id, traj.cell.cell_id,
                      std::to_string(traj.cycles.back() + static_cast<int64_t>(j) + 1),
                      tsfm::format_double(fc[j])});
  }
  if (matched == 0)
    tsfm::raise(tsfm::errc::unknown_dataset_id, "no cell matches '" + cell_key + "'");
  tsfm::write_csv(out, {"dataset_id", "cell_id", "cycle_index", "y_pred"}, rows);
  std::cout << "forecast " << steps << " cycles for " << matched << " cells -> " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalArgs {
  std::string checkpoint, manifest, out;
  int lookback = 96, horizon = 24, stride = 8;
  std::string rank_metric = "mape";
  bool no_baselines = false;
};

int run_evaluate(const EvalArgs& args) {
  if (!fs::exists(args.checkpoint))
    tsfm::raise(tsfm::errc::upstream_artifact_missing, "checkpoint " + args.checkpoint);
  const tsfm::TimerModel model = tsfm::load_model_checkpoint(args.checkpoint);
  tsfm::Corpus corpus = load_normalized(args.manifest);
  fs::create_directories(args.out);

  std::vector<std::pair<std::string, tsfm::Forecaster>> methods;
  methods.emplace_back("model", tsfm::make_forecaster(model));
  if (!args.no_baselines)
    for (auto& [name, fc] : baseline_forecasters()) methods.emplace_back(name, fc);

  std::vector<std::pair<std::string, tsfm::MetricReport>> reports;
  for (const auto& [name, fc] : methods)
    reports.emplace_back(name,
                         tsfm::evaluate_model(fc, corpus, args.lookback, args.horizon,
                                              args.stride));

  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, rep] : reports)
      for (const auto& c : rep.cells)
        rows.push_back({name, c.dataset_id, c.cell_id, tsfm::format_double(c.mae),
                        tsfm::format_double(c.rmse), tsfm::format_double(c.mape * 100.0),
                        std::to_string(c.n_windows)});
    tsfm::write_csv(fs::path(args.out) / "metrics_per_cell.csv",
                    {"method", "dataset_id", "cell_id", "mae", "rmse", "mape_pct", "n_windows"},
                    rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, rep] : reports)
      for (const auto& d : rep.datasets)
        rows.push_back({name, d.dataset_id, std::to_string(d.n_cells),
                        tsfm::format_double(d.mean_mae), tsfm::format_double(d.mean_rmse),
                        tsfm::format_double(d.mean_mape * 100.0),
                        tsfm::format_double(d.mape_q25 * 100.0),
                        tsfm::format_double(d.mape_q50 * 100.0),
                        tsfm::format_double(d.mape_q75 * 100.0)});
    tsfm::write_csv(fs::path(args.out) / "metrics_per_dataset.csv",
                    {"method", "dataset_id", "n_cells", "mean_mae", "mean_rmse", "mean_mape_pct",
                     "mape_q25_pct", "mape_q50_pct", "mape_q75_pct"},
                    rows);
  }

  // Rank methods per dataset on the chosen cell-average error.
  const auto& dataset_list = reports.front().second.datasets;
  const auto k = static_cast<int64_t>(reports.size());
  const auto n = static_cast<int64_t>(dataset_list.size());
  auto metric_of = [&](const tsfm::DatasetMetrics& d) {
    if (args.rank_metric == "mae") return d.mean_mae;
    if (args.rank_metric == "rmse") return d.mean_rmse;
    return d.mean_mape;
  };
  std::vector<std::string> method_names, dataset_names;
  for (const auto& [name, rep] : reports) method_names.push_back(name);
  for (const auto& d : dataset_list) dataset_names.push_back(d.dataset_id);
  tsfm::Tensor errors({k, n});
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < n; ++j)
      errors.at(i, j) = metric_of(reports[static_cast<size_t>(i)].second
                                      .datasets[static_cast<size_t>(j)]);
  if (n >= 2 && k >= 2) {
    tsfm::write_rank_table_csv(tsfm::friedman(method_names, dataset_names, errors),
                               fs::path(args.out) / "rank_table.csv");
  } else {
    // Single dataset: emit plain ranks, no Friedman statistic.
    std::vector<std::vector<std::string>> rows;
    std::vector<int64_t> order(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int64_t a, int64_t b) { return errors.at(a, 0) < errors.at(b, 0); });
    std::vector<double> rank(static_cast<size_t>(k));
    for (int64_t r = 0; r < k; ++r) rank[static_cast<size_t>(order[static_cast<size_t>(r)])] =
        static_cast<double>(r + 1);
    for (int64_t i = 0; i < k; ++i)
      rows.push_back({method_names[static_cast<size_t>(i)],
                      tsfm::format_double(rank[static_cast<size_t>(i)]),
                      tsfm::format_double(rank[static_cast<size_t>(i)]), "", "", ""});
    tsfm::write_csv(fs::path(args.out) / "rank_table.csv",
                    {"method", "rank_" + (n == 1 ? dataset_names[0] : std::string("all")),
                     "avg_rank", "friedman_chi2", "critical_value_05", "significant"},
                    rows);
  }
  for (const auto& [name, rep] : reports)
    std::cout << name << " mean mape_pct " << tsfm::format_double(tsfm::mean_mape(rep) * 100.0)
              << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainArgs {
  std::string checkpoint, manifest, out;
  int lookback = 96, horizon = 24, stride = 8;
  tsfm::LimeConfig lime;
  bool svg = false;
  int max_cells = 0;
};

int run_explain(const ExplainArgs& args) {
  if (!fs::exists(args.checkpoint))
    tsfm::raise(tsfm::errc::upstream_artifact_missing, "checkpoint " + args.checkpoint);
  const tsfm::TimerModel model = tsfm::load_model_checkpoint(args.checkpoint);
  tsfm::Corpus corpus = load_normalized(args.manifest);
  fs::create_directories(args.out);

  std::vector<std::pair<std::string, tsfm::Forecaster>> methods;
  methods.emplace_back("model", tsfm::make_forecaster(model));
  for (auto& [name, fc] : baseline_forecasters()) methods.emplace_back(name, fc);

  std::vector<tsfm::ScatterEntry> entries;
  size_t cells_done = 0;
  for (const auto& traj : corpus.trajectories) {
    if (args.max_cells > 0 && cells_done >= static_cast<size_t>(args.max_cells)) break;
    if (tsfm::make_windows(traj, args.lookback, args.horizon, args.stride).empty()) continue;
    ++cells_done;

    std::map<std::string, tsfm::LimeMap> maps;
    for (const auto& [name, fc] : methods) {
      tsfm::LimeMap map =
          tsfm::build_lime_map(fc, traj, args.lookback, args.horizon, args.stride, args.lime);
      map.method = name;
      const std::string fname = name == "model"
                                    ? "lime_map_" + traj.cell.cell_id + ".csv"
                                    : "lime_map_" + traj.cell.cell_id + "." + name + ".csv";
      tsfm::write_lime_map_csv(map, fs::path(args.out) / fname);
      if (args.svg)
        tsfm::svg::write_heatmap(fs::path(args.out) / (fname.substr(0, fname.size() - 4) + ".svg"),
                                 "LIME map " + traj.cell.cell_id + " (" + name + ")",
                                 map.importances, "lookback position", "window");
      maps.emplace(name, std::move(map));
    }

    tsfm::Corpus one;
    one.trajectories.push_back(traj);
    one.profiles.emplace_back();
    for (const auto& [name, fc] : methods) {
      const auto rep =
          tsfm::evaluate_model(fc, one, args.lookback, args.horizon, args.stride);
      tsfm::ScatterEntry e;
      e.dataset_id = traj.cell.dataset_id;
      e.method = name;
      e.cell_id = traj.cell.cell_id;
      e.js = tsfm::js_divergence(maps.at(name), maps.at("model"));
      e.mape = rep.cells.front().mape;
      entries.push_back(std::move(e));
    }
  }
  if (entries.empty()) tsfm::raise(tsfm::errc::no_windows, "no cells admit LIME windows");

  const tsfm::ScatterResult scatter = tsfm::explanation_error_scatter(entries);
  tsfm::write_scatter_csv(scatter, fs::path(args.out) / "lime_scatter.csv");
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [ds, r] : scatter.dataset_pearson)
      rows.push_back({ds, tsfm::format_double(r)});
    tsfm::write_csv(fs::path(args.out) / "scatter_correlations.csv",
                    {"dataset_id", "pearson_r_js_vs_log_mape"}, rows);
  }
  if (args.svg) {
    std::map<std::string, tsfm::svg::Series> by_method;
    for (const auto& r : scatter.rows) {
      auto& s = by_method[r.method];
      s.label = r.method;
      s.x.push_back(r.js);
      s.y.push_back(r.log_mape);
    }
    std::vector<tsfm::svg::Series> series;
    for (auto& [name, s] : by_method) series.push_back(std::move(s));
    tsfm::svg::write_scatter(fs::path(args.out) / "lime_scatter.svg",
                             "explanation distance vs error", series, "JS divergence",
                             "log(MAPE)");
  }
  std::cout << "explain: " << cells_done << " cells, " << entries.size() << " scatter rows -> "
            << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

int run_report(const std::string& run, const std::string& out) {
  fs::create_directories(out);
  ordered_json summary;
  ordered_json stages;

  // Training curves.
  if (fs::exists(fs::path(run) / "report.csv")) {
    const auto t = tsfm::read_csv(fs::path(run) / "report.csv");
    stages["train"] = true;
    std::vector<tsfm::svg::Series> series(3);
    series[0].label = "l_total";
    series[1].label = "l_forecast";
    series[2].label = "l_physics";
    ordered_json last;
    for (const auto& row : t.rows) {
      const double epoch = *tsfm::parse_double(row[0]);
      for (int s = 0; s < 3; ++s) {
        series[static_cast<size_t>(s)].x.push_back(epoch);
        series[static_cast<size_t>(s)].y.push_back(*tsfm::parse_double(row[static_cast<size_t>(s + 1)]));
      }
    }
    if (!t.rows.empty()) {
      last["epochs"] = t.rows.size();
      last["l_total"] = *tsfm::parse_double(t.rows.back()[1]);
      summary["train"] = last;
    }
    tsfm::svg::write_line_chart(fs::path(out) / "training_curves.svg", "training losses", series,
                                "epoch", "loss");
  } else {
    stages["train"] = false;
  }

  // Metrics per dataset.
  if (fs::exists(fs::path(run) / "metrics_per_dataset.csv")) {
    const auto t = tsfm::read_csv(fs::path(run) / "metrics_per_dataset.csv");
    stages["evaluate"] = true;
    ordered_json m = ordered_json::array();
    std::map<std::string, tsfm::svg::Series> per_method;
    for (const auto& row : t.rows) {
      ordered_json e;
      e["method"] = row[0];
      e["dataset_id"] = row[1];
      e["mean_mape_pct"] = *tsfm::parse_double(row[5]);
      m.push_back(e);
      auto& s = per_method[row[0]];
      s.label = row[0];
      s.x.push_back(static_cast<double>(s.x.size()));
      s.y.push_back(*tsfm::parse_double(row[5]));
    }
    summary["metrics_per_dataset"] = m;
    std::vector<tsfm::svg::Series> series;
    for (auto& [name, s] : per_method) series.push_back(std::move(s));
    tsfm::svg::write_line_chart(fs::path(out) / "error_by_dataset.svg",
                                "mean MAPE (%) per dataset", series, "dataset index",
                                "MAPE (%)");
  } else {
    stages["evaluate"] = false;
  }

  // Rank table.
  if (fs::exists(fs::path(run) / "rank_table.csv")) {
    const auto t = tsfm::read_csv(fs::path(run) / "rank_table.csv");
    ordered_json ranks = ordered_json::array();
    const int avg_col = t.column("avg_rank");
    const int chi_col = t.column("friedman_chi2");
    for (const auto& row : t.rows) {
      ordered_json e;
      e["method"] = row[0];
      if (avg_col >= 0 && !row[static_cast<size_t>(avg_col)].empty())
        e["avg_rank"] = *tsfm::parse_double(row[static_cast<size_t>(avg_col)]);
      ranks.push_back(e);
      if (chi_col >= 0 && !row[static_cast<size_t>(chi_col)].empty())
        summary["friedman_chi2"] = *tsfm::parse_double(row[static_cast<size_t>(chi_col)]);
    }
    summary["ranks"] = ranks;
  }

  // LIME scatter.
  if (fs::exists(fs::path(run) / "lime_scatter.csv")) {
    stages["explain"] = true;
    const auto t = tsfm::read_csv(fs::path(run) / "lime_scatter.csv");
    summary["lime_scatter_rows"] = t.rows.size();
    std::map<std::string, tsfm::svg::Series> by_method;
    for (const auto& row : t.rows) {
      auto& s = by_method[row[1]];
      s.label = row[1];
      s.x.push_back(*tsfm::parse_double(row[3]));
      s.y.push_back(*tsfm::parse_double(row[4]));
    }
    std::vector<tsfm::svg::Series> series;
    for (auto& [name, s] : by_method) series.push_back(std::move(s));
    tsfm::svg::write_scatter(fs::path(out) / "lime_scatter.svg",
                             "explanation distance vs error", series, "JS divergence",
                             "log(MAPE)");
  } else {
    stages["explain"] = false;
  }
  if (fs::exists(fs::path(run) / "scatter_correlations.csv")) {
    const auto t = tsfm::read_csv(fs::path(run) / "scatter_correlations.csv");
    ordered_json c = ordered_json::array();
    for (const auto& row : t.rows) {
      ordered_json e;
      e["dataset_id"] = row[0];
      e["pearson_r"] = *tsfm::parse_double(row[1]);
      c.push_back(e);
    }
    summary["scatter_correlations"] = c;
  }
  stages["featurize"] = fs::exists(fs::path(run) / "feature_stats.csv");
  stages["forecast"] = fs::exists(fs::path(run) / "forecast.csv");
  summary["stages"] = stages;

  std::ofstream os(fs::path(out) / "summary.json", std::ios::trunc);
  os << summary.dump(2) << "\n";
  for (auto it = stages.begin(); it != stages.end(); ++it)
    std::cout << "stage " << it.key() << ": " << (it.value().get<bool>() ? "present" : "absent")
              << "\n";
  std::cout << "summary -> " << (fs::path(out) / "summary.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"battery capacity degradation forecasting pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic degradation corpus");
  cmd_synth->add_option("--out", synth.out, "output corpus directory")->required();
  cmd_synth->add_option("--cells", synth.cells, "number of cells");
  cmd_synth->add_option("--cycles", synth.cycles, "cycles per cell");
  cmd_synth->add_option("--regime", synth.regime,
                        "SMOOTH_EXP | DOUBLE_EXP | KNEE | NOISY_PLATEAU");
  cmd_synth->add_option("--seed", synth.seed, "random seed");
  cmd_synth->add_option("--q0", synth.q0, "nominal capacity (Ah)");
  cmd_synth->add_option("--a", synth.a, "fade mixing weight");
  cmd_synth->add_option("--b", synth.b, "fast fade rate");
  cmd_synth->add_option("--c", synth.c, "slow fade rate");
  cmd_synth->add_option("--noise", synth.noise, "noise sigma as fraction of q0");
  cmd_synth->add_flag("--no-profiles", synth.no_profiles, "skip per-cycle CC-CV profiles");
  cmd_synth->add_option("--dataset-id", synth.dataset_id, "override dataset id");

  std::string ing_manifest, ing_out;
  auto* cmd_ingest = app.add_subcommand("ingest", "validate and summarize a corpus manifest");
  cmd_ingest->add_option("--manifest", ing_manifest, "manifest.json path")->required();
  cmd_ingest->add_option("--out", ing_out, "write a canonical copy here");

  std::string feat_manifest, feat_out;
  auto* cmd_feat = app.add_subcommand("featurize", "extract physical and degradation features");
  cmd_feat->add_option("--manifest", feat_manifest, "manifest.json path")->required();
  cmd_feat->add_option("--out", feat_out, "output directory")->required();

  TrainArgs train_args;
  auto* cmd_train = app.add_subcommand("train", "train the forecasting model");
  cmd_train->add_option("--manifest", train_args.manifest, "manifest.json path")->required();
  cmd_train->add_option("--out", train_args.out, "run directory")->required();
  cmd_train->add_option("--model-config", train_args.model_config, "model config JSON");
  cmd_train->add_option("--train-config", train_args.train_config, "train config JSON");
  cmd_train->add_option("--seed", train_args.seed, "random seed (overrides config)")
      ->each([&](const std::string&) { train_args.seed_set = true; });
  cmd_train->add_flag("--lora", train_args.lora, "train with LoRA adapters");
  cmd_train->add_option("--holdout", train_args.holdout,
                        "dataset ids excluded from training entirely");
  cmd_train->add_option("--train-fraction", train_args.train_fraction,
                        "per-dataset fraction of cells used for training");

  std::string fc_ckpt, fc_manifest, fc_out, fc_cell;
  int fc_steps = 24;
  auto* cmd_fc = app.add_subcommand("forecast", "autoregressive capacity forecast");
  cmd_fc->add_option("--checkpoint", fc_ckpt, "model checkpoint")->required();
  cmd_fc->add_option("--manifest", fc_manifest, "manifest.json path")->required();
  cmd_fc->add_option("--out", fc_out, "output CSV")->required();
  cmd_fc->add_option("--cell", fc_cell, "dataset/cell key or cell id (default: all)");
  cmd_fc->add_option("--steps", fc_steps, "forecast horizon in cycles");

  EvalArgs eval_args;
  auto* cmd_eval = app.add_subcommand("evaluate", "window-based metrics and Friedman ranks");
  cmd_eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  cmd_eval->add_option("--manifest", eval_args.manifest, "manifest.json path")->required();
  cmd_eval->add_option("--out", eval_args.out, "output directory")->required();
  cmd_eval->add_option("--lookback", eval_args.lookback, "window lookback T");
  cmd_eval->add_option("--horizon", eval_args.horizon, "forecast horizon H");
  cmd_eval->add_option("--stride", eval_args.stride, "window stride");
  cmd_eval->add_option("--rank-metric", eval_args.rank_metric, "mape | mae | rmse");
  cmd_eval->add_flag("--no-baselines", eval_args.no_baselines, "evaluate the model only");

  ExplainArgs ex_args;
  auto* cmd_ex = app.add_subcommand("explain", "LIME attribution maps and JS scatter");
  cmd_ex->add_option("--checkpoint", ex_args.checkpoint, "model checkpoint")->required();
  cmd_ex->add_option("--manifest", ex_args.manifest, "manifest.json path")->required();
  cmd_ex->add_option("--out", ex_args.out, "output directory")->required();
  cmd_ex->add_option("--lookback", ex_args.lookback, "window lookback T");
  cmd_ex->add_option("--horizon", ex_args.horizon, "forecast horizon H");
  cmd_ex->add_option("--stride", ex_args.stride, "window stride");
  cmd_ex->add_option("--n-perturb", ex_args.lime.n_perturb, "perturbations per window");
  cmd_ex->add_option("--mask-prob", ex_args.lime.mask_prob, "segment mask probability");
  cmd_ex->add_option("--segment-len", ex_args.lime.segment_len, "segment length");
  cmd_ex->add_option("--kernel-width", ex_args.lime.kernel_width, "kernel width");
  cmd_ex->add_option("--ridge-lambda", ex_args.lime.ridge_lambda, "ridge regularization");
  cmd_ex->add_option("--seed", ex_args.lime.seed, "random seed");
  cmd_ex->add_flag("--svg", ex_args.svg, "render SVG heat maps and scatter");
  cmd_ex->add_option("--max-cells", ex_args.max_cells, "explain at most this many cells (0=all)");

  std::string rep_run, rep_out;
  auto* cmd_rep = app.add_subcommand("report", "collate run artifacts into a summary");
  cmd_rep->add_option("--run", rep_run, "directory holding pipeline outputs")->required();
  cmd_rep->add_option("--out", rep_out, "summary output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(cmd_synth)) return run_synth(synth);
    if (app.got_subcommand(cmd_ingest)) return run_ingest(ing_manifest, ing_out);
    if (app.got_subcommand(cmd_feat)) return run_featurize(feat_manifest, feat_out);
    if (app.got_subcommand(cmd_train)) return run_train(train_args);
    if (app.got_subcommand(cmd_fc)) return run_forecast(fc_ckpt, fc_manifest, fc_out, fc_cell,
                                                        fc_steps);
    if (app.got_subcommand(cmd_eval)) return run_evaluate(eval_args);
    if (app.got_subcommand(cmd_ex)) return run_explain(ex_args);
    if (app.got_subcommand(cmd_rep)) return run_report(rep_run, rep_out);
  } catch (const tsfm::Error& e) {
    print_error(e);
    return exit_code_for(e);
  } catch (const std::exception& e) {
    json j;
    j["code"] = "Internal";
    j["class"] = "numeric";
    j["message"] = e.what();
    std::cerr << "error: " << j.dump() << "\n";
    return 4;
  }
  return 0;
}

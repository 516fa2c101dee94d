#include "tsfm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tsfm/csv.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/parallel.hpp"

namespace tsfm {

Metrics metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) raise(errc::length_mismatch, "metrics: y_true vs y_pred");
  if (y_true.empty()) raise(errc::length_mismatch, "metrics: empty input");
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    const double e = y_pred[i] - y_true[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (y_true[i] == 0.0) raise(errc::zero_target, "metrics: MAPE undefined for zero target");
    pct_sum += std::abs(e / y_true[i]);
  }
  const double n = static_cast<double>(y_true.size());
  return Metrics{abs_sum / n, std::sqrt(sq_sum / n), pct_sum / n};
}

namespace {

double vec_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - std::floor(pos);
  return v[lo] * (1.0 - w) + v[hi] * w;
}

}  // namespace

MetricReport evaluate_model(const Forecaster& forecaster, const Corpus& corpus, int lookback,
                            int horizon, int stride) {
  std::vector<std::vector<WindowSample>> windows(corpus.trajectories.size());
  size_t total = 0;
  for (size_t i = 0; i < corpus.trajectories.size(); ++i) {
    windows[i] = make_windows(corpus.trajectories[i], lookback, horizon, stride);
    total += windows[i].size();
  }
  if (total == 0) raise(errc::no_windows, "evaluate_model: no admissible windows");

  std::vector<std::optional<CellMetrics>> per_cell(corpus.trajectories.size());
  parallel_for(static_cast<int64_t>(corpus.trajectories.size()), [&](int64_t ci) {
    const auto i = static_cast<size_t>(ci);
    if (windows[i].empty()) return;
    double mae = 0.0, rmse = 0.0, mape = 0.0;
    for (const WindowSample& w : windows[i]) {
      const std::vector<double> pred = forecaster(w.lookback, horizon);
      const Metrics m = metrics(w.horizon, pred);
      mae += m.mae;
      rmse += m.rmse;
      mape += m.mape;
    }
    const double n = static_cast<double>(windows[i].size());
    CellMetrics cm;
    cm.dataset_id = corpus.trajectories[i].cell.dataset_id;
    cm.cell_id = corpus.trajectories[i].cell.cell_id;
    cm.mae = mae / n;
    cm.rmse = rmse / n;
    cm.mape = mape / n;
    cm.n_windows = static_cast<int>(windows[i].size());
    per_cell[i] = std::move(cm);
  });

  MetricReport report;
  std::vector<std::string> dataset_order;
  std::map<std::string, std::vector<size_t>> by_dataset;
  for (auto& cm : per_cell) {
    if (!cm) continue;
    if (!by_dataset.count(cm->dataset_id)) dataset_order.push_back(cm->dataset_id);
    by_dataset[cm->dataset_id].push_back(report.cells.size());
    report.cells.push_back(std::move(*cm));
  }
  for (const std::string& ds : dataset_order) {
    const auto& idx = by_dataset[ds];
    DatasetMetrics dm;
    dm.dataset_id = ds;
    dm.n_cells = static_cast<int>(idx.size());
    std::vector<double> mapes;
    for (size_t i : idx) {
      dm.mean_mae += report.cells[i].mae;
      dm.mean_rmse += report.cells[i].rmse;
      dm.mean_mape += report.cells[i].mape;
      mapes.push_back(report.cells[i].mape);
    }
    dm.mean_mae /= dm.n_cells;
    dm.mean_rmse /= dm.n_cells;
    dm.mean_mape /= dm.n_cells;
    dm.mape_q25 = vec_quantile(mapes, 0.25);
    dm.mape_q50 = vec_quantile(mapes, 0.50);
    dm.mape_q75 = vec_quantile(mapes, 0.75);
    report.datasets.push_back(std::move(dm));
  }
  return report;
}

double mean_mape(const MetricReport& report) {
  if (report.cells.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : report.cells) s += c.mape;
  return s / static_cast<double>(report.cells.size());
}

namespace {

// chi^2 upper 5% quantiles for df = 1..20.
constexpr double kChi2Crit05[20] = {3.841,  5.991,  7.815,  9.488,  11.070, 12.592, 14.067,
                                    15.507, 16.919, 18.307, 19.675, 21.026, 22.362, 23.685,
                                    24.996, 26.296, 27.587, 28.869, 30.144, 31.410};

}  // namespace

RankTable friedman(const std::vector<std::string>& methods,
                   const std::vector<std::string>& datasets, const Tensor& errors) {
  const auto k = static_cast<int64_t>(methods.size());
  const auto n = static_cast<int64_t>(datasets.size());
  if (errors.rank() != 2 || errors.dim(0) != k || errors.dim(1) != n)
    raise(errc::shape_mismatch, "friedman: errors matrix must be [methods, datasets]");
  if (k < 2 || n < 2) raise(errc::invalid_config, "friedman needs >= 2 methods and >= 2 datasets");
  for (int64_t i = 0; i < errors.size(); ++i)
    if (!std::isfinite(errors[i])) raise(errc::missing_entry, "friedman: non-finite error entry");

  RankTable table;
  table.methods = methods;
  table.datasets = datasets;
  table.ranks = Tensor({k, n});

  for (int64_t j = 0; j < n; ++j) {
    std::vector<int64_t> order(static_cast<size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int64_t a, int64_t b) { return errors.at(a, j) < errors.at(b, j); });
    // Mid-ranks over groups of exactly equal errors.
    int64_t pos = 0;
    while (pos < k) {
      int64_t end = pos;
      while (end + 1 < k && errors.at(order[static_cast<size_t>(end + 1)], j) ==
                                errors.at(order[static_cast<size_t>(pos)], j))
        ++end;
      const double mid = 0.5 * static_cast<double>(pos + end) + 1.0;
      for (int64_t t = pos; t <= end; ++t) table.ranks.at(order[static_cast<size_t>(t)], j) = mid;
      pos = end + 1;
    }
  }

  table.avg_rank.resize(static_cast<size_t>(k));
  double sum_sq = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += table.ranks.at(i, j);
    const double avg = s / static_cast<double>(n);
    table.avg_rank[static_cast<size_t>(i)] = avg;
    sum_sq += avg * avg;
  }
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  table.chi2 = 12.0 * nd / (kd * (kd + 1.0)) * sum_sq - 3.0 * nd * (kd + 1.0);

  const int df = static_cast<int>(k - 1);
  if (df <= 20) {
    table.critical_value_05 = kChi2Crit05[df - 1];
  } else {
    // Wilson-Hilferty approximation past the embedded table.
    const double z = 1.6448536269514722;
    const double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
    table.critical_value_05 = df * t * t * t;
  }
  table.significant = table.chi2 > table.critical_value_05;
  return table;
}

void write_metrics_csv(const MetricReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : report.cells)
      rows.push_back({c.dataset_id, c.cell_id, format_double(c.mae), format_double(c.rmse),
                      format_double(c.mape * 100.0), std::to_string(c.n_windows)});
    write_csv(dir / "metrics_per_cell.csv",
              {"dataset_id", "cell_id", "mae", "rmse", "mape_pct", "n_windows"}, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& d : report.datasets)
      rows.push_back({d.dataset_id, std::to_string(d.n_cells), format_double(d.mean_mae),
                      format_double(d.mean_rmse), format_double(d.mean_mape * 100.0),
                      format_double(d.mape_q25 * 100.0), format_double(d.mape_q50 * 100.0),
                      format_double(d.mape_q75 * 100.0)});
    write_csv(dir / "metrics_per_dataset.csv",
              {"dataset_id", "n_cells", "mean_mae", "mean_rmse", "mean_mape_pct", "mape_q25_pct",
               "mape_q50_pct", "mape_q75_pct"},
              rows);
  }
}

void write_rank_table_csv(const RankTable& table, const std::filesystem::path& file) {
  std::vector<std::string> header = {"method"};
  for (const auto& ds : table.datasets) header.push_back("rank_" + ds);
  header.insert(header.end(), {"avg_rank", "friedman_chi2", "critical_value_05", "significant"});
  std::vector<std::vector<std::string>> rows;
  for (size_t i = 0; i < table.methods.size(); ++i) {
    std::vector<std::string> row = {table.methods[i]};
    for (size_t j = 0; j < table.datasets.size(); ++j)
      row.push_back(format_double(table.ranks.at(static_cast<int64_t>(i),
                                                 static_cast<int64_t>(j))));
    row.push_back(format_double(table.avg_rank[i]));
    row.push_back(format_double(table.chi2));
    row.push_back(format_double(table.critical_value_05));
    row.push_back(table.significant ? "true" : "false");
    rows.push_back(std::move(row));
  }
  write_csv(file, header, rows);
}

}  // namespace tsfm

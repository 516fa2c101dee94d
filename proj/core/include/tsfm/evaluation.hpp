#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsfm/corpus.hpp"
#include "tsfm/model.hpp"
#include "tsfm/tensor.hpp"

namespace tsfm {

struct Metrics {
  double mae = 0;
  double rmse = 0;
  double mape = 0;  // fraction; reports format it as percent
};

// Raises zero_target when a target is zero (MAPE undefined).
Metrics metrics(std::span<const double> y_true, std::span<const double> y_pred);

struct CellMetrics {
  std::string dataset_id, cell_id;
  double mae = 0, rmse = 0, mape = 0;  // cell-wise averages over windows
  int n_windows = 0;
};

struct DatasetMetrics {
  std::string dataset_id;
  int n_cells = 0;
  double mean_mae = 0, mean_rmse = 0, mean_mape = 0;
  double mape_q25 = 0, mape_q50 = 0, mape_q75 = 0;
};

struct MetricReport {
  std::vector<CellMetrics> cells;
  std::vector<DatasetMetrics> datasets;
};

// Slides (lookback, horizon) windows over every trajectory, forecasts each
// window, and aggregates per cell then per dataset. Cells parallelize freely;
// results are reduced in corpus order.
MetricReport evaluate_model(const Forecaster& forecaster, const Corpus& corpus, int lookback,
                            int horizon, int stride);

double mean_mape(const MetricReport& report);

struct RankTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  Tensor ranks;                  // [k, n]: mid-ranks within each dataset
  std::vector<double> avg_rank;  // per method
  double chi2 = 0;               // Friedman statistic
  double critical_value_05 = 0;  // chi^2(k-1) at alpha = 0.05
  bool significant = false;
};

// errors: [k methods, n datasets] of per-dataset mean per-cell error.
// Ascending mid-ranks per dataset; chi2_F = 12n/(k(k+1)) sum R_j^2 - 3n(k+1)
// over average ranks.
RankTable friedman(const std::vector<std::string>& methods,
                   const std::vector<std::string>& datasets, const Tensor& errors);

void write_metrics_csv(const MetricReport& report, const std::filesystem::path& dir);
void write_rank_table_csv(const RankTable& table, const std::filesystem::path& file);

}  // namespace tsfm

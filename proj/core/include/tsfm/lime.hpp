#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsfm/corpus.hpp"
#include "tsfm/model.hpp"
#include "tsfm/tensor.hpp"

namespace tsfm {

struct LimeConfig {
  int n_perturb = 512;
  double mask_prob = 0.3;      // probability a segment is masked out
  int segment_len = 8;
  double kernel_width = 0.25;  // on cosine distance between masks
  double ridge_lambda = 1e-3;
  uint64_t seed = 0;

  void validate() const;
};

// Signed importances: one row per sliding window, one column per lookback
// position.
struct LimeMap {
  Tensor importances;  // [W, T]
  std::vector<int64_t> window_starts;
  std::string cell_id;
  std::string method;
};

// Perturbs contiguous segments of the lookback (masked segments replaced by
// the lookback mean), summarizes each forecast by its horizon mean, and fits
// a kernel-weighted ridge surrogate on the mask bits. Segment coefficients
// are broadcast to their time steps.
std::vector<double> lime_explain_window(const Forecaster& forecaster,
                                        std::span<const double> lookback, int horizon,
                                        const LimeConfig& cfg);

LimeMap build_lime_map(const Forecaster& forecaster, const CapacityTrajectory& traj, int lookback,
                       int horizon, int stride, const LimeConfig& cfg);

// JS divergence in nats between |importance| distributions (eps = 1e-12
// smoothing); symmetric, in [0, ln 2].
double js_divergence(std::span<const double> a, std::span<const double> b);
double js_divergence(const LimeMap& a, const LimeMap& b);

struct ScatterEntry {
  std::string dataset_id, method, cell_id;
  double js = 0;
  double mape = 0;  // fraction, must be > 0
};

struct ScatterRow {
  std::string dataset_id, method, cell_id;
  double js = 0;
  double log_mape = 0;  // natural log of the fractional MAPE
};

struct ScatterResult {
  std::vector<ScatterRow> rows;
  // Per-dataset Pearson r between js and log_mape where computable.
  std::vector<std::pair<std::string, double>> dataset_pearson;
};

ScatterResult explanation_error_scatter(const std::vector<ScatterEntry>& entries);

void write_lime_map_csv(const LimeMap& map, const std::filesystem::path& file);
void write_scatter_csv(const ScatterResult& scatter, const std::filesystem::path& file);

}  // namespace tsfm

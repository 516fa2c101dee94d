#include "tsfm/lime.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tsfm/csv.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/features.hpp"
#include "tsfm/parallel.hpp"
#include "tsfm/rng.hpp"

namespace tsfm {

void LimeConfig::validate() const {
  if (n_perturb < 2) raise(errc::invalid_config, "n_perturb must be >= 2");
  if (mask_prob <= 0.0 || mask_prob >= 1.0) raise(errc::invalid_config, "mask_prob in (0,1)");
  if (segment_len < 1) raise(errc::invalid_config, "segment_len must be >= 1");
  if (!(kernel_width > 0.0)) raise(errc::invalid_config, "kernel_width must be > 0");
  if (!(ridge_lambda > 0.0)) raise(errc::invalid_config, "ridge_lambda must be > 0");
}

namespace {

// Gaussian elimination with partial pivoting on the (small) normal equations.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const size_t n = b.size();
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    if (a[col][col] == 0.0) continue;
    for (size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (size_t cc = col; cc < n; ++cc) a[r][cc] -= f * a[col][cc];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    if (a[i][i] != 0.0) x[i] = b[i] / a[i][i];
  return x;
}

}  // namespace

std::vector<double> lime_explain_window(const Forecaster& forecaster,
                                        std::span<const double> lookback, int horizon,
                                        const LimeConfig& cfg) {
  cfg.validate();
  const auto t_len = static_cast<int64_t>(lookback.size());
  if (t_len < 1) raise(errc::empty_input, "lime: empty lookback");
  const int64_t n_seg = (t_len + cfg.segment_len - 1) / cfg.segment_len;

  const double baseline =
      std::accumulate(lookback.begin(), lookback.end(), 0.0) / static_cast<double>(t_len);

  // Masks are drawn serially so the explanation is a pure function of the
  // seed; forecast evaluation parallelizes over perturbations.
  Rng rng(seed_for(cfg.seed, "lime-masks"));
  std::vector<std::vector<char>> masks(static_cast<size_t>(cfg.n_perturb),
                                       std::vector<char>(static_cast<size_t>(n_seg), 1));
  for (auto& mask : masks)
    for (auto& bit : mask) bit = rng.uniform() < cfg.mask_prob ? 0 : 1;
  bool all_same = true;
  for (const auto& mask : masks)
    if (mask != masks.front()) {
      all_same = false;
      break;
    }
  if (all_same) raise(errc::degenerate_masks, "all perturbation masks identical");

  std::vector<double> targets(static_cast<size_t>(cfg.n_perturb));
  std::vector<double> weights(static_cast<size_t>(cfg.n_perturb));
  parallel_for(cfg.n_perturb, [&](int64_t mi) {
    const auto& mask = masks[static_cast<size_t>(mi)];
    std::vector<double> x(lookback.begin(), lookback.end());
    int64_t kept = 0;
    for (int64_t s = 0; s < n_seg; ++s) {
      if (mask[static_cast<size_t>(s)]) {
        ++kept;
        continue;
      }
      const int64_t lo = s * cfg.segment_len;
      const int64_t hi = std::min<int64_t>(lo + cfg.segment_len, t_len);
      for (int64_t t = lo; t < hi; ++t) x[static_cast<size_t>(t)] = baseline;
    }
    const std::vector<double> fc = forecaster(x, horizon);
    double mean = 0.0;
    for (double v : fc) mean += v;
    mean /= static_cast<double>(fc.size());
    if (!std::isfinite(mean)) raise(errc::non_finite_forecast, "forecaster returned NaN/Inf");
    targets[static_cast<size_t>(mi)] = mean;
    const double cos =
        kept > 0 ? std::sqrt(static_cast<double>(kept) / static_cast<double>(n_seg)) : 0.0;
    const double d = 1.0 - cos;
    weights[static_cast<size_t>(mi)] = std::exp(-(d * d) / (cfg.kernel_width * cfg.kernel_width));
  });

  // Weighted ridge on [intercept, mask bits]; the intercept is unpenalized.
  const size_t dim = static_cast<size_t>(n_seg) + 1;
  std::vector<std::vector<double>> xtwx(dim, std::vector<double>(dim, 0.0));
  std::vector<double> xtwy(dim, 0.0);
  for (size_t m = 0; m < masks.size(); ++m) {
    std::vector<double> row(dim, 0.0);
    row[0] = 1.0;
    for (size_t s = 0; s < static_cast<size_t>(n_seg); ++s) row[s + 1] = masks[m][s];
    const double w = weights[m];
    for (size_t i = 0; i < dim; ++i) {
      if (row[i] == 0.0) continue;
      for (size_t j = 0; j < dim; ++j) xtwx[i][j] += w * row[i] * row[j];
      xtwy[i] += w * row[i] * targets[m];
    }
  }
  for (size_t i = 1; i < dim; ++i) xtwx[i][i] += cfg.ridge_lambda;
  const std::vector<double> beta = solve_dense(std::move(xtwx), std::move(xtwy));

  std::vector<double> importance(static_cast<size_t>(t_len), 0.0);
  for (int64_t s = 0; s < n_seg; ++s) {
    const int64_t lo = s * cfg.segment_len;
    const int64_t hi = std::min<int64_t>(lo + cfg.segment_len, t_len);
    for (int64_t t = lo; t < hi; ++t)
      importance[static_cast<size_t>(t)] = beta[static_cast<size_t>(s) + 1];
  }
  return importance;
}

LimeMap build_lime_map(const Forecaster& forecaster, const CapacityTrajectory& traj, int lookback,
                       int horizon, int stride, const LimeConfig& cfg) {
  const auto windows = make_windows(traj, lookback, horizon, stride);
  if (windows.empty()) raise(errc::no_windows, "build_lime_map: " + traj.cell.key());
  LimeMap map;
  map.cell_id = traj.cell.cell_id;
  map.importances = Tensor({static_cast<int64_t>(windows.size()), static_cast<int64_t>(lookback)});
  map.window_starts.reserve(windows.size());
  for (size_t w = 0; w < windows.size(); ++w) {
    LimeConfig wcfg = cfg;
    wcfg.seed = seed_for(cfg.seed, "lime-window", w);
    const auto imp = lime_explain_window(forecaster, windows[w].lookback, horizon, wcfg);
    std::copy(imp.begin(), imp.end(),
              map.importances.data() + static_cast<int64_t>(w) * lookback);
    map.window_starts.push_back(windows[w].start_cycle);
  }
  return map;
}

double js_divergence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) raise(errc::shape_mismatch, "js_divergence: size mismatch");
  if (a.empty()) raise(errc::shape_mismatch, "js_divergence: empty input");
  constexpr double eps = 1e-12;
  double za = 0.0, zb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    za += std::abs(a[i]) + eps;
    zb += std::abs(b[i]) + eps;
  }
  double js = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double p = (std::abs(a[i]) + eps) / za;
    const double q = (std::abs(b[i]) + eps) / zb;
    const double m = 0.5 * (p + q);
    js += 0.5 * p * std::log(p / m) + 0.5 * q * std::log(q / m);
  }
  return std::max(0.0, js);
}

double js_divergence(const LimeMap& a, const LimeMap& b) {
  if (!a.importances.same_shape(b.importances))
    raise(errc::shape_mismatch, "js_divergence: LIME map shapes differ");
  return js_divergence(
      std::span<const double>(a.importances.data(), static_cast<size_t>(a.importances.size())),
      std::span<const double>(b.importances.data(), static_cast<size_t>(b.importances.size())));
}

ScatterResult explanation_error_scatter(const std::vector<ScatterEntry>& entries) {
  ScatterResult res;
  std::vector<std::string> dataset_order;
  std::map<std::string, std::vector<size_t>> by_dataset;
  for (const auto& e : entries) {
    if (!(e.mape > 0.0))
      raise(errc::zero_mape, e.dataset_id + "/" + e.cell_id + ": log(MAPE) needs MAPE > 0");
    if (!by_dataset.count(e.dataset_id)) dataset_order.push_back(e.dataset_id);
    by_dataset[e.dataset_id].push_back(res.rows.size());
    res.rows.push_back({e.dataset_id, e.method, e.cell_id, e.js, std::log(e.mape)});
  }
  for (const auto& ds : dataset_order) {
    const auto& idx = by_dataset[ds];
    std::vector<double> xs, ys;
    for (size_t i : idx) {
      xs.push_back(res.rows[i].js);
      ys.push_back(res.rows[i].log_mape);
    }
    if (xs.size() < 2) continue;
    try {
      res.dataset_pearson.emplace_back(ds, pearson_correlation(xs, ys));
    } catch (const Error&) {
      // constant column; correlation undefined for this dataset
    }
  }
  return res;
}

void write_lime_map_csv(const LimeMap& map, const std::filesystem::path& file) {
  const int64_t t = map.importances.dim(1);
  std::vector<std::string> header = {"window_start"};
  for (int64_t j = 0; j < t; ++j) header.push_back("t" + std::to_string(j));
  std::vector<std::vector<std::string>> rows;
  for (int64_t w = 0; w < map.importances.dim(0); ++w) {
    std::vector<std::string> row = {std::to_string(map.window_starts[static_cast<size_t>(w)])};
    for (int64_t j = 0; j < t; ++j) row.push_back(format_double(map.importances.at(w, j)));
    rows.push_back(std::move(row));
  }
  write_csv(file, header, rows);
}

void write_scatter_csv(const ScatterResult& scatter, const std::filesystem::path& file) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : scatter.rows)
    rows.push_back({r.dataset_id, r.method, r.cell_id, format_double(r.js),
                    format_double(r.log_mape)});
  write_csv(file, {"dataset_id", "method", "cell_id", "js_divergence", "log_mape"}, rows);
}

}  // namespace tsfm

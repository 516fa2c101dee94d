#include "tsfm/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsfm/errors.hpp"

namespace tsfm {

const std::array<const char*, kPhysicalFeatureCount> kPhysicalFeatureNames = {
    "charge_time_s",       "discharge_time_s",      "mean_charge_current_a",
    "var_charge_current_a2", "mean_charge_voltage_v", "var_charge_voltage_v2",
    "voltage_kurtosis",    "voltage_skewness",      "mean_discharge_voltage_v",
    "discharge_energy_wh"};

std::array<double, kPhysicalFeatureCount> PhysicalFeatureVector::as_array() const {
  return {charge_time_s,       discharge_time_s,      mean_charge_current_a,
          var_charge_current_a2, mean_charge_voltage_v, var_charge_voltage_v2,
          voltage_kurtosis,    voltage_skewness,      mean_discharge_voltage_v,
          discharge_energy_wh};
}

namespace {

enum class Phase { charge, discharge, rest };

Phase phase_of(const CycleProfile& p, size_t i) {
  if (p.has_labels()) {
    const std::string& s = p.step_label[i];
    if (s == "charge") return Phase::charge;
    if (s == "discharge") return Phase::discharge;
    return Phase::rest;
  }
  if (p.current_a[i] > 0.0) return Phase::charge;
  if (p.current_a[i] < 0.0) return Phase::discharge;
  return Phase::rest;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v, double mu) {
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

// Population skewness and excess kurtosis; raises when the series is
// constant. The equality check matters: the accumulated mean of a constant
// series carries rounding residue, so a variance test alone would compute
// moments of pure noise instead of failing.
void skew_kurt(std::span<const double> v, double& skew, double& ex_kurt) {
  bool all_equal = true;
  for (double x : v)
    if (x != v.front()) {
      all_equal = false;
      break;
    }
  const auto n = static_cast<double>(v.size());
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - mu;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (all_equal || m2 == 0.0)
    raise(errc::constant_series, "zero variance: skewness/kurtosis undefined");
  skew = m3 / std::pow(m2, 1.5);
  ex_kurt = m4 / (m2 * m2) - 3.0;
}

}  // namespace

PhysicalFeatureVector extract_physical_features(const CycleProfile& p) {
  const size_t n = p.samples();
  if (n < 2) raise(errc::degenerate_phase, "profile has fewer than 2 samples");

  std::vector<double> chg_i, chg_v, dis_v;
  double chg_time = 0.0, dis_time = 0.0, dis_energy_ws = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Phase ph = phase_of(p, i);
    if (ph == Phase::charge) {
      chg_i.push_back(p.current_a[i]);
      chg_v.push_back(p.voltage_v[i]);
    } else if (ph == Phase::discharge) {
      dis_v.push_back(p.voltage_v[i]);
    }
    if (i + 1 < n && ph == phase_of(p, i + 1)) {
      const double dt = p.time_s[i + 1] - p.time_s[i];
      if (ph == Phase::charge) chg_time += dt;
      if (ph == Phase::discharge) {
        dis_time += dt;
        const double pw0 = std::abs(p.voltage_v[i] * p.current_a[i]);
        const double pw1 = std::abs(p.voltage_v[i + 1] * p.current_a[i + 1]);
        dis_energy_ws += 0.5 * (pw0 + pw1) * dt;
      }
    }
  }
  if (chg_i.size() < 2) raise(errc::degenerate_phase, "charge phase has fewer than 2 samples");
  if (dis_v.size() < 2) raise(errc::degenerate_phase, "discharge phase has fewer than 2 samples");

  PhysicalFeatureVector f;
  f.charge_time_s = chg_time;
  f.discharge_time_s = dis_time;
  f.mean_charge_current_a = mean_of(chg_i);
  f.var_charge_current_a2 = var_of(chg_i, f.mean_charge_current_a);
  f.mean_charge_voltage_v = mean_of(chg_v);
  f.var_charge_voltage_v2 = var_of(chg_v, f.mean_charge_voltage_v);
  skew_kurt(p.voltage_v, f.voltage_skewness, f.voltage_kurtosis);
  f.mean_discharge_voltage_v = mean_of(dis_v);
  f.discharge_energy_wh = dis_energy_ws / 3600.0;
  return f;
}

const std::array<const char*, kDegradationFeatureCount> kDegradationFeatureNames = {
    "total_fade",          "fade_at_25pct_life",  "fade_at_50pct_life", "fade_at_75pct_life",
    "cycle_fade_mean",     "cycle_fade_median",   "cycle_fade_std",     "cycle_fade_min",
    "cycle_fade_max",      "linear_slope",        "linear_intercept",   "quadratic_curvature",
    "knee_position",       "knee_sharpness",      "capacity_q10",       "capacity_q25",
    "capacity_q50",        "capacity_q75",        "capacity_q90",       "diff_autocorr_lag1",
    "diff_autocorr_lag2",  "diff_autocorr_lag5",  "diff_autocorr_lag10", "diff_autocorr_lag20",
    "diff_spectral_centroid", "diff_spectral_flatness", "sample_entropy", "nonmonotone_ratio",
    "longest_monotone_run_ratio", "coeff_of_variation", "diff_skewness", "diff_excess_kurtosis",
    "arc_chord_ratio",     "area_under_curve",    "first_to_last_ratio"};

const std::array<int, 7> kScaleInvariantDegradationFeatures = {0, 1, 2, 3, 12, 33, 34};

namespace {

double interp_at(const std::vector<double>& y, double pos) {
  const auto lo = static_cast<size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, y.size() - 1);
  const double w = pos - std::floor(pos);
  return y[lo] * (1.0 - w) + y[hi] * w;
}

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  return interp_at(sorted, pos);
}

double autocorr(const std::vector<double>& d, size_t lag) {
  if (lag >= d.size()) return 0.0;
  const double mu = mean_of(d);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < d.size(); ++i) den += (d[i] - mu) * (d[i] - mu);
  if (den == 0.0) return 0.0;
  for (size_t i = 0; i + lag < d.size(); ++i) num += (d[i] - mu) * (d[i + lag] - mu);
  return num / den;
}

// Naive DFT power spectrum of the (short) differenced series, DC excluded.
void spectral_features(const std::vector<double>& d, double& centroid, double& flatness) {
  const size_t n = d.size();
  const size_t m = n / 2;
  centroid = 0.0;
  flatness = 1.0;
  if (m < 1) return;
  std::vector<double> power(m);
  for (size_t k = 1; k <= m; ++k) {
    double re = 0.0, im = 0.0;
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(n);
      re += d[t] * std::cos(ang);
      im += d[t] * std::sin(ang);
    }
    power[k - 1] = re * re + im * im;
  }
  const double eps = 1e-30;
  double total = 0.0, wsum = 0.0, logsum = 0.0;
  for (size_t k = 1; k <= m; ++k) {
    const double p = power[k - 1] + eps;
    const double f = static_cast<double>(k) / static_cast<double>(n);  // in (0, 0.5]
    total += p;
    wsum += f * p;
    logsum += std::log(p);
  }
  centroid = wsum / total;
  flatness = std::exp(logsum / static_cast<double>(m)) / (total / static_cast<double>(m));
}

double sample_entropy(const std::vector<double>& y, int m, double r) {
  const auto n = static_cast<int64_t>(y.size());
  auto count_matches = [&](int len) {
    int64_t cnt = 0;
    for (int64_t i = 0; i + len <= n; ++i) {
      for (int64_t j = i + 1; j + len <= n; ++j) {
        bool match = true;
        for (int k = 0; k < len; ++k) {
          if (std::abs(y[static_cast<size_t>(i + k)] - y[static_cast<size_t>(j + k)]) > r) {
            match = false;
            break;
          }
        }
        if (match) ++cnt;
      }
    }
    return cnt;
  };
  const double b = static_cast<double>(count_matches(m));
  const double a = static_cast<double>(count_matches(m + 1));
  if (b == 0.0) return 0.0;
  return -std::log((a + 1e-12) / (b + 1e-12));
}

void fit_poly2(const std::vector<double>& u, const std::vector<double>& y, double& a0, double& a1,
               double& a2) {
  // Normal equations for y ~ a0 + a1 u + a2 u^2, solved by 3x3 elimination.
  double s[5] = {0, 0, 0, 0, 0};
  double t[3] = {0, 0, 0};
  for (size_t i = 0; i < u.size(); ++i) {
    double p = 1.0;
    for (int k = 0; k < 5; ++k) {
      s[k] += p;
      if (k < 3) t[k] += p * y[i];
      p *= u[i];
    }
  }
  double A[3][4] = {{s[0], s[1], s[2], t[0]}, {s[1], s[2], s[3], t[1]}, {s[2], s[3], s[4], t[2]}};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int rr = col + 1; rr < 3; ++rr)
      if (std::abs(A[rr][col]) > std::abs(A[piv][col])) piv = rr;
    std::swap(A[col], A[piv]);
    for (int rr = 0; rr < 3; ++rr) {
      if (rr == col || A[col][col] == 0.0) continue;
      const double f = A[rr][col] / A[col][col];
      for (int cc = col; cc < 4; ++cc) A[rr][cc] -= f * A[col][cc];
    }
  }
  a0 = A[0][0] != 0.0 ? A[0][3] / A[0][0] : 0.0;
  a1 = A[1][1] != 0.0 ? A[1][3] / A[1][1] : 0.0;
  a2 = A[2][2] != 0.0 ? A[2][3] / A[2][2] : 0.0;
}

}  // namespace

DegradationFeatureVector extract_degradation_features(const CapacityTrajectory& traj) {
  if (!traj.normalized)
    raise(errc::invalid_config, "degradation features require a normalized trajectory");
  const auto& y = traj.capacity_ah;
  const size_t n = y.size();
  if (n < 20) raise(errc::too_short, traj.cell.key() + ": need >= 20 cycles, have " +
                                         std::to_string(n));

  const double span = static_cast<double>(n - 1);
  std::vector<double> u(n);
  for (size_t i = 0; i < n; ++i) u[i] = static_cast<double>(i) / span;
  std::vector<double> d(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) d[i] = y[i + 1] - y[i];

  DegradationFeatureVector f{};
  f[0] = y.front() - y.back();
  f[1] = y.front() - interp_at(y, 0.25 * span);
  f[2] = y.front() - interp_at(y, 0.50 * span);
  f[3] = y.front() - interp_at(y, 0.75 * span);

  std::vector<double> fade(d.size());
  for (size_t i = 0; i < d.size(); ++i) fade[i] = -d[i];
  f[4] = mean_of(fade);
  {
    std::vector<double> sorted = fade;
    std::sort(sorted.begin(), sorted.end());
    f[5] = quantile(sorted, 0.5);
    f[7] = sorted.front();
    f[8] = sorted.back();
  }
  f[6] = std::sqrt(var_of(fade, f[4]));

  {
    // Linear and quadratic fits against normalized life position.
    double sy = 0.0, su = 0.0, suu = 0.0, suy = 0.0;
    for (size_t i = 0; i < n; ++i) {
      sy += y[i];
      su += u[i];
      suu += u[i] * u[i];
      suy += u[i] * y[i];
    }
    const double nn = static_cast<double>(n);
    const double den = nn * suu - su * su;
    f[9] = den != 0.0 ? (nn * suy - su * sy) / den : 0.0;
    f[10] = (sy - f[9] * su) / nn;
    double a0, a1, a2;
    fit_poly2(u, y, a0, a1, a2);
    f[11] = a2;
  }

  {
    // Second differences scaled to the normalized axis.
    double best = -1.0;
    size_t best_i = 1;
    for (size_t i = 1; i + 1 < n; ++i) {
      const double s2 = std::abs(y[i + 1] - 2.0 * y[i] + y[i - 1]) * span * span;
      if (s2 > best) {
        best = s2;
        best_i = i;
      }
    }
    f[12] = u[best_i];
    f[13] = best;
  }

  {
    std::vector<double> sorted = y;
    std::sort(sorted.begin(), sorted.end());
    f[14] = quantile(sorted, 0.10);
    f[15] = quantile(sorted, 0.25);
    f[16] = quantile(sorted, 0.50);
    f[17] = quantile(sorted, 0.75);
    f[18] = quantile(sorted, 0.90);
  }

  f[19] = autocorr(d, 1);
  f[20] = autocorr(d, 2);
  f[21] = autocorr(d, 5);
  f[22] = autocorr(d, 10);
  f[23] = autocorr(d, 20);
  spectral_features(d, f[24], f[25]);

  {
    const double mu = mean_of(y);
    const double sd = std::sqrt(var_of(y, mu));
    f[26] = sample_entropy(y, 2, 0.2 * sd);
    f[29] = mu != 0.0 ? sd / mu : 0.0;
  }

  {
    size_t up = 0, run = 0, best_run = 0;
    for (double di : d) {
      if (di > 0.0) {
        ++up;
        run = 0;
      } else {
        ++run;
        best_run = std::max(best_run, run);
      }
    }
    f[27] = static_cast<double>(up) / static_cast<double>(d.size());
    f[28] = static_cast<double>(best_run) / static_cast<double>(d.size());
  }

  {
    const double mu = mean_of(d);
    const double m2 = var_of(d, mu);
    if (m2 == 0.0) {
      f[30] = 0.0;
      f[31] = 0.0;
    } else {
      double m3 = 0.0, m4 = 0.0;
      for (double di : d) {
        const double dd = di - mu;
        m3 += dd * dd * dd;
        m4 += dd * dd * dd * dd;
      }
      m3 /= static_cast<double>(d.size());
      m4 /= static_cast<double>(d.size());
      f[30] = m3 / std::pow(m2, 1.5);
      f[31] = m4 / (m2 * m2) - 3.0;
    }
  }

  {
    const double du = 1.0 / span;
    double arc = 0.0;
    for (double di : d) arc += std::sqrt(du * du + di * di);
    const double dy = y.back() - y.front();
    f[32] = arc / std::sqrt(1.0 + dy * dy);
    double area = 0.0;
    for (size_t i = 0; i + 1 < n; ++i) area += 0.5 * (y[i] + y[i + 1]) * du;
    f[33] = area;
    f[34] = y.back() != 0.0 ? y.front() / y.back() : 0.0;
  }
  return f;
}

double mutual_information(std::span<const double> values, std::span<const int> labels,
                          int n_bins) {
  if (values.size() != labels.size())
    raise(errc::length_mismatch, "mutual_information: values vs labels");
  const size_t n = values.size();
  if (n == 0) raise(errc::length_mismatch, "mutual_information: empty input");

  // Equal-frequency binning through ranks; ties broken by position so the
  // estimate is deterministic.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<int> bin(n);
  for (size_t rank = 0; rank < n; ++rank)
    bin[order[rank]] = static_cast<int>(std::min<size_t>(
        static_cast<size_t>(n_bins) - 1, rank * static_cast<size_t>(n_bins) / n));

  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const size_t k = classes.size();

  std::vector<double> joint(static_cast<size_t>(n_bins) * k, 0.0);
  std::vector<double> pb(static_cast<size_t>(n_bins), 0.0), pl(k, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    const auto li = static_cast<size_t>(
        std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
    joint[static_cast<size_t>(bin[i]) * k + li] += inv;
    pb[static_cast<size_t>(bin[i])] += inv;
    pl[li] += inv;
  }
  double mi = 0.0;
  for (size_t b = 0; b < static_cast<size_t>(n_bins); ++b)
    for (size_t l = 0; l < k; ++l) {
      const double p = joint[b * k + l];
      if (p > 0.0) mi += p * std::log(p / (pb[b] * pl[l]));
    }
  return std::max(mi, 0.0);
}

double anova_eta_squared(std::span<const double> values, std::span<const int> labels) {
  if (values.size() != labels.size())
    raise(errc::length_mismatch, "anova_eta_squared: values vs labels");
  const size_t n = values.size();
  if (n == 0) raise(errc::length_mismatch, "anova_eta_squared: empty input");
  const double grand = std::accumulate(values.begin(), values.end(), 0.0) /
                       static_cast<double>(n);
  double ss_total = 0.0;
  for (double v : values) ss_total += (v - grand) * (v - grand);
  if (ss_total == 0.0) raise(errc::zero_total_variance, "anova_eta_squared");

  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  double ss_between = 0.0;
  for (int c : classes) {
    double sum = 0.0;
    size_t cnt = 0;
    for (size_t i = 0; i < n; ++i)
      if (labels[i] == c) {
        sum += values[i];
        ++cnt;
      }
    const double mu = sum / static_cast<double>(cnt);
    ss_between += static_cast<double>(cnt) * (mu - grand) * (mu - grand);
  }
  return ss_between / ss_total;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) raise(errc::length_mismatch, "pearson_correlation");
  const size_t n = x.size();
  if (n < 2) raise(errc::length_mismatch, "pearson_correlation: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) raise(errc::constant_input, "pearson_correlation");
  return sxy / std::sqrt(sxx * syy);
}

Standardization standardize_fit(const Tensor& matrix) {
  if (matrix.rank() != 2) raise(errc::shape_mismatch, "standardize expects [N,C]");
  const int64_t n = matrix.dim(0), c = matrix.dim(1);
  Standardization s;
  s.mean.resize(static_cast<size_t>(c));
  s.stddev.resize(static_cast<size_t>(c));
  for (int64_t j = 0; j < c; ++j) {
    double mu = 0.0;
    for (int64_t i = 0; i < n; ++i) mu += matrix.at(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) var += (matrix.at(i, j) - mu) * (matrix.at(i, j) - mu);
    var /= static_cast<double>(n);
    if (var == 0.0)
      raise(errc::constant_column, "standardize: column " + std::to_string(j) + " is constant");
    s.mean[static_cast<size_t>(j)] = mu;
    s.stddev[static_cast<size_t>(j)] = std::sqrt(var);
  }
  return s;
}

Tensor apply_standardization(const Tensor& matrix, const Standardization& s) {
  if (matrix.rank() != 2 || matrix.dim(1) != static_cast<int64_t>(s.mean.size()))
    raise(errc::shape_mismatch, "apply_standardization: column count mismatch");
  Tensor out = matrix;
  const int64_t n = matrix.dim(0), c = matrix.dim(1);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j)
      out.at(i, j) = (matrix.at(i, j) - s.mean[static_cast<size_t>(j)]) /
                     s.stddev[static_cast<size_t>(j)];
  return out;
}

}  // namespace tsfm

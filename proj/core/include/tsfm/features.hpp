#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tsfm/corpus.hpp"
#include "tsfm/tensor.hpp"

namespace tsfm {

inline constexpr int kPhysicalFeatureCount = 10;
extern const std::array<const char*, kPhysicalFeatureCount> kPhysicalFeatureNames;

// Ten per-cycle descriptors of the charge/discharge process. Phase membership
// comes from step_label when present, else from the sign of the current;
// zero-current samples count as rest and join neither phase.
struct PhysicalFeatureVector {
  double charge_time_s = 0;
  double discharge_time_s = 0;
  double mean_charge_current_a = 0;
  double var_charge_current_a2 = 0;
  double mean_charge_voltage_v = 0;
  double var_charge_voltage_v2 = 0;
  double voltage_kurtosis = 0;  // population excess kurtosis of the full series
  double voltage_skewness = 0;  // population skewness of the full series
  double mean_discharge_voltage_v = 0;
  double discharge_energy_wh = 0;

  std::array<double, kPhysicalFeatureCount> as_array() const;
};

PhysicalFeatureVector extract_physical_features(const CycleProfile& profile);

inline constexpr int kDegradationFeatureCount = 35;
extern const std::array<const char*, kDegradationFeatureCount> kDegradationFeatureNames;
using DegradationFeatureVector = std::array<double, kDegradationFeatureCount>;

// Indices of the descriptors that are exactly invariant under shape-preserving
// resampling of the cycle axis (midpoint refinement).
extern const std::array<int, 7> kScaleInvariantDegradationFeatures;

// Requires a normalized trajectory of length >= 20.
DegradationFeatureVector extract_degradation_features(const CapacityTrajectory& traj);

// Plug-in MI estimate in nats: values are binned into `n_bins` equal-frequency
// bins (rank-based, ties broken by position) and the joint (bin, label)
// histogram is evaluated directly.
double mutual_information(std::span<const double> values, std::span<const int> labels,
                          int n_bins = 16);

// eta^2 = SS_between / SS_total.
double anova_eta_squared(std::span<const double> values, std::span<const int> labels);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

// Column-wise z-score of an [N, C] matrix; the returned parameters are reused
// on held-out data via apply_standardization.
Standardization standardize_fit(const Tensor& matrix);
Tensor apply_standardization(const Tensor& matrix, const Standardization& s);

struct FeatureStats {
  std::string name;
  double mean = 0;
  double stddev = 0;
  // Unset entries mean "not computable for this feature/corpus" (e.g. a
  // single chemistry class).
  std::optional<double> mutual_information_nats;
  std::optional<double> eta_squared;
  std::optional<double> pearson_r_vs_capacity;
};

}  // namespace tsfm

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tsfm {

struct CellRecord {
  std::string cell_id;
  std::string dataset_id;
  std::string chemistry;  // "LFP", "LCO", "NMC", "NA_ION", "ZN_ION", "MIXED", ...
  std::optional<double> nominal_capacity_ah;
  std::optional<double> temperature_c;

  std::string key() const { return dataset_id + "/" + cell_id; }
};

struct CapacityTrajectory {
  CellRecord cell;
  std::vector<int64_t> cycles;      // strictly increasing
  std::vector<double> capacity_ah;  // > 0, same length as cycles
  bool normalized = false;

  size_t length() const { return cycles.size(); }
};

struct CycleProfile {
  std::string cell_id;
  int64_t cycle_index = 0;
  std::vector<double> time_s;     // nondecreasing
  std::vector<double> voltage_v;
  std::vector<double> current_a;  // signed, positive = charge
  std::vector<std::string> step_label;  // empty when the column is absent

  size_t samples() const { return time_s.size(); }
  bool has_labels() const { return !step_label.empty(); }
};

struct WindowSample {
  std::string cell_id;
  int64_t start_cycle = 0;            // cycle index of the first lookback point
  std::vector<double> lookback;       // length T
  std::vector<double> horizon;        // length H
  std::vector<std::vector<double>> exo_lookback;  // optional, T_x rows of C features
};

struct SplitSpec {
  std::set<std::string> holdout_dataset_ids;
  double train_fraction_within_seen = 0.75;
  uint64_t seed = 0;
};

enum class FadeRegime { SMOOTH_EXP, DOUBLE_EXP, KNEE, NOISY_PLATEAU };

const char* fade_regime_name(FadeRegime r);
std::optional<FadeRegime> fade_regime_from_name(const std::string& name);

struct SyntheticConfig {
  int n_cells = 8;
  int cycles_per_cell = 300;
  FadeRegime regime = FadeRegime::SMOOTH_EXP;
  double q0 = 1.1;                 // Ah
  double a = 1.0;                  // mixing weight in [0,1]
  double b = 0.0015;               // fast fade rate
  double c = 0.0002;               // slow fade rate
  double noise_sigma = 0.0;        // fraction of q0
  uint64_t seed = 0;
  bool emit_profiles = true;
  std::string dataset_id;          // defaults to "SYN_<regime>"

  void validate() const;
};

// A corpus keeps per-cell profiles aligned with the trajectory list:
// profiles[i] belongs to trajectories[i] (possibly empty).
struct Corpus {
  std::vector<CapacityTrajectory> trajectories;
  std::vector<std::vector<CycleProfile>> profiles;

  size_t n_cells() const { return trajectories.size(); }
  size_t total_points() const;
  std::set<std::string> dataset_ids() const;
};

struct SplitResult {
  Corpus train;
  Corpus seen_test;
  Corpus unseen_test;
};

Corpus ingest_corpus(const std::filesystem::path& manifest_path);
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

CapacityTrajectory normalize_capacity(const CapacityTrajectory& traj);

std::vector<WindowSample> make_windows(const CapacityTrajectory& traj, int lookback, int horizon,
                                       int stride);

SplitResult split_seen_unseen(const Corpus& corpus, const SplitSpec& spec);

Corpus generate_synthetic(const SyntheticConfig& cfg);

}  // namespace tsfm

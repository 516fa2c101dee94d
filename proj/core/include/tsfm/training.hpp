#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "tsfm/corpus.hpp"
#include "tsfm/features.hpp"
#include "tsfm/model.hpp"

namespace tsfm {

struct TrainConfig {
  double alpha = 0.1;  // physics contrastive weight
  double beta = 1.0;   // forecasting weight
  double lr = 1e-3;
  int epochs = 50;
  int batch_size = 32;
  int seg_len = 24;           // L_seg
  int positive_offset = 24;   // cycles between anchor and positive starts
  int negative_min_gap = 120; // cycles; must exceed positive_offset
  double tau = 0.1;
  double sigma = 0.01;
  uint64_t seed = 0;
  bool use_lora = false;
  LoraConfig lora;
  int lookback = 96;
  int horizon = 24;
  int stride = 8;
  int triplets_per_step = 4;
  int checkpoint_every = 1;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct EpochStats {
  double l_total = 0, l_forecast = 0, l_physics = 0;
  double val_mape = std::numeric_limits<double>::quiet_NaN();
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0;
  std::filesystem::path final_checkpoint;
};

// Per-cell matrix [T_x, C] of raw physical features, one row per profiled
// cycle, in cycle order.
struct CellFeatureMatrix {
  std::string cell_key;
  Tensor features;
};

std::vector<CellFeatureMatrix> physical_feature_matrices(const Corpus& corpus);
Standardization fit_feature_standardization(const std::vector<CellFeatureMatrix>& cells);

// Draws `count` triplets from one cell's (standardized) feature sequence.
// Anchors are uniform over starts that admit a positive at +positive_offset
// and at least one negative; negatives are uniform over starts separated from
// the anchor window by at least negative_min_gap cycles.
std::vector<Triplet> sample_triplets(const Tensor& features, const TrainConfig& cfg, Rng& rng,
                                     int count);

struct JointLossParts {
  Var total;
  double l_forecast = 0;  // unweighted branch means, for reporting
  double l_physics = 0;
};

// alpha * mean contrastive + beta * mean forecasting; an empty branch
// contributes zero, both empty is an error.
JointLossParts joint_loss(ModelGraph& graph, const std::vector<std::span<const double>>& windows,
                          const std::vector<const Triplet*>& triplets, const TrainConfig& cfg,
                          Rng* noise_rng);

// Runs the seed-deterministic joint training loop, checkpointing into
// run_dir (config.json, report.csv, ckpt_epoch_{k}.bin, log.txt).
TrainReport train(const Corpus& train_corpus, const Corpus* val_corpus, TimerModel& model,
                  const TrainConfig& cfg, const std::filesystem::path& run_dir);

void save_model_checkpoint(const TimerModel& model, const std::filesystem::path& path);
TimerModel load_model_checkpoint(const std::filesystem::path& path);

}  // namespace tsfm

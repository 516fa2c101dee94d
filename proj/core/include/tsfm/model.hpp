#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsfm/autograd.hpp"
#include "tsfm/rng.hpp"
#include "tsfm/tensor.hpp"

namespace tsfm {

struct TimerConfig {
  int token_len = 24;   // S: cycles per temporal token
  int d_model = 64;     // D
  int n_blocks = 2;     // decoder depth
  int n_heads = 4;
  int ffn_mult = 4;
  double dropout_p = 0.0;
  int max_tokens = 32;  // N_max; also bounds physics-segment positions
  int phi_hidden = 64;  // physics encoder hidden width
  int n_features = 10;  // C: physical descriptors per cycle

  void validate() const;
  std::string to_json() const;
  static TimerConfig from_json(const std::string& text);
};

struct LoraConfig {
  int rank = 8;
  double alpha = 16.0;
  bool target_query = true;
  bool target_value = true;
};

// Anchor/positive/negative physical-feature segments from one cell,
// each [L_seg, C].
struct Triplet {
  Tensor anchor, positive, negative;
  int64_t anchor_start = 0, positive_start = 0, negative_start = 0;
};

struct TokenizedSeries {
  Tensor tokens;  // [N, S]
  int pad = 0;    // left-edge padding copied from the first value
};

// Splits y into non-overlapping length-S tokens, left-padding with the edge
// value when the length is not a multiple of S.
TokenizedSeries tokenize(std::span<const double> y, int token_len);

// Interleaved sinusoidal encoding; raises position_out_of_range for
// pos outside [0, max_tokens).
Tensor temporal_encoding(int64_t pos, int d_model, int64_t max_tokens);
Tensor temporal_encoding_table(int64_t n, int d_model);

// z' = z + sigma * eps with seeded standard-normal eps.
Tensor perturb_embeddings(const Tensor& z, double sigma, Rng& rng);

// Black-box forecaster surface shared by evaluation and interpretation:
// maps a lookback onto `horizon` future values.
using Forecaster = std::function<std::vector<double>(std::span<const double>, int)>;

class TimerModel {
 public:
  TimerModel(TimerConfig cfg, uint64_t seed);

  const TimerConfig& config() const { return cfg_; }
  const Tensor& temporal_table() const { return te_; }

  std::vector<Parameter*> parameters() const;
  std::vector<Parameter*> trainable_parameters() const;
  Parameter* param(const std::string& name) const;  // nullptr if absent
  int64_t trainable_parameter_count() const;

  bool lora_applied() const { return lora_.has_value(); }
  const LoraConfig& lora_config() const;
  // Freezes base weights and adds rank-r adapters on the attention query and
  // value projections; only adapters and the physics encoder stay trainable.
  void apply_lora(const LoraConfig& lc);
  // Folds W + (alpha/r) B A into the base weights and removes the adapters.
  void merge_lora();

  // Inference helpers (no gradients).
  Tensor forward_tokens(const Tensor& tokens) const;  // [N,S] -> [N,S]
  std::vector<double> autoregressive_forecast(std::span<const double> history, int steps) const;
  double forecasting_loss_value(std::span<const double> y) const;
  // (s_ap, s_an) for a standardized triplet, without perturbation.
  std::pair<double, double> triplet_similarities(const Triplet& t) const;

  std::string config_blob() const;
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  static TimerModel from_checkpoint(const std::string& config_blob,
                                    const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  friend class ModelGraph;
  Parameter* add_param(const std::string& name, Tensor value, bool trainable = true);
  void rebuild_index();

  TimerConfig cfg_;
  std::optional<LoraConfig> lora_;
  Tensor te_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<std::pair<std::string, size_t>> index_;
};

// Binds a model's parameters into one tape and exposes the forward passes.
// for_training controls which leaves require gradients and enables dropout.
class ModelGraph {
 public:
  ModelGraph(Tape& tape, const TimerModel& model, bool for_training = false,
             Rng* dropout_rng = nullptr);

  // h0 = W_e s + TE; causal pre-norm blocks; final norm; W_d head.
  Var decode_tokens(const Tensor& tokens);            // [N,S] -> [N,S]
  Var decode_embeddings(Var h0);                      // [N,D] -> [N,D]
  // (1/(N S)) * sum_{i=2..N} ||s_i - s_hat_i||^2; requires N >= 2.
  Var forecasting_loss(const TokenizedSeries& ts);
  Var forecasting_loss_series(std::span<const double> y);
  // Physics view: Phi(segment) + TE through the same decoder, mean-pooled.
  Var physics_embedding(const Tensor& segment, double sigma = 0.0, Rng* noise_rng = nullptr);
  // -log softmax of s_ap against s_an at temperature tau.
  Var contrastive_loss(const Triplet& t, double tau, double sigma = 0.0,
                       Rng* noise_rng = nullptr);

  Tape& tape() { return tape_; }
  Var var_of(const Parameter* p) const;

 private:
  Var linear(Var x, const std::string& w, const std::string& b);
  Var lora_linear(Var x, const std::string& w, const std::string& b);
  Var dropout(Var x);
  Var block(Var h, int l);

  Tape& tape_;
  const TimerModel& model_;
  bool training_;
  Rng* dropout_rng_;
  std::vector<std::pair<const Parameter*, Var>> bound_;
};

Forecaster make_forecaster(const TimerModel& model);
Forecaster persistence_forecaster();
// Linear extrapolation of the tail trend (least squares over the last
// `tail` points).
Forecaster drift_forecaster(int tail = 16);

}  // namespace tsfm

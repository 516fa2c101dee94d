#pragma once

#include <stdexcept>
#include <string>

namespace tsfm {

// Every failure the library can signal, by name. The CLI maps these onto
// exit codes via error_class below.
enum class errc {
  // corpus
  missing_file,
  schema_violation,
  non_monotone_cycles,
  already_normalized,
  empty_trajectory,
  unknown_dataset_id,
  invalid_config,
  // features
  degenerate_phase,
  constant_series,
  too_short,
  length_mismatch,
  zero_total_variance,
  constant_input,
  constant_column,
  // numerics
  shape_mismatch,
  non_finite_value,
  zero_norm,
  disconnected_graph,
  // model
  empty_input,
  position_out_of_range,
  too_many_tokens,
  single_token,
  empty_history,
  already_applied,
  not_applied,
  non_positive_tau,
  // training
  cell_too_short,
  both_branches_empty,
  no_trainable_data,
  version_mismatch,
  corrupt_file,
  // evaluation
  zero_target,
  missing_entry,
  no_windows,
  // interpretation
  degenerate_masks,
  non_finite_forecast,
  zero_mape,
  // cli
  bad_flags,
  upstream_artifact_missing,
};

// Coarse classification used for process exit codes:
//   usage -> 2, data -> 3, numeric -> 4.
enum class error_class { usage, data, numeric };

const char* errc_name(errc code);
error_class errc_class(errc code);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  errc code() const noexcept { return code_; }
  const char* code_name() const noexcept { return errc_name(code_); }
  error_class classify() const noexcept { return errc_class(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace tsfm

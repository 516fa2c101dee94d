#include "tsfm/errors.hpp"

namespace tsfm {

const char* errc_name(errc code) {
  switch (code) {
    case errc::missing_file: return "MissingFile";
    case errc::schema_violation: return "SchemaViolation";
    case errc::non_monotone_cycles: return "NonMonotoneCycles";
    case errc::already_normalized: return "AlreadyNormalized";
    case errc::empty_trajectory: return "EmptyTrajectory";
    case errc::unknown_dataset_id: return "UnknownDatasetId";
    case errc::invalid_config: return "InvalidConfig";
    case errc::degenerate_phase: return "DegeneratePhase";
    case errc::constant_series: return "ConstantSeries";
    case errc::too_short: return "TooShort";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::zero_total_variance: return "ZeroTotalVariance";
    case errc::constant_input: return "ConstantInput";
    case errc::constant_column: return "ConstantColumn";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::zero_norm: return "ZeroNorm";
    case errc::disconnected_graph: return "DisconnectedGraph";
    case errc::empty_input: return "EmptyInput";
    case errc::position_out_of_range: return "PositionOutOfRange";
    case errc::too_many_tokens: return "TooManyTokens";
    case errc::single_token: return "SingleToken";
    case errc::empty_history: return "EmptyHistory";
    case errc::already_applied: return "AlreadyApplied";
    case errc::not_applied: return "NotApplied";
    case errc::non_positive_tau: return "NonPositiveTau";
    case errc::cell_too_short: return "CellTooShort";
    case errc::both_branches_empty: return "BothBranchesEmpty";
    case errc::no_trainable_data: return "NoTrainableData";
    case errc::version_mismatch: return "VersionMismatch";
    case errc::corrupt_file: return "CorruptFile";
    case errc::zero_target: return "ZeroTarget";
    case errc::missing_entry: return "MissingEntry";
    case errc::no_windows: return "NoWindows";
    case errc::degenerate_masks: return "DegenerateMasks";
    case errc::non_finite_forecast: return "NonFiniteForecast";
    case errc::zero_mape: return "ZeroMape";
    case errc::bad_flags: return "BadFlags";
    case errc::upstream_artifact_missing: return "UpstreamArtifactMissing";
  }
  return "UnknownError";
}

error_class errc_class(errc code) {
  switch (code) {
    case errc::bad_flags:
    case errc::invalid_config:
      return error_class::usage;
    case errc::shape_mismatch:
    case errc::non_finite_value:
    case errc::zero_norm:
    case errc::disconnected_graph:
    case errc::non_positive_tau:
    case errc::degenerate_masks:
    case errc::non_finite_forecast:
    case errc::zero_total_variance:
      return error_class::numeric;
    default:
      return error_class::data;
  }
}

}  // namespace tsfm

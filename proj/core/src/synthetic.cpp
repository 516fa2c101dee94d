#include <algorithm>
#include <cmath>
#include <string>

#include "tsfm/corpus.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/rng.hpp"

namespace tsfm {

const char* fade_regime_name(FadeRegime r) {
  switch (r) {
    case FadeRegime::SMOOTH_EXP: return "SMOOTH_EXP";
    case FadeRegime::DOUBLE_EXP: return "DOUBLE_EXP";
    case FadeRegime::KNEE: return "KNEE";
    case FadeRegime::NOISY_PLATEAU: return "NOISY_PLATEAU";
  }
  return "SMOOTH_EXP";
}

std::optional<FadeRegime> fade_regime_from_name(const std::string& name) {
  if (name == "SMOOTH_EXP") return FadeRegime::SMOOTH_EXP;
  if (name == "DOUBLE_EXP") return FadeRegime::DOUBLE_EXP;
  if (name == "KNEE") return FadeRegime::KNEE;
  if (name == "NOISY_PLATEAU") return FadeRegime::NOISY_PLATEAU;
  return std::nullopt;
}

void SyntheticConfig::validate() const {
  if (n_cells < 1) raise(errc::invalid_config, "n_cells must be >= 1");
  if (cycles_per_cell < 1) raise(errc::invalid_config, "cycles_per_cell must be >= 1");
  if (!(q0 > 0.0)) raise(errc::invalid_config, "q0 must be > 0");
  if (a < 0.0 || a > 1.0) raise(errc::invalid_config, "a must be in [0,1]");
  if (b < 0.0 || c < 0.0) raise(errc::invalid_config, "b and c must be >= 0");
  if (noise_sigma < 0.0) raise(errc::invalid_config, "noise_sigma must be >= 0");
}

namespace {

// Templated CC-CV charge plus CC discharge. Charge time and the charge
// voltage statistics rise monotonically with capacity loss, discharge time
// and energy fall with it, so per-cycle physical features track degradation
// stage by construction.
CycleProfile make_profile(const std::string& cell_id, int64_t cycle_index, double cap_fraction) {
  const double fade = 1.0 - std::clamp(cap_fraction, 0.05, 1.0);
  CycleProfile p;
  p.cell_id = cell_id;
  p.cycle_index = cycle_index;

  const double i_charge = 0.55;
  const double t_cc = 2880.0 * (1.0 - 0.3 * fade);
  const double t_cv = 540.0 * (1.0 + 3.0 * fade);
  const int n_cc = 24, n_cv = 12, n_rest = 2, n_dis = 24;

  double t = 0.0;
  for (int i = 0; i < n_cc; ++i) {
    const double s = static_cast<double>(i) / (n_cc - 1);
    p.time_s.push_back(t + s * t_cc);
    p.voltage_v.push_back(std::min(4.2, 3.0 + 1.2 * std::pow(s, 0.8) + 0.15 * fade));
    p.current_a.push_back(i_charge);
    p.step_label.push_back("charge");
  }
  t += t_cc;
  for (int i = 0; i < n_cv; ++i) {
    const double s = static_cast<double>(i + 1) / n_cv;
    p.time_s.push_back(t + s * t_cv);
    p.voltage_v.push_back(4.2);
    p.current_a.push_back(i_charge * std::exp(-3.0 * s));
    p.step_label.push_back("charge");
  }
  t += t_cv;
  for (int i = 0; i < n_rest; ++i) {
    p.time_s.push_back(t + 60.0 * (i + 1));
    p.voltage_v.push_back(4.15);
    p.current_a.push_back(0.0);
    p.step_label.push_back("rest");
  }
  t += 120.0;
  const double t_dis = 3240.0 * std::clamp(cap_fraction, 0.05, 1.2);
  for (int i = 0; i < n_dis; ++i) {
    const double s = static_cast<double>(i) / (n_dis - 1);
    p.time_s.push_back(t + s * t_dis);
    p.voltage_v.push_back(4.1 - 0.2 * fade - 1.1 * std::pow(s, 1.5));
    p.current_a.push_back(-1.0);
    p.step_label.push_back("discharge");
  }
  return p;
}

}  // namespace

Corpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::string dataset_id =
      cfg.dataset_id.empty() ? std::string("SYN_") + fade_regime_name(cfg.regime) : cfg.dataset_id;

  Corpus corpus;
  for (int ci = 0; ci < cfg.n_cells; ++ci) {
    Rng rng(seed_for(cfg.seed, "synthetic-cell", static_cast<uint64_t>(ci)));
    // Mild per-cell rate jitter so the corpus is not a single repeated curve.
    const double b_i = cfg.b * (0.9 + 0.2 * rng.uniform());
    const double c_i = cfg.c * (0.9 + 0.2 * rng.uniform());
    const double knee_frac = 0.5 + 0.25 * rng.uniform();
    const int64_t knee_cycle =
        static_cast<int64_t>(knee_frac * static_cast<double>(cfg.cycles_per_cell));
    const double knee_drop = (0.10 + 0.10 * rng.uniform()) * cfg.q0;
    const double knee_rate =
        cfg.cycles_per_cell > knee_cycle
            ? knee_drop / static_cast<double>(cfg.cycles_per_cell - knee_cycle)
            : 0.0;

    CapacityTrajectory traj;
    traj.cell.cell_id = "cell_" + std::to_string(ci);
    traj.cell.dataset_id = dataset_id;
    traj.cell.chemistry = "SYN";
    traj.cell.nominal_capacity_ah = cfg.q0;

    std::vector<CycleProfile> profiles;
    for (int64_t t = 0; t < cfg.cycles_per_cell; ++t) {
      double q;
      const auto td = static_cast<double>(t);
      switch (cfg.regime) {
        case FadeRegime::NOISY_PLATEAU:
          q = cfg.q0;
          break;
        case FadeRegime::KNEE:
          q = cfg.q0 * (cfg.a * std::exp(-b_i * td) + (1.0 - cfg.a) * std::exp(-c_i * td));
          if (t > knee_cycle) q -= knee_rate * static_cast<double>(t - knee_cycle);
          break;
        default:
          q = cfg.q0 * (cfg.a * std::exp(-b_i * td) + (1.0 - cfg.a) * std::exp(-c_i * td));
          break;
      }
      if (cfg.noise_sigma > 0.0) q += cfg.noise_sigma * cfg.q0 * rng.normal();
      q = std::max(q, 1e-3 * cfg.q0);
      traj.cycles.push_back(t + 1);
      traj.capacity_ah.push_back(q);
      if (cfg.emit_profiles)
        profiles.push_back(make_profile(traj.cell.cell_id, t + 1, q / cfg.q0));
    }
    corpus.trajectories.push_back(std::move(traj));
    corpus.profiles.push_back(std::move(profiles));
  }
  return corpus;
}

}  // namespace tsfm

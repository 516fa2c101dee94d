#include "tsfm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "tsfm/adam.hpp"
#include "tsfm/checkpoint.hpp"
#include "tsfm/csv.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/evaluation.hpp"

namespace tsfm {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) raise(errc::invalid_config, "loss weights must be >= 0");
  if (alpha == 0.0 && beta == 0.0) raise(errc::invalid_config, "alpha and beta cannot both be 0");
  if (lr < 0.0) raise(errc::invalid_config, "lr must be >= 0");
  if (epochs < 1) raise(errc::invalid_config, "epochs must be >= 1");
  if (batch_size < 1) raise(errc::invalid_config, "batch_size must be >= 1");
  if (seg_len < 1) raise(errc::invalid_config, "seg_len must be >= 1");
  if (positive_offset < 1) raise(errc::invalid_config, "positive_offset must be >= 1");
  if (negative_min_gap <= positive_offset)
    raise(errc::invalid_config, "negative_min_gap must exceed positive_offset");
  if (!(tau > 0.0)) raise(errc::non_positive_tau, "tau must be > 0");
  if (sigma < 0.0) raise(errc::invalid_config, "sigma must be >= 0");
  if (lookback < 1 || horizon < 1 || stride < 1)
    raise(errc::invalid_config, "lookback, horizon, stride must be >= 1");
  if (triplets_per_step < 0) raise(errc::invalid_config, "triplets_per_step must be >= 0");
  if (checkpoint_every < 1) raise(errc::invalid_config, "checkpoint_every must be >= 1");
}

std::string TrainConfig::to_json() const {
  json j;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seg_len"] = seg_len;
  j["positive_offset"] = positive_offset;
  j["negative_min_gap"] = negative_min_gap;
  j["tau"] = tau;
  j["sigma"] = sigma;
  j["seed"] = seed;
  j["use_lora"] = use_lora;
  j["lora"] = {{"rank", lora.rank},
               {"alpha", lora.alpha},
               {"target_query", lora.target_query},
               {"target_value", lora.target_value}};
  j["lookback"] = lookback;
  j["horizon"] = horizon;
  j["stride"] = stride;
  j["triplets_per_step"] = triplets_per_step;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(errc::invalid_config, std::string("train config: ") + e.what());
  }
  TrainConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seg_len = j.value("seg_len", c.seg_len);
  c.positive_offset = j.value("positive_offset", c.positive_offset);
  c.negative_min_gap = j.value("negative_min_gap", c.negative_min_gap);
  c.tau = j.value("tau", c.tau);
  c.sigma = j.value("sigma", c.sigma);
  c.seed = j.value("seed", c.seed);
  c.use_lora = j.value("use_lora", c.use_lora);
  if (j.contains("lora")) {
    c.lora.rank = j["lora"].value("rank", c.lora.rank);
    c.lora.alpha = j["lora"].value("alpha", c.lora.alpha);
    c.lora.target_query = j["lora"].value("target_query", c.lora.target_query);
    c.lora.target_value = j["lora"].value("target_value", c.lora.target_value);
  }
  c.lookback = j.value("lookback", c.lookback);
  c.horizon = j.value("horizon", c.horizon);
  c.stride = j.value("stride", c.stride);
  c.triplets_per_step = j.value("triplets_per_step", c.triplets_per_step);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

std::vector<CellFeatureMatrix> physical_feature_matrices(const Corpus& corpus) {
  std::vector<CellFeatureMatrix> out;
  for (size_t i = 0; i < corpus.trajectories.size(); ++i) {
    if (i >= corpus.profiles.size() || corpus.profiles[i].empty()) continue;
    std::vector<const CycleProfile*> sorted;
    sorted.reserve(corpus.profiles[i].size());
    for (const auto& p : corpus.profiles[i]) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const CycleProfile* a, const CycleProfile* b) {
                return a->cycle_index < b->cycle_index;
              });
    Tensor m({static_cast<int64_t>(sorted.size()), kPhysicalFeatureCount});
    for (size_t r = 0; r < sorted.size(); ++r) {
      const auto row = extract_physical_features(*sorted[r]).as_array();
      std::copy(row.begin(), row.end(), m.data() + static_cast<int64_t>(r) * kPhysicalFeatureCount);
    }
    out.push_back({corpus.trajectories[i].cell.key(), std::move(m)});
  }
  return out;
}

Standardization fit_feature_standardization(const std::vector<CellFeatureMatrix>& cells) {
  int64_t rows = 0;
  for (const auto& c : cells) rows += c.features.dim(0);
  if (rows == 0) raise(errc::no_trainable_data, "no physical features to standardize");
  Standardization s;
  s.mean.assign(kPhysicalFeatureCount, 0.0);
  s.stddev.assign(kPhysicalFeatureCount, 0.0);
  for (const auto& c : cells)
    for (int64_t r = 0; r < c.features.dim(0); ++r)
      for (int64_t j = 0; j < kPhysicalFeatureCount; ++j)
        s.mean[static_cast<size_t>(j)] += c.features.at(r, j);
  for (auto& m : s.mean) m /= static_cast<double>(rows);
  for (const auto& c : cells)
    for (int64_t r = 0; r < c.features.dim(0); ++r)
      for (int64_t j = 0; j < kPhysicalFeatureCount; ++j) {
        const double d = c.features.at(r, j) - s.mean[static_cast<size_t>(j)];
        s.stddev[static_cast<size_t>(j)] += d * d;
      }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / static_cast<double>(rows));
    if (v == 0.0) v = 1.0;  // constant columns pass through centered
  }
  return s;
}

std::vector<Triplet> sample_triplets(const Tensor& features, const TrainConfig& cfg, Rng& rng,
                                     int count) {
  if (features.rank() != 2) raise(errc::shape_mismatch, "sample_triplets expects [T_x, C]");
  const int64_t t_x = features.dim(0);
  const int64_t c = features.dim(1);
  const int64_t l = cfg.seg_len;
  const int64_t off = cfg.positive_offset;
  const int64_t gap = cfg.negative_min_gap;
  if (t_x < 2 * l + gap)
    raise(errc::cell_too_short, "need >= " + std::to_string(2 * l + gap) +
                                    " feature cycles, have " + std::to_string(t_x));

  // The negative window must sit at least `gap` cycles clear of the anchor
  // window, i.e. |n - a| >= L_seg + gap.
  const int64_t sep = l + gap;
  const int64_t last_start = t_x - l;
  auto left_count = [&](int64_t a) { return std::max<int64_t>(0, a - sep + 1); };
  auto right_count = [&](int64_t a) { return std::max<int64_t>(0, last_start - (a + sep) + 1); };

  std::vector<int64_t> anchors;
  for (int64_t a = 0; a + off + l <= t_x; ++a)
    if (left_count(a) + right_count(a) > 0) anchors.push_back(a);
  if (anchors.empty()) raise(errc::cell_too_short, "no admissible anchor positions");

  auto segment = [&](int64_t start) {
    Tensor s({l, c});
    std::copy(features.data() + start * c, features.data() + (start + l) * c, s.data());
    return s;
  };

  std::vector<Triplet> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int64_t a = anchors[static_cast<size_t>(rng.uniform_int(anchors.size()))];
    const int64_t nl = left_count(a), nr = right_count(a);
    const auto pick = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(nl + nr)));
    const int64_t neg = pick < nl ? pick : a + sep + (pick - nl);
    Triplet t;
    t.anchor_start = a;
    t.positive_start = a + off;
    t.negative_start = neg;
    t.anchor = segment(a);
    t.positive = segment(a + off);
    t.negative = segment(neg);
    out.push_back(std::move(t));
  }
  return out;
}

JointLossParts joint_loss(ModelGraph& graph, const std::vector<std::span<const double>>& windows,
                          const std::vector<const Triplet*>& triplets, const TrainConfig& cfg,
                          Rng* noise_rng) {
  if (windows.empty() && triplets.empty())
    raise(errc::both_branches_empty, "joint_loss: nothing to optimize");
  Tape& tape = graph.tape();
  JointLossParts parts{tape.constant_scalar(0.0), 0.0, 0.0};
  Var total = parts.total;
  if (!windows.empty() && cfg.beta != 0.0) {
    Var sum = tape.constant_scalar(0.0);
    for (const auto& w : windows) sum = tape.add(sum, graph.forecasting_loss_series(w));
    Var mean = tape.scale(sum, 1.0 / static_cast<double>(windows.size()));
    parts.l_forecast = tape.value(mean).scalar_value();
    total = tape.add(total, tape.scale(mean, cfg.beta));
  }
  if (!triplets.empty() && cfg.alpha != 0.0) {
    Var sum = tape.constant_scalar(0.0);
    for (const Triplet* t : triplets)
      sum = tape.add(sum, graph.contrastive_loss(*t, cfg.tau, cfg.sigma, noise_rng));
    Var mean = tape.scale(sum, 1.0 / static_cast<double>(triplets.size()));
    parts.l_physics = tape.value(mean).scalar_value();
    total = tape.add(total, tape.scale(mean, cfg.alpha));
  }
  parts.total = total;
  return parts;
}

void save_model_checkpoint(const TimerModel& model, const std::filesystem::path& path) {
  save_checkpoint(path, Checkpoint{model.config_blob(), model.named_tensors()});
}

TimerModel load_model_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  return TimerModel::from_checkpoint(ckpt.config_json, ckpt.tensors);
}

TrainReport train(const Corpus& train_corpus, const Corpus* val_corpus, TimerModel& model,
                  const TrainConfig& cfg, const std::filesystem::path& run_dir) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  // Forecast windows: lookback and horizon concatenated, next-token training
  // runs across the whole slice.
  std::vector<std::vector<double>> window_series;
  for (const auto& traj : train_corpus.trajectories) {
    for (const auto& w : make_windows(traj, cfg.lookback, cfg.horizon, cfg.stride)) {
      std::vector<double> s = w.lookback;
      s.insert(s.end(), w.horizon.begin(), w.horizon.end());
      window_series.push_back(std::move(s));
    }
  }

  // Triplet sources: standardized per-cell physical features, cells long
  // enough for the anchor/positive/negative geometry.
  std::vector<CellFeatureMatrix> feature_cells;
  Standardization feat_std;
  if (cfg.alpha > 0.0 && cfg.triplets_per_step > 0) {
    auto raw = physical_feature_matrices(train_corpus);
    if (!raw.empty()) {
      feat_std = fit_feature_standardization(raw);
      for (auto& cell : raw) {
        if (cell.features.dim(0) < 2 * cfg.seg_len + cfg.negative_min_gap) continue;
        cell.features = apply_standardization(cell.features, feat_std);
        feature_cells.push_back(std::move(cell));
      }
    }
  }

  if (window_series.empty() && feature_cells.empty())
    raise(errc::no_trainable_data, "corpus yields no windows and no triplet sources");

  if (cfg.use_lora && !model.lora_applied()) model.apply_lora(cfg.lora);
  std::vector<Parameter*> trainable = model.trainable_parameters();
  if (trainable.empty()) raise(errc::no_trainable_data, "no trainable parameters");
  Adam opt(trainable, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  std::filesystem::create_directories(run_dir);
  {
    ordered_json run_cfg;
    run_cfg["timer"] = json::parse(model.config().to_json());
    run_cfg["train"] = json::parse(cfg.to_json());
    std::ofstream os(run_dir / "config.json", std::ios::trunc);
    os << run_cfg.dump(2) << "\n";
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (int j = 0; j < kPhysicalFeatureCount; ++j)
      rows.push_back({kPhysicalFeatureNames[static_cast<size_t>(j)],
                      feat_std.mean.empty() ? "" : format_double(feat_std.mean[static_cast<size_t>(j)]),
                      feat_std.stddev.empty() ? "" : format_double(feat_std.stddev[static_cast<size_t>(j)])});
    write_csv(run_dir / "standardization.csv", {"feature", "mean", "stddev"}, rows);
  }
  std::ofstream log(run_dir / "log.txt", std::ios::trunc);

  TrainReport report;
  const size_t n_windows = window_series.size();
  const size_t steps_per_epoch =
      std::max<size_t>(1, (n_windows + static_cast<size_t>(cfg.batch_size) - 1) /
                              static_cast<size_t>(cfg.batch_size));

  std::vector<size_t> order(n_windows);
  for (size_t i = 0; i < n_windows; ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng_shuffle(seed_for(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    Rng rng_triplet(seed_for(cfg.seed, "triplet", static_cast<uint64_t>(epoch)));
    Rng rng_noise(seed_for(cfg.seed, "noise", static_cast<uint64_t>(epoch)));
    Rng rng_dropout(seed_for(cfg.seed, "dropout", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng_shuffle.uniform_int(i))]);

    EpochStats stats;
    double total_sum = 0.0, fc_sum = 0.0, ph_sum = 0.0;
    for (size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<std::span<const double>> batch;
      const size_t begin = step * static_cast<size_t>(cfg.batch_size);
      for (size_t i = begin; i < std::min(begin + static_cast<size_t>(cfg.batch_size), n_windows);
           ++i)
        batch.emplace_back(window_series[order[i]]);

      std::vector<Triplet> step_triplets;
      if (!feature_cells.empty() && cfg.alpha > 0.0) {
        for (int t = 0; t < cfg.triplets_per_step; ++t) {
          const auto ci = static_cast<size_t>(rng_triplet.uniform_int(feature_cells.size()));
          auto one = sample_triplets(feature_cells[ci].features, cfg, rng_triplet, 1);
          step_triplets.push_back(std::move(one.front()));
        }
      }
      std::vector<const Triplet*> triplet_ptrs;
      triplet_ptrs.reserve(step_triplets.size());
      for (const auto& t : step_triplets) triplet_ptrs.push_back(&t);
      if (batch.empty() && triplet_ptrs.empty()) continue;

      Tape tape;
      ModelGraph graph(tape, model, true, &rng_dropout);
      JointLossParts parts = joint_loss(graph, batch, triplet_ptrs, cfg, &rng_noise);
      tape.backward(parts.total);
      std::vector<Tensor> grads;
      grads.reserve(trainable.size());
      for (Parameter* p : trainable) grads.push_back(tape.grad(graph.var_of(p)));
      opt.step(grads);

      total_sum += tape.value(parts.total).scalar_value();
      fc_sum += parts.l_forecast;
      ph_sum += parts.l_physics;
    }
    const auto sd = static_cast<double>(steps_per_epoch);
    stats.l_total = total_sum / sd;
    stats.l_forecast = fc_sum / sd;
    stats.l_physics = ph_sum / sd;

    if (val_corpus != nullptr) {
      size_t vw = 0;
      for (const auto& traj : val_corpus->trajectories)
        vw += make_windows(traj, cfg.lookback, cfg.horizon, cfg.stride).size();
      if (vw > 0)
        stats.val_mape = mean_mape(evaluate_model(make_forecaster(model), *val_corpus,
                                                  cfg.lookback, cfg.horizon, cfg.stride));
    }

    if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
      const auto path = run_dir / ("ckpt_epoch_" + std::to_string(epoch) + ".bin");
      save_model_checkpoint(model, path);
      report.final_checkpoint = path;
    }
    report.epochs.push_back(stats);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    log << "epoch " << epoch << " l_total " << format_double(stats.l_total) << " l_forecast "
        << format_double(stats.l_forecast) << " l_physics " << format_double(stats.l_physics)
        << " val_mape " << format_double(stats.val_mape) << " elapsed_s "
        << format_double(elapsed) << "\n";
    log.flush();
  }

  {
    // Wall time stays out of report.csv so reruns with one seed are
    // byte-identical; it lives in log.txt.
    std::vector<std::vector<std::string>> rows;
    for (size_t e = 0; e < report.epochs.size(); ++e) {
      const auto& s = report.epochs[e];
      rows.push_back({std::to_string(e + 1), format_double(s.l_total),
                      format_double(s.l_forecast), format_double(s.l_physics),
                      std::isnan(s.val_mape) ? "" : format_double(s.val_mape)});
    }
    write_csv(run_dir / "report.csv",
              {"epoch", "l_total", "l_forecast", "l_physics", "val_mape"}, rows);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  log << "wall_seconds " << format_double(report.wall_seconds) << "\n";
  return report;
}

}  // namespace tsfm

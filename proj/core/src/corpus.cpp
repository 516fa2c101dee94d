#include "tsfm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <json.hpp>

#include "tsfm/csv.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/parallel.hpp"
#include "tsfm/rng.hpp"

namespace tsfm {

using nlohmann::json;
using nlohmann::ordered_json;

size_t Corpus::total_points() const {
  size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

std::set<std::string> Corpus::dataset_ids() const {
  std::set<std::string> ids;
  for (const auto& t : trajectories) ids.insert(t.cell.dataset_id);
  return ids;
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& ch : out)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
  return out;
}

[[noreturn]] void schema_error(const std::filesystem::path& file, size_t row,
                               const std::string& column, const std::string& reason) {
  raise(errc::schema_violation,
        file.string() + " row " + std::to_string(row) + " column " + column + ": " + reason);
}

CapacityTrajectory read_trajectory_csv(const std::filesystem::path& file, CellRecord cell) {
  if (!std::filesystem::exists(file)) raise(errc::missing_file, file.string());
  const CsvTable t = read_csv(file);
  const int ci = t.column("cell_id");
  const int cy = t.column("cycle_index");
  const int ca = t.column("discharge_capacity_ah");
  if (ci < 0 || cy < 0 || ca < 0)
    raise(errc::schema_violation,
          file.string() + ": expected header cell_id,cycle_index,discharge_capacity_ah");
  CapacityTrajectory traj;
  traj.cell = std::move(cell);
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) schema_error(file, r + 1, "-", "wrong field count");
    if (row[static_cast<size_t>(ci)] != traj.cell.cell_id) continue;
    const auto cycle = parse_int(row[static_cast<size_t>(cy)]);
    if (!cycle) schema_error(file, r + 1, "cycle_index", "not an integer");
    const auto cap = parse_double(row[static_cast<size_t>(ca)]);
    if (!cap) schema_error(file, r + 1, "discharge_capacity_ah", "not a number");
    if (!(*cap > 0.0)) schema_error(file, r + 1, "discharge_capacity_ah", "must be > 0");
    if (!traj.cycles.empty() && *cycle <= traj.cycles.back())
      raise(errc::non_monotone_cycles,
            traj.cell.key() + ": cycle " + std::to_string(*cycle) + " after " +
                std::to_string(traj.cycles.back()) + " (" + file.string() + " row " +
                std::to_string(r + 1) + ")");
    traj.cycles.push_back(*cycle);
    traj.capacity_ah.push_back(*cap);
  }
  if (traj.cycles.empty())
    raise(errc::schema_violation, file.string() + ": no rows for cell " + traj.cell.cell_id);
  return traj;
}

std::vector<CycleProfile> read_profile_csv(const std::filesystem::path& file,
                                           const std::string& cell_id) {
  if (!std::filesystem::exists(file)) raise(errc::missing_file, file.string());
  const CsvTable t = read_csv(file);
  const int ci = t.column("cell_id");
  const int cy = t.column("cycle_index");
  const int ts = t.column("time_s");
  const int vv = t.column("voltage_v");
  const int ia = t.column("current_a");
  const int sl = t.column("step_label");  // optional
  if (ci < 0 || cy < 0 || ts < 0 || vv < 0 || ia < 0)
    raise(errc::schema_violation,
          file.string() + ": expected header cell_id,cycle_index,time_s,voltage_v,current_a[,step_label]");
  std::vector<CycleProfile> out;
  CycleProfile* cur = nullptr;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) schema_error(file, r + 1, "-", "wrong field count");
    if (row[static_cast<size_t>(ci)] != cell_id) continue;
    const auto cycle = parse_int(row[static_cast<size_t>(cy)]);
    if (!cycle) schema_error(file, r + 1, "cycle_index", "not an integer");
    const auto time = parse_double(row[static_cast<size_t>(ts)]);
    const auto volt = parse_double(row[static_cast<size_t>(vv)]);
    const auto curr = parse_double(row[static_cast<size_t>(ia)]);
    if (!time) schema_error(file, r + 1, "time_s", "not a number");
    if (!volt) schema_error(file, r + 1, "voltage_v", "not a number");
    if (!curr) schema_error(file, r + 1, "current_a", "not a number");
    if (!cur || cur->cycle_index != *cycle) {
      out.emplace_back();
      cur = &out.back();
      cur->cell_id = cell_id;
      cur->cycle_index = *cycle;
    }
    if (!cur->time_s.empty() && *time < cur->time_s.back())
      schema_error(file, r + 1, "time_s", "time must be nondecreasing within a cycle");
    cur->time_s.push_back(*time);
    cur->voltage_v.push_back(*volt);
    cur->current_a.push_back(*curr);
    if (sl >= 0) cur->step_label.push_back(row[static_cast<size_t>(sl)]);
  }
  for (const auto& p : out)
    if (p.samples() < 2)
      raise(errc::schema_violation, file.string() + ": cycle " + std::to_string(p.cycle_index) +
                                        " of " + cell_id + " has fewer than 2 samples");
  return out;
}

}  // namespace

Corpus ingest_corpus(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) raise(errc::missing_file, manifest_path.string());
  std::ifstream is(manifest_path);
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    raise(errc::schema_violation, manifest_path.string() + ": " + e.what());
  }
  if (!m.contains("datasets") || !m["datasets"].is_array())
    raise(errc::schema_violation, manifest_path.string() + ": missing datasets array");
  const auto base = manifest_path.parent_path();

  struct CellEntry {
    CellRecord record;
    std::filesystem::path trajectory_file;
    std::optional<std::filesystem::path> profile_file;
    bool normalized = false;
  };
  std::vector<CellEntry> entries;
  for (const auto& ds : m["datasets"]) {
    if (!ds.contains("dataset_id") || !ds.contains("cells"))
      raise(errc::schema_violation, "dataset entry missing dataset_id or cells");
    const std::string dataset_id = ds["dataset_id"].get<std::string>();
    std::set<std::string> seen_ids;
    for (const auto& c : ds["cells"]) {
      CellEntry e;
      if (!c.contains("cell_id") || !c.contains("trajectory_file"))
        raise(errc::schema_violation, dataset_id + ": cell entry missing cell_id or trajectory_file");
      e.record.cell_id = c["cell_id"].get<std::string>();
      e.record.dataset_id = dataset_id;
      e.record.chemistry = c.value("chemistry", std::string("NA"));
      if (c.contains("nominal_capacity_ah") && !c["nominal_capacity_ah"].is_null()) {
        e.record.nominal_capacity_ah = c["nominal_capacity_ah"].get<double>();
        if (!(*e.record.nominal_capacity_ah > 0.0))
          raise(errc::schema_violation, e.record.key() + ": nominal_capacity_ah must be > 0");
      }
      if (c.contains("temperature_c") && !c["temperature_c"].is_null())
        e.record.temperature_c = c["temperature_c"].get<double>();
      e.normalized = c.value("normalized", false);
      e.trajectory_file = base / c["trajectory_file"].get<std::string>();
      if (c.contains("profile_file") && !c["profile_file"].is_null())
        e.profile_file = base / c["profile_file"].get<std::string>();
      if (!seen_ids.insert(e.record.cell_id).second)
        raise(errc::schema_violation, dataset_id + ": duplicate cell_id " + e.record.cell_id);
      entries.push_back(std::move(e));
    }
  }

  Corpus corpus;
  corpus.trajectories.resize(entries.size());
  corpus.profiles.resize(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  parallel_for(static_cast<int64_t>(entries.size()), [&](int64_t i) {
    const auto idx = static_cast<size_t>(i);
    try {
      auto traj = read_trajectory_csv(entries[idx].trajectory_file, entries[idx].record);
      traj.normalized = entries[idx].normalized;
      corpus.trajectories[idx] = std::move(traj);
      if (entries[idx].profile_file)
        corpus.profiles[idx] = read_profile_csv(*entries[idx].profile_file,
                                                entries[idx].record.cell_id);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "cells");
  ordered_json manifest;
  manifest["version"] = 1;
  manifest["datasets"] = ordered_json::array();
  std::map<std::string, size_t> dataset_pos;
  for (size_t i = 0; i < corpus.trajectories.size(); ++i) {
    const CapacityTrajectory& traj = corpus.trajectories[i];
    const std::string stem = sanitize(traj.cell.dataset_id) + "__" + sanitize(traj.cell.cell_id);
    const std::string traj_rel = "cells/" + stem + "_capacity.csv";
    {
      std::vector<std::vector<std::string>> rows;
      rows.reserve(traj.length());
      for (size_t r = 0; r < traj.length(); ++r)
        rows.push_back({traj.cell.cell_id, std::to_string(traj.cycles[r]),
                        format_double(traj.capacity_ah[r])});
      write_csv(dir / traj_rel, {"cell_id", "cycle_index", "discharge_capacity_ah"}, rows);
    }
    std::optional<std::string> prof_rel;
    if (i < corpus.profiles.size() && !corpus.profiles[i].empty()) {
      prof_rel = "cells/" + stem + "_profile.csv";
      const bool labeled = corpus.profiles[i].front().has_labels();
      std::vector<std::string> header = {"cell_id", "cycle_index", "time_s", "voltage_v",
                                         "current_a"};
      if (labeled) header.push_back("step_label");
      std::vector<std::vector<std::string>> rows;
      for (const CycleProfile& p : corpus.profiles[i]) {
        for (size_t s = 0; s < p.samples(); ++s) {
          std::vector<std::string> row = {p.cell_id, std::to_string(p.cycle_index),
                                          format_double(p.time_s[s]),
                                          format_double(p.voltage_v[s]),
                                          format_double(p.current_a[s])};
          if (labeled) row.push_back(p.step_label[s]);
          rows.push_back(std::move(row));
        }
      }
      write_csv(dir / *prof_rel, header, rows);
    }

    auto it = dataset_pos.find(traj.cell.dataset_id);
    if (it == dataset_pos.end()) {
      ordered_json ds;
      ds["dataset_id"] = traj.cell.dataset_id;
      ds["cells"] = ordered_json::array();
      manifest["datasets"].push_back(std::move(ds));
      it = dataset_pos.emplace(traj.cell.dataset_id, manifest["datasets"].size() - 1).first;
    }
    ordered_json cell;
    cell["cell_id"] = traj.cell.cell_id;
    cell["chemistry"] = traj.cell.chemistry;
    if (traj.cell.nominal_capacity_ah) cell["nominal_capacity_ah"] = *traj.cell.nominal_capacity_ah;
    if (traj.cell.temperature_c) cell["temperature_c"] = *traj.cell.temperature_c;
    cell["normalized"] = traj.normalized;
    cell["trajectory_file"] = traj_rel;
    if (prof_rel) cell["profile_file"] = *prof_rel;
    manifest["datasets"][it->second]["cells"].push_back(std::move(cell));
  }
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  os << manifest.dump(2) << "\n";
  if (!os) raise(errc::missing_file, "cannot write manifest to " + dir.string());
}

CapacityTrajectory normalize_capacity(const CapacityTrajectory& traj) {
  if (traj.normalized) raise(errc::already_normalized, traj.cell.key());
  if (traj.length() == 0) raise(errc::empty_trajectory, traj.cell.key());
  double reference;
  if (traj.cell.nominal_capacity_ah) {
    reference = *traj.cell.nominal_capacity_ah;
  } else {
    const size_t n = std::min<size_t>(5, traj.length());
    reference = *std::max_element(traj.capacity_ah.begin(),
                                  traj.capacity_ah.begin() + static_cast<std::ptrdiff_t>(n));
  }
  CapacityTrajectory out = traj;
  for (double& v : out.capacity_ah) v /= reference;
  out.normalized = true;
  return out;
}

std::vector<WindowSample> make_windows(const CapacityTrajectory& traj, int lookback, int horizon,
                                       int stride) {
  if (lookback < 1 || horizon < 1 || stride < 1)
    raise(errc::invalid_config, "make_windows: T, H, stride must be >= 1");
  if (!traj.normalized)
    raise(errc::invalid_config, "make_windows: trajectory must be normalized first");
  std::vector<WindowSample> out;
  const int64_t len = static_cast<int64_t>(traj.length());
  const int64_t need = static_cast<int64_t>(lookback) + horizon;
  for (int64_t start = 0; start + need <= len; start += stride) {
    WindowSample w;
    w.cell_id = traj.cell.cell_id;
    w.start_cycle = traj.cycles[static_cast<size_t>(start)];
    w.lookback.assign(traj.capacity_ah.begin() + start,
                      traj.capacity_ah.begin() + start + lookback);
    w.horizon.assign(traj.capacity_ah.begin() + start + lookback,
                     traj.capacity_ah.begin() + start + need);
    out.push_back(std::move(w));
  }
  return out;
}

SplitResult split_seen_unseen(const Corpus& corpus, const SplitSpec& spec) {
  const auto known = corpus.dataset_ids();
  for (const auto& id : spec.holdout_dataset_ids)
    if (!known.count(id)) raise(errc::unknown_dataset_id, id);

  SplitResult res;
  auto push_cell = [&](Corpus& dst, size_t i) {
    dst.trajectories.push_back(corpus.trajectories[i]);
    dst.profiles.push_back(i < corpus.profiles.size() ? corpus.profiles[i]
                                                      : std::vector<CycleProfile>{});
  };

  std::map<std::string, std::vector<size_t>> seen_by_dataset;
  for (size_t i = 0; i < corpus.trajectories.size(); ++i) {
    const std::string& ds = corpus.trajectories[i].cell.dataset_id;
    if (spec.holdout_dataset_ids.count(ds)) {
      push_cell(res.unseen_test, i);
    } else {
      seen_by_dataset[ds].push_back(i);
    }
  }
  for (auto& [ds, indices] : seen_by_dataset) {
    // Order by cell_id first so the shuffle is independent of manifest order.
    std::sort(indices.begin(), indices.end(), [&](size_t a, size_t b) {
      return corpus.trajectories[a].cell.cell_id < corpus.trajectories[b].cell.cell_id;
    });
    Rng rng(seed_for(spec.seed, ds.c_str()));
    for (size_t i = indices.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(i));
      std::swap(indices[i - 1], indices[j]);
    }
    const auto n_train =
        static_cast<size_t>(spec.train_fraction_within_seen * static_cast<double>(indices.size()) +
                            1e-9);
    for (size_t k = 0; k < indices.size(); ++k)
      push_cell(k < n_train ? res.train : res.seen_test, indices[k]);
  }
  return res;
}

}  // namespace tsfm

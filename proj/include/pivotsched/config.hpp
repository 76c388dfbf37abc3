#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pivotsched/common.hpp"
#include "pivotsched/field.hpp"
#include "pivotsched/reduction.hpp"
#include "pivotsched/scheduler.hpp"
#include "pivotsched/soil.hpp"
#include "pivotsched/weather.hpp"

namespace pivotsched {

// How the projection basis is obtained: either rebuilt from a snapshot run
// (uniform initial head, constant input, fixed sampling) or loaded from a
// previously saved cluster map.
struct ReductionSpec {
  double threshold = 1.0;
  double snapshot_head = -4.0;   // m, uniform initial condition
  double snapshot_u = 2e-6;      // m/s on every ring
  double snapshot_days = 8.0;
  double snapshot_dt_h = 6.0;
  bool standardize = false;
  std::string clusters_file;     // when set, load instead of clustering
};

// Everything one scenario needs, loaded from a JSON file whose relative paths
// resolve against the file's own directory. All referenced files are checked
// up front so a long run cannot die late on a missing input.
struct ScenarioBundle {
  CylGrid grid{1.0, 1.0, 1, 1, 2};
  SoilMap soil;
  CropCalendar calendar;
  FeddesParams feddes;
  PivotConfig pivot;
  StepControl control;
  BottomBoundary bottom = BottomBoundary::kFreeDrainage;
  WeatherSeries weather;
  std::vector<double> x0;
  double dt_out = 21600.0;
  int season_days = 20;
  ReductionSpec reduction;
  ZoneSpec zone;
  SchedulerWeights weights;
  HorizonSpec horizon;
  SolverOptions solver;
  std::vector<int> output_layers_from_top;
  double accurate_days = 7.0;
  SprinklerSchedule events;            // for plain simulation runs
  std::vector<double> sweep_amounts;   // for drain-time sweeps
  uint64_t config_hash = 0;
  std::string config_path;

  static ScenarioBundle load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open config");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text, nullptr, true, true);  // allow comments
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    try {
      return from_json(j, path, fnv1a64(text));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }

  FieldModel build_field() const {
    return FieldModel(grid, soil, calendar, feddes, pivot, bottom, control);
  }

  // Snapshot collection + clustering (or a saved cluster map) -> projection.
  Projection build_projection(const FieldModel& field) const {
    if (!reduction.clusters_file.empty()) return Projection::load_csv(reduction.clusters_file, grid.size());
    const Matrix snaps = collect_snapshots_for(field);
    Clustering clustering = cluster_states(snaps, reduction.threshold, reduction.standardize);
    return Projection(clustering, grid.size());
  }

  Matrix collect_snapshots_for(const FieldModel& field) const {
    const std::vector<double> start(grid.size(), reduction.snapshot_head);
    const double horizon_s = reduction.snapshot_days * kSecondsPerDay;
    auto schedule =
        SprinklerSchedule::single_event(0.0, horizon_s, std::vector<double>(grid.nr(), reduction.snapshot_u));
    return collect_snapshots(field, start, schedule, weather.observed_fn(), horizon_s,
                             reduction.snapshot_dt_h * 3600.0);
  }

  std::vector<int> output_nodes() const {
    std::vector<int> ids;
    for (int layer : output_layers_from_top) {
      if (layer < 1 || layer > grid.nz()) throw ParseError(config_path + ": output layer out of range");
      const int k = grid.nz() - layer;
      for (int i = 0; i < grid.nr(); ++i)
        for (int jj = 0; jj < grid.ntheta(); ++jj) ids.push_back(grid.id(i, jj, k));
    }
    if (ids.empty()) throw ParseError(config_path + ": no output layers configured");
    return ids;
  }

  SchedulerSetup scheduler_setup() const {
    SchedulerSetup s;
    s.zone = zone;
    s.weights = weights;
    s.horizon = horizon;
    s.solver = solver;
    s.output_nodes = output_nodes();
    s.accurate_days = accurate_days;
    return s;
  }

  SeasonConfig season_config() const {
    SeasonConfig c;
    c.days = season_days;
    c.log_dt_s = dt_out;
    c.x0 = x0;
    return c;
  }

 private:
  static ScenarioBundle from_json(const nlohmann::json& j, const std::string& path, uint64_t hash) {
    ScenarioBundle b;
    b.config_path = path;
    b.config_hash = hash;
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& rel) {
      std::filesystem::path p(rel);
      std::string full = (p.is_absolute() ? p : dir / p).string();
      if (!std::filesystem::exists(full)) throw ParseError(path + ": referenced file not found: " + full);
      return full;
    };

    b.grid = CylGrid(j.at("radius").get<double>(), j.at("depth").get<double>(), j.at("Nr").get<int>(),
                     j.at("Ntheta").get<int>(), j.at("Nz").get<int>());
    b.pivot.rotation_period_s = j.at("rotation_period_h").get<double>() * 3600.0;
    b.pivot.u_min = j.at("u_lb").get<double>();
    b.pivot.u_max = j.at("u_ub").get<double>();
    b.pivot.phase_offset_s = j.value("phase_offset_s", 0.0);
    b.pivot.validate();
    b.dt_out = j.value("dt_out", 21600.0);
    b.control.dh_max = j.value("dh_max", 0.05);
    b.control.dt_min = j.value("dt_min", 1e-3);
    b.control.safety = j.value("safety", 0.9);
    b.control.validate();
    const std::string bottom = j.value("bottom", std::string("free_drainage"));
    if (bottom == "free_drainage")
      b.bottom = BottomBoundary::kFreeDrainage;
    else if (bottom == "sealed")
      b.bottom = BottomBoundary::kSealed;
    else
      throw ParseError(path + ": bottom must be 'free_drainage' or 'sealed'");

    b.soil = SoilMap::load_csv(resolve(j.at("soil_file").get<std::string>()), b.grid.size());
    b.calendar = CropCalendar::load_csv(resolve(j.at("crop_file").get<std::string>()));
    b.weather = WeatherSeries::load_csv(resolve(j.at("weather_file").get<std::string>()));
    if (j.contains("feddes")) {
      const auto& f = j.at("feddes");
      b.feddes.h1 = f.value("h1", b.feddes.h1);
      b.feddes.h2 = f.value("h2", b.feddes.h2);
      b.feddes.h3 = f.value("h3", b.feddes.h3);
      b.feddes.h4 = f.value("h4", b.feddes.h4);
      b.feddes.validate();
    }

    if (j.contains("init_file")) {
      csv::Table t = csv::read_table(resolve(j.at("init_file").get<std::string>()));
      const int c_id = t.require_column("node_id");
      const int c_h = t.require_column("head_m");
      b.x0.assign(b.grid.size(), std::numeric_limits<double>::quiet_NaN());
      for (size_t r = 0; r < t.rows.size(); ++r) {
        const long id = csv::parse_long(t, static_cast<int>(r), c_id);
        if (id < 0 || id >= b.grid.size())
          throw ParseError(t.path + ":" + std::to_string(t.line_numbers[r]) + ": node_id out of range");
        b.x0[id] = csv::parse_double(t, static_cast<int>(r), c_h);
      }
      for (int i = 0; i < b.grid.size(); ++i)
        if (std::isnan(b.x0[i])) throw ParseError(t.path + ": node " + std::to_string(i) + " has no initial head");
    } else {
      b.x0.assign(b.grid.size(), j.at("init_head").get<double>());
    }

    b.season_days = j.value("season_days", 20);
    if (b.season_days < 1) throw ParseError(path + ": season_days must be >= 1");

    if (j.contains("reduction")) {
      const auto& r = j.at("reduction");
      b.reduction.threshold = r.value("threshold", 1.0);
      b.reduction.snapshot_head = r.value("snapshot_head", -4.0);
      b.reduction.snapshot_u = r.value("snapshot_u", 2e-6);
      b.reduction.snapshot_days = r.value("snapshot_days", 8.0);
      b.reduction.snapshot_dt_h = r.value("snapshot_dt_h", 6.0);
      b.reduction.standardize = r.value("standardize", false);
      if (r.contains("clusters_file")) b.reduction.clusters_file = resolve(r.at("clusters_file").get<std::string>());
    }

    if (j.contains("scheduler")) {
      const auto& s = j.at("scheduler");
      b.zone.lower = s.value("zone_lower", b.zone.lower);
      b.zone.upper = s.value("zone_upper", b.zone.upper);
      b.zone.cons_lower = s.value("cons_lower", b.zone.cons_lower);
      b.zone.cons_upper = s.value("cons_upper", b.zone.cons_upper);
      b.weights.q_yield = s.value("q_yield", b.weights.q_yield);
      b.weights.q_water = s.value("q_water", b.weights.q_water);
      b.weights.q_time = s.value("q_time", b.weights.q_time);
      b.weights.q_upper = s.value("q_upper", b.weights.q_upper);
      b.weights.q_lower = s.value("q_lower", b.weights.q_lower);
      b.horizon.n1 = s.value("N1", b.horizon.n1);
      b.horizon.n2 = s.value("N2", b.horizon.n2);
      b.horizon.n3 = s.value("N3", b.horizon.n3);
      b.horizon.t_lb = s.value("t_lb_s", b.horizon.t_lb);
      if (s.contains("t_ub_days")) b.horizon.t_ub = s.at("t_ub_days").get<double>() * kSecondsPerDay;
      b.horizon.event_duration = s.value("event_duration_s", b.pivot.rotation_period_s);
      b.accurate_days = s.value("ts_days", 7.0);
      if (s.contains("output_layers_from_top"))
        b.output_layers_from_top = s.at("output_layers_from_top").get<std::vector<int>>();
      if (s.contains("solver")) {
        const auto& o = s.at("solver");
        b.solver.outer_seeds = o.value("outer_seeds", b.solver.outer_seeds);
        b.solver.outer_golden_iters = o.value("outer_golden_iters", b.solver.outer_golden_iters);
        b.solver.outer_tol_s = o.value("outer_tol_s", b.solver.outer_tol_s);
        b.solver.inner_iters = o.value("inner_iters", b.solver.inner_iters);
        b.solver.inner_rel_tol = o.value("inner_rel_tol", b.solver.inner_rel_tol);
        b.solver.fd_step = o.value("fd_step", b.solver.fd_step);
        b.solver.line_search_halvings = o.value("line_search_halvings", b.solver.line_search_halvings);
      }
    } else {
      b.horizon.event_duration = b.pivot.rotation_period_s;
    }

    if (j.contains("schedule_events")) {
      for (const auto& e : j.at("schedule_events")) {
        SprinklerSchedule::Segment seg;
        seg.t_begin = e.at("t_start_s").get<double>();
        seg.t_end = seg.t_begin + e.at("duration_s").get<double>();
        seg.rates = e.at("rates").get<std::vector<double>>();
        if (static_cast<int>(seg.rates.size()) != b.grid.nr())
          throw ParseError(path + ": schedule event needs one rate per ring");
        b.events.add(std::move(seg));
      }
    }

    if (j.contains("sweep_amounts")) b.sweep_amounts = j.at("sweep_amounts").get<std::vector<double>>();

    return b;
  }
};

}  // namespace pivotsched

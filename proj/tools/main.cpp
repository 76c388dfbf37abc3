#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pivotsched/pivotsched.hpp"

namespace fs = std::filesystem;
using namespace pivotsched;

namespace {

struct CommonOpts {
  std::string config;
  int scenario = 0;
  std::string out = ".";
  long seed = 0;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  auto* cfg = sub->add_option("-c,--config", o.config, "Scenario JSON file");
  auto* scen = sub->add_option("-s,--scenario", o.scenario, "Bundled scenario number")->check(CLI::Range(1, 3));
  cfg->excludes(scen);
  scen->excludes(cfg);
  sub->add_option("-o,--out", o.out, "Output directory (created if missing)");
  sub->add_option("--seed", o.seed, "Run label recorded in outputs; everything is deterministic");
}

std::string resolve_config(const CommonOpts& o) {
  if (!o.config.empty()) return o.config;
  if (o.scenario == 0) throw ParseError("either --config or --scenario is required");
  const char* base = std::getenv("PIVOTSCHED_CONFIGS");
  return (fs::path(base ? base : "configs") / ("scenario" + std::to_string(o.scenario) + ".json")).string();
}

std::string out_path(const CommonOpts& o, const std::string& name) {
  fs::create_directories(o.out);
  return (fs::path(o.out) / name).string();
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string provenance(const ScenarioBundle& b, const CommonOpts& o) {
  return "config=" + fs::path(b.config_path).filename().string() + " hash=" + hash_hex(b.config_hash) +
         " seed=" + std::to_string(o.seed);
}

void write_trajectory(const std::string& path, const Trajectory& traj, const std::string& prov) {
  csv::Writer out(path);
  out.comment(prov);
  std::vector<std::string> names{"time_s"};
  const size_t n = traj.states.empty() ? 0 : traj.states.front().size();
  for (size_t i = 0; i < n; ++i) names.push_back("node_" + std::to_string(i));
  out.header(names);
  std::vector<double> row(n + 1);
  for (size_t s = 0; s < traj.times.size(); ++s) {
    row[0] = traj.times[s];
    std::copy(traj.states[s].begin(), traj.states[s].end(), row.begin() + 1);
    out.row(row);
  }
}

int run_simulate(const CommonOpts& o) {
  const ScenarioBundle bundle = ScenarioBundle::load(resolve_config(o));
  const FieldModel model = bundle.build_field();
  const double horizon = bundle.season_days * kSecondsPerDay;

  MassLedger ledger;
  const double s0 = model.water_storage(bundle.x0);
  const Trajectory traj =
      model.simulate(bundle.x0, bundle.events, bundle.weather.observed_fn(), 0.0, horizon, bundle.dt_out, &ledger);
  const double s1 = model.water_storage(traj.states.back());
  const double residual = (s1 - s0) - (ledger.surface_in - ledger.bottom_out - ledger.sink_out);

  write_trajectory(out_path(o, "trajectory.csv"), traj, provenance(bundle, o));

  nlohmann::json summary{{"config", fs::path(bundle.config_path).filename().string()},
                         {"config_hash", hash_hex(bundle.config_hash)},
                         {"seed", o.seed},
                         {"nodes", model.grid().size()},
                         {"samples", traj.times.size()},
                         {"horizon_s", horizon},
                         {"storage_initial_m3", s0},
                         {"storage_final_m3", s1},
                         {"surface_in_m3", ledger.surface_in},
                         {"bottom_out_m3", ledger.bottom_out},
                         {"sink_out_m3", ledger.sink_out},
                         {"balance_residual_m3", residual}};
  std::ofstream(out_path(o, "summary.json")) << summary.dump(2) << "\n";

  std::cout << "simulate: " << traj.times.size() << " samples over " << bundle.season_days << " days, storage " << s0
            << " -> " << s1 << " m^3, balance residual " << residual << " m^3\n";
  return 0;
}

// Rebuilds the snapshot run explicitly so the same trajectory feeds both the
// snapshot matrix and the reduction-error reference.
struct SnapshotRun {
  std::vector<double> start;
  SprinklerSchedule schedule;
  double horizon_s = 0.0;
  double dt_s = 0.0;
  Trajectory full;
  Matrix snaps;
};

SnapshotRun snapshot_run(const ScenarioBundle& bundle, const FieldModel& model) {
  SnapshotRun r;
  const ReductionSpec& spec = bundle.reduction;
  r.start.assign(model.grid().size(), spec.snapshot_head);
  r.horizon_s = spec.snapshot_days * kSecondsPerDay;
  r.dt_s = spec.snapshot_dt_h * 3600.0;
  r.schedule =
      SprinklerSchedule::single_event(0.0, r.horizon_s, std::vector<double>(model.grid().nr(), spec.snapshot_u));
  r.full = model.simulate(r.start, r.schedule, bundle.weather.observed_fn(), 0.0, r.horizon_s, r.dt_s);
  r.snaps = snapshot_matrix(r.full);
  return r;
}

double reduction_error(const FieldModel& model, const ScenarioBundle& bundle, const SnapshotRun& run,
                       const Projection& proj) {
  ReducedModel reduced(model, proj);
  const Trajectory rt = reduced.simulate(proj.reduce(run.start), run.schedule, bundle.weather.observed_fn(), 0.0,
                                         run.horizon_s, run.dt_s);
  return model_mse(run.full, reduced.lift_trajectory(rt));
}

int run_reduce(const CommonOpts& o, double threshold_flag, const std::string& sweep_flag) {
  const ScenarioBundle bundle = ScenarioBundle::load(resolve_config(o));
  const FieldModel model = bundle.build_field();
  const SnapshotRun run = snapshot_run(bundle, model);
  const std::string prov = provenance(bundle, o);

  {
    csv::Writer out(out_path(o, "snapshots.csv"));
    out.comment(prov);
    std::vector<std::string> names{"node_id"};
    for (int s = 0; s < run.snaps.cols; ++s) names.push_back("t" + std::to_string(s));
    out.header(names);
    std::vector<double> row(run.snaps.cols + 1);
    for (int id = 0; id < run.snaps.rows; ++id) {
      row[0] = id;
      for (int s = 0; s < run.snaps.cols; ++s) row[s + 1] = run.snaps.at(id, s);
      out.row(row);
    }
  }

  if (!sweep_flag.empty()) {
    double a = 0.0, b = 0.0, s = 0.0;
    if (std::sscanf(sweep_flag.c_str(), "%lf:%lf:%lf", &a, &b, &s) != 3 || !(s > 0.0) || !(a > 0.0) || b < a)
      throw ParseError("--sweep expects START:STOP:STEP with 0 < START <= STOP and STEP > 0");
    csv::Writer out(out_path(o, "sweep.csv"));
    out.comment(prov);
    out.header({"threshold", "reduced_dim", "mse"});
    for (double th = a; th <= b + 1e-12; th += s) {
      const Projection proj(cluster_states(run.snaps, th, bundle.reduction.standardize), model.grid().size());
      const double mse = reduction_error(model, bundle, run, proj);
      out.row({th, static_cast<double>(proj.reduced_dim()), mse});
      std::cout << "reduce: threshold " << th << " -> " << proj.reduced_dim() << " clusters, mse " << mse << "\n";
    }
    return 0;
  }

  const double threshold = threshold_flag > 0.0 ? threshold_flag : bundle.reduction.threshold;
  const Projection proj(cluster_states(run.snaps, threshold, bundle.reduction.standardize), model.grid().size());
  proj.save_csv(out_path(o, "clusters.csv"), threshold);
  const double mse = reduction_error(model, bundle, run, proj);
  std::cout << "reduce: threshold " << threshold << " -> " << proj.reduced_dim() << " clusters ("
            << model.grid().size() << " nodes), mse " << mse << "\n";
  return 0;
}

int run_schedule(const CommonOpts& o) {
  const ScenarioBundle bundle = ScenarioBundle::load(resolve_config(o));
  const FieldModel plant = bundle.build_field();
  const Projection proj = bundle.build_projection(plant);
  ReducedModel reduced(plant, proj);
  Scheduler sched(reduced, bundle.scheduler_setup());
  const SeasonResult res = run_season(plant, sched, bundle.weather, bundle.season_config());
  const std::string prov = provenance(bundle, o);

  {
    csv::Writer out(out_path(o, "log.csv"));
    out.comment(prov);
    std::vector<std::string> names{"event_index", "t_start_s"};
    for (int i = 0; i < plant.grid().nr(); ++i) names.push_back("u_" + std::to_string(i));
    names.insert(names.end(), {"T_chosen_s", "water_m3", "deficiency_increment", "min_rootzone_head"});
    out.header(names);
    for (const EventRecord& e : res.events) {
      std::vector<double> row{static_cast<double>(e.event_index), e.t_start_s};
      row.insert(row.end(), e.u_rates.begin(), e.u_rates.end());
      row.insert(row.end(), {e.t_chosen_s, e.water_m3, e.deficiency_increment, e.min_rootzone_head});
      out.row(row);
    }
  }
  {
    csv::Writer out(out_path(o, "stress.csv"));
    out.comment(prov);
    out.header({"day", "stress", "ky"});
    for (size_t d = 0; d < res.daily_stress.size(); ++d)
      out.row({static_cast<double>(d), res.daily_stress[d], res.daily_ky[d]});
  }
  write_trajectory(out_path(o, "trajectory.csv"), res.plant, prov);

  nlohmann::json events = nlohmann::json::array();
  for (const EventRecord& e : res.events)
    events.push_back({{"event_index", e.event_index},
                      {"t_start_s", e.t_start_s},
                      {"u_rates", e.u_rates},
                      {"T_chosen_s", e.t_chosen_s},
                      {"water_m3", e.water_m3},
                      {"deficiency_increment", e.deficiency_increment},
                      {"min_rootzone_head", e.min_rootzone_head}});
  nlohmann::json season{{"config", fs::path(bundle.config_path).filename().string()},
                        {"config_hash", hash_hex(bundle.config_hash)},
                        {"seed", o.seed},
                        {"season_days", bundle.season_days},
                        {"reduced_dim", reduced.dim()},
                        {"full_dim", plant.grid().size()},
                        {"events", events},
                        {"total_deficiency", res.total_deficiency},
                        {"irrigation_m3", res.irrigation_m3},
                        {"ledger",
                         {{"surface_in_m3", res.ledger.surface_in},
                          {"bottom_out_m3", res.ledger.bottom_out},
                          {"sink_out_m3", res.ledger.sink_out}}}};
  std::ofstream(out_path(o, "season.json")) << season.dump(2) << "\n";

  std::cout << "schedule: " << res.events.size() << " events over " << bundle.season_days << " days, "
            << res.irrigation_m3 << " m^3 applied, deficiency " << res.total_deficiency << " (model " << reduced.dim()
            << "/" << plant.grid().size() << ")\n";
  return 0;
}

int run_sweep_days(const CommonOpts& o, double cap_days) {
  const ScenarioBundle bundle = ScenarioBundle::load(resolve_config(o));
  const FieldModel plant = bundle.build_field();
  const Projection proj = bundle.build_projection(plant);
  ReducedModel reduced(plant, proj);
  Scheduler sched(reduced, bundle.scheduler_setup());

  std::vector<double> amounts = bundle.sweep_amounts;
  if (amounts.empty())
    for (int k = 0; k <= 4; ++k) amounts.push_back(bundle.pivot.u_min + 0.25 * k * (bundle.pivot.u_max - bundle.pivot.u_min));

  csv::Writer out(out_path(o, "days.csv"));
  out.comment(provenance(bundle, o));
  out.header({"u_rate", "days", "crossed"});
  std::vector<double> days;
  for (double u : amounts) {
    const Scheduler::DrainResult r = sched.days_to_zone(bundle.x0, u, bundle.weather.observed_fn(), cap_days);
    out.row({u, r.days, r.crossed ? 1.0 : 0.0});
    days.push_back(r.days);
    std::cout << "sweep-days: u " << u << " m/s -> " << r.days << " days" << (r.crossed ? "" : " (never crossed)")
              << "\n";
  }

  // Knee: the sampled point farthest from the chord between the endpoints, a
  // cheap estimate of where extra water stops buying meaningful time.
  if (amounts.size() >= 3 && amounts.back() > amounts.front()) {
    const double x0 = amounts.front(), y0 = days.front();
    const double dx = amounts.back() - x0, dy = days.back() - y0;
    double best = -1.0;
    size_t arg = 0;
    for (size_t k = 1; k + 1 < amounts.size(); ++k) {
      const double tx = (amounts[k] - x0) / dx;
      const double dev = std::abs(days[k] - (y0 + tx * dy));
      if (dev > best) {
        best = dev;
        arg = k;
      }
    }
    if (best > 0.0)
      std::cout << "sweep-days: knee near u " << amounts[arg] << " m/s (" << days[arg] << " days)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Center-pivot irrigation toolkit: field simulation, model reduction, and closed-loop scheduling"};
  app.require_subcommand(1);

  CommonOpts opts;
  double threshold = 0.0;
  std::string sweep;
  double cap_days = 90.0;

  CLI::App* sim = app.add_subcommand("simulate", "Integrate the field under a fixed sprinkler schedule");
  add_common(sim, opts);

  CLI::App* red = app.add_subcommand("reduce", "Collect snapshots and cluster the state space");
  add_common(red, opts);
  auto* thr = red->add_option("--threshold", threshold, "Clustering cut height (overrides the config)");
  auto* swp = red->add_option("--sweep", sweep, "Threshold sweep START:STOP:STEP; writes sweep.csv");
  thr->excludes(swp);
  swp->excludes(thr);

  CLI::App* sch = app.add_subcommand("schedule", "Run the receding-horizon irrigation season");
  add_common(sch, opts);

  CLI::App* swd = app.add_subcommand("sweep-days", "Days until the root zone drains past the dry bound, per event rate");
  add_common(swd, opts);
  swd->add_option("--cap-days", cap_days, "Give up after this many days");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return run_simulate(opts);
    if (red->parsed()) return run_reduce(opts, threshold, sweep);
    if (sch->parsed()) return run_schedule(opts);
    return run_sweep_days(opts, cap_days);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {  // parameter and shape errors
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {  // numeric, scheduling, I/O
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pivotsched/common.hpp"
#include "pivotsched/crop.hpp"
#include "pivotsched/field.hpp"
#include "pivotsched/reduction.hpp"
#include "pivotsched/weather.hpp"

namespace pivotsched {

// Head band to hold the root zone in. The actual band [lower, upper] is where
// the crop is stress-free; the cost penalizes leaving the tighter conservative
// band [cons_lower, cons_upper] so excursions are caught early.
struct ZoneSpec {
  double lower = -3.1;
  double upper = -0.25;
  double cons_lower = -2.8;
  double cons_upper = -1.0;

  void validate() const {
    if (!(lower < upper)) throw ParameterError("zone: need lower < upper");
    if (!(cons_lower < cons_upper)) throw ParameterError("zone: need cons_lower < cons_upper");
    if (!(cons_lower > lower && cons_upper < upper))
      throw ParameterError("zone: conservative band must lie strictly inside the actual band");
  }
};

struct SchedulerWeights {
  double q_yield = 1.0;
  double q_water = 1.0;
  double q_time = 1.0;
  double q_upper = 1.0;   // weight on upper-bound (too wet) slack
  double q_lower = 100.0; // weight on lower-bound (too dry) slack

  void validate() const {
    if (!(q_yield >= 0.0 && q_water >= 0.0 && q_time >= 0.0 && q_upper >= 0.0 && q_lower >= 0.0))
      throw ParameterError("weights: all must be >= 0");
  }
};

// Three-segment prediction horizon: an irrigation pass (N1 samples), a dry
// spell of decision-variable length T (N2 samples, spacing T/N2), and a second
// irrigation pass (N3 samples). Event duration defaults to one pivot
// revolution when built from a field.
struct HorizonSpec {
  int n1 = 8;
  int n2 = 48;
  int n3 = 8;
  double t_lb = 1800.0;            // s
  double t_ub = 16.0 * kSecondsPerDay;
  double event_duration = 28800.0; // s

  int total_samples() const { return n1 + n2 + n3; }

  void validate() const {
    if (n1 < 1 || n2 < 1 || n3 < 1) throw ParameterError("horizon: sample counts must be >= 1");
    if (!(t_lb > 0.0 && t_lb < t_ub)) throw ParameterError("horizon: need 0 < T_lb < T_ub");
    if (!(event_duration > 0.0)) throw ParameterError("horizon: event duration must be > 0");
  }
};

struct CostTerms {
  double yield = 0.0;        // Q_y * deficiency^2
  double water = 0.0;        // Q_u * sum of commanded rates over event samples
  double time = 0.0;         // Q_T * N2 * T / T_ub (entered negatively)
  double slack_upper = 0.0;  // sum Q̄ * eps_upper^2
  double slack_lower = 0.0;  // sum Q̲ * eps_lower^2
  double total = 0.0;
};

// One solved irrigation decision: rates for the leading and trailing passes,
// the dry-spell length between them, and the predicted consequences.
struct ScheduleDecision {
  std::vector<double> u1;  // m/s per ring, leading event
  std::vector<double> u3;  // m/s per ring, trailing event
  double t_dry = 0.0;      // s between the passes

  CostTerms cost;
  double deficiency = 0.0;          // predicted over the horizon
  Matrix outputs;                   // N x n_out lifted heads at output nodes
  Matrix slack_upper, slack_lower;  // N x n_out, >= 0
  std::vector<double> sample_times; // absolute, length N
  std::vector<double> stress;       // mean stress factor per sample
  std::vector<double> ky;           // crop sensitivity per sample
};

struct SolverOptions {
  int outer_seeds = 8;         // evenly spaced T seeds including both bounds
  int outer_golden_iters = 10; // golden-section refinements after seeding
  double outer_tol_s = 600.0;  // stop refining T below this bracket width
  int inner_iters = 12;        // projected-gradient iterations
  double inner_rel_tol = 1e-4; // relative cost improvement stop
  double fd_step = 1e-3;       // central-difference step in normalized units
  int line_search_halvings = 6;

  void validate() const {
    if (outer_seeds < 2) throw ParameterError("solver: need at least 2 T seeds");
    if (inner_iters < 1 || outer_golden_iters < 0) throw ParameterError("solver: iteration counts invalid");
    if (!(fd_step > 0.0 && fd_step < 0.5)) throw ParameterError("solver: fd_step out of range");
    if (!(inner_rel_tol > 0.0)) throw ParameterError("solver: tolerance must be > 0");
  }
};

struct SchedulerSetup {
  ZoneSpec zone;
  SchedulerWeights weights;
  HorizonSpec horizon;
  SolverOptions solver;
  std::vector<int> output_nodes;  // full-order node ids whose heads are constrained
  double accurate_days = 7.0;     // Ts: forecast horizon trusted at solve time

  void validate(int n_full) const {
    zone.validate();
    weights.validate();
    horizon.validate();
    solver.validate();
    if (output_nodes.empty()) throw ShapeError("scheduler: no output nodes configured");
    for (int id : output_nodes)
      if (id < 0 || id >= n_full) throw ShapeError("scheduler: output node out of range");
    if (!(accurate_days > 0.0)) throw ParameterError("scheduler: accurate_days must be > 0");
  }
};

// Variable-time irrigation scheduling over the reduced model: decides how hard
// to water now (u1), how long to wait (T), and how hard to water next (u3) by
// minimizing predicted yield loss, water use and zone excursions minus a
// reward for waiting longer.
class Scheduler {
 public:
  Scheduler(const ReducedModel& model, SchedulerSetup setup) : model_(&model), setup_(std::move(setup)) {
    setup_.validate(model.full().grid().size());
  }

  const SchedulerSetup& setup() const { return setup_; }
  const ReducedModel& model() const { return *model_; }

  // Integrates the reduced model through the three segments, recording lifted
  // heads at the output nodes and the mean stress factor at each of the
  // N1+N2+N3 sample times. Fills outputs/sample_times of `dec`.
  void rollout_horizon(const std::vector<double>& xi0, ScheduleDecision& dec, double t0,
                       const WeatherFn& weather) const {
    check_decision_shape(dec);
    const HorizonSpec& hz = setup_.horizon;
    const int n_out = static_cast<int>(setup_.output_nodes.size());
    const int n_samples = hz.total_samples();
    dec.outputs = Matrix(n_samples, n_out);
    dec.sample_times.assign(n_samples, 0.0);
    dec.stress.assign(n_samples, 0.0);
    dec.ky.assign(n_samples, 0.0);

    std::vector<double> xi = xi0;
    int row = 0;
    const double t1 = t0 + hz.event_duration;            // end of leading event
    const double t2 = t1 + dec.t_dry;                    // end of dry spell
    const double t3 = t2 + hz.event_duration;            // end of trailing event
    record_segment(xi, dec.u1, true, weather, t0, t1, hz.n1, dec, row);
    record_segment(xi, {}, false, weather, t1, t2, hz.n2, dec, row);
    record_segment(xi, dec.u3, true, weather, t2, t3, hz.n3, dec, row);
  }

  // Cost of an evaluated decision. Slacks are the analytic optimum of the
  // quadratic penalty: eps_upper = max(0, y - cons_upper),
  // eps_lower = max(0, cons_lower - y), per output and step.
  void score(ScheduleDecision& dec) const {
    const SchedulerWeights& w = setup_.weights;
    const HorizonSpec& hz = setup_.horizon;
    const int n_out = static_cast<int>(setup_.output_nodes.size());
    const int n_samples = hz.total_samples();
    dec.slack_upper = Matrix(n_samples, n_out);
    dec.slack_lower = Matrix(n_samples, n_out);
    double su = 0.0, sl = 0.0;
    for (int s = 0; s < n_samples; ++s)
      for (int o = 0; o < n_out; ++o) {
        const double y = dec.outputs.at(s, o);
        const double eu = std::max(0.0, y - setup_.zone.cons_upper);
        const double el = std::max(0.0, setup_.zone.cons_lower - y);
        dec.slack_upper.at(s, o) = eu;
        dec.slack_lower.at(s, o) = el;
        su += eu * eu;
        sl += el * el;
      }
    if (static_cast<int>(dec.stress.size()) != n_samples || static_cast<int>(dec.ky.size()) != n_samples)
      throw ShapeError("score: decision has not been rolled out");
    double deficiency = 0.0;
    for (int s = 0; s < n_samples; ++s) deficiency += dec.ky[s] * (1.0 - dec.stress[s]);
    dec.deficiency = deficiency;

    double water = 0.0;
    for (double u : dec.u1) water += u;
    water *= hz.n1;
    double w3 = 0.0;
    for (double u : dec.u3) w3 += u;
    water += w3 * hz.n3;

    dec.cost.yield = w.q_yield * deficiency * deficiency;
    dec.cost.water = w.q_water * water;
    dec.cost.time = w.q_time * hz.n2 * dec.t_dry / hz.t_ub;
    dec.cost.slack_upper = w.q_upper * su;
    dec.cost.slack_lower = w.q_lower * sl;
    dec.cost.total = dec.cost.yield + dec.cost.water - dec.cost.time + dec.cost.slack_upper + dec.cost.slack_lower;
  }

  double evaluate(const std::vector<double>& xi0, ScheduleDecision& dec, double t0, const WeatherFn& weather) const {
    rollout_horizon(xi0, dec, t0, weather);
    score(dec);
    return dec.cost.total;
  }

  // Bilevel minimization: an outer bounded search over the dry-spell length T
  // (multistart seeds plus golden-section refinement of the best bracket) and
  // an inner projected-gradient descent over the 2*nr event rates with
  // central-difference gradients. Deterministic throughout.
  ScheduleDecision solve_event(const std::vector<double>& xi0, double t0, const WeatherFn& weather) const {
    for (double v : xi0)
      if (!std::isfinite(v)) throw ParameterError("solve_event: non-finite reduced state");
    const HorizonSpec& hz = setup_.horizon;
    const SolverOptions& opt = setup_.solver;
    const PivotConfig& pivot = model_->full().pivot();
    if (!(pivot.u_max > pivot.u_min))
      // nothing to optimize over; a fixed-rate decision is still well-defined
      return solve_fixed_rates(xi0, t0, weather);

    int failures = 0, evals = 0;
    auto inner = [&](double t_dry, const std::vector<double>* warm) {
      return inner_solve(xi0, t_dry, t0, weather, warm, failures, evals);
    };

    // outer seeds, warm-starting each from the previous seed's optimum
    struct Best {
      double t_dry;
      std::vector<double> v;
      double cost;
    };
    std::vector<Best> seeds;
    Best global{0.0, {}, std::numeric_limits<double>::infinity()};
    for (int s = 0; s < opt.outer_seeds; ++s) {
      const double frac = static_cast<double>(s) / (opt.outer_seeds - 1);
      const double t_dry = hz.t_lb + frac * (hz.t_ub - hz.t_lb);
      auto [v, cost] = inner(t_dry, seeds.empty() ? nullptr : &seeds.back().v);
      seeds.push_back({t_dry, v, cost});
      if (cost < global.cost) global = seeds.back();
    }
    if (!std::isfinite(global.cost))
      throw SchedulingError("solve_event: every rollout failed to integrate (" + std::to_string(failures) + " of " +
                            std::to_string(evals) + " evaluations)");

    // golden-section refinement around the best seed
    int best_idx = 0;
    for (size_t s = 1; s < seeds.size(); ++s)
      if (seeds[s].cost < seeds[best_idx].cost) best_idx = static_cast<int>(s);
    double lo = seeds[std::max(0, best_idx - 1)].t_dry;
    double hi = seeds[std::min<int>(static_cast<int>(seeds.size()) - 1, best_idx + 1)].t_dry;
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - golden * (hi - lo);
    double x2 = lo + golden * (hi - lo);
    auto eval_at = [&](double t_dry) {
      auto [v, cost] = inner(t_dry, &global.v);
      if (cost < global.cost) global = {t_dry, v, cost};
      return cost;
    };
    double f1 = eval_at(x1);
    double f2 = eval_at(x2);
    for (int it = 0; it < opt.outer_golden_iters && (hi - lo) > opt.outer_tol_s; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - golden * (hi - lo);
        f1 = eval_at(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + golden * (hi - lo);
        f2 = eval_at(x2);
      }
    }

    ScheduleDecision dec = decision_from(global.v, global.t_dry);
    evaluate(xi0, dec, t0, weather);
    return dec;
  }

  // First time (days) after one irrigation pass at `u_rate` on every ring at
  // which the mean output-node head of the full model drains below the
  // conservative lower bound. Returns the cap with crossed=false if it never
  // does.
  struct DrainResult {
    double days;
    bool crossed;
  };

  DrainResult days_to_zone(const std::vector<double>& x0, double u_rate, const WeatherFn& weather,
                           double cap_days = 90.0) const {
    const FieldModel& plant = model_->full();
    const PivotConfig& pivot = plant.pivot();
    if (!(u_rate >= pivot.u_min && u_rate <= pivot.u_max)) throw ParameterError("days_to_zone: rate out of bounds");
    const double event = setup_.horizon.event_duration;
    SprinklerSchedule schedule;
    if (u_rate > 0.0)
      schedule = SprinklerSchedule::single_event(0.0, event, std::vector<double>(plant.grid().nr(), u_rate));
    const double bound = setup_.zone.cons_lower;
    const double dt_probe = 0.125 * kSecondsPerDay;
    std::vector<double> x = x0;
    double prev_head = plant.mean_head(x, setup_.output_nodes);
    if (prev_head < bound) return {0.0, true};
    double t = 0.0;
    const double t_cap = cap_days * kSecondsPerDay;
    const std::vector<double> zeros(plant.grid().nr(), 0.0);
    while (t < t_cap) {
      const double t_next = std::min(t + dt_probe, t_cap);
      const int day = FieldModel::day_of(t + 1e-6);
      const std::vector<double>* rates = schedule.rates_at(t + 1e-6);
      // segment ends never straddle probe samples: event duration is a
      // multiple of nothing here, so split at the event edge explicitly
      double t_mid = t_next;
      if (rates && schedule.next_edge_after(t + 1e-6) < t_next) t_mid = schedule.next_edge_after(t + 1e-6);
      plant.step(x, rates ? *rates : zeros, rates != nullptr, weather(day), t, t_mid - t);
      if (t_mid < t_next) {
        const std::vector<double>* r2 = schedule.rates_at(t_mid + 1e-6);
        plant.step(x, r2 ? *r2 : zeros, r2 != nullptr, weather(day), t_mid, t_next - t_mid);
      }
      const double head = plant.mean_head(x, setup_.output_nodes);
      if (head < bound) {
        // linear interpolation inside the probe interval
        const double f = (prev_head - bound) / (prev_head - head);
        return {(t + f * (t_next - t)) / kSecondsPerDay, true};
      }
      prev_head = head;
      t = t_next;
    }
    return {cap_days, false};
  }

 private:
  void check_decision_shape(const ScheduleDecision& dec) const {
    const int nr = model_->full().grid().nr();
    if (static_cast<int>(dec.u1.size()) != nr || static_cast<int>(dec.u3.size()) != nr)
      throw ShapeError("decision: need one rate per ring for u1 and u3");
    const PivotConfig& pivot = model_->full().pivot();
    for (double u : dec.u1)
      if (!(u >= pivot.u_min - 1e-15 && u <= pivot.u_max + 1e-15)) throw ParameterError("decision: u1 out of bounds");
    for (double u : dec.u3)
      if (!(u >= pivot.u_min - 1e-15 && u <= pivot.u_max + 1e-15)) throw ParameterError("decision: u3 out of bounds");
    if (!(dec.t_dry >= setup_.horizon.t_lb - 1e-9 && dec.t_dry <= setup_.horizon.t_ub + 1e-9))
      throw ParameterError("decision: T out of bounds");
  }

  // advances xi from t_a to t_b sampling `count` outputs at evenly spaced
  // times (t_a excluded, t_b included)
  void record_segment(std::vector<double>& xi, const std::vector<double>& rates, bool emitting,
                      const WeatherFn& weather, double t_a, double t_b, int count, ScheduleDecision& dec,
                      int& row) const {
    const CropCalendar& cal = model_->full().calendar();
    const std::vector<double> zeros(model_->full().grid().nr(), 0.0);
    const std::vector<double>& r = emitting ? rates : zeros;
    thread_local std::vector<double> lifted;
    lifted.resize(model_->projection().full_dim());
    for (int s = 1; s <= count; ++s) {
      const double target = t_a + (t_b - t_a) * s / count;
      advance(xi, r, emitting, weather, t_a + (t_b - t_a) * (s - 1) / count, target);
      model_->projection().lift(std::span<const double>(xi), std::span<double>(lifted));
      for (size_t o = 0; o < setup_.output_nodes.size(); ++o)
        dec.outputs.at(row, static_cast<int>(o)) = lifted[setup_.output_nodes[o]];
      dec.sample_times[row] = target;
      dec.stress[row] = model_->full().mean_stress(lifted, setup_.output_nodes);
      dec.ky[row] = cal.at(FieldModel::day_of(target)).ky;
      ++row;
    }
  }

  // one constant-command window, split at day boundaries for weather/crop
  void advance(std::vector<double>& xi, const std::vector<double>& rates, bool emitting, const WeatherFn& weather,
               double t_a, double t_b) const {
    double t = t_a;
    while (t < t_b - 1e-9) {
      const int day = FieldModel::day_of(t + 1e-9);
      const double t_next = std::min(t_b, (day + 1) * kSecondsPerDay);
      model_->step(xi, rates, emitting, weather(day), t, t_next - t);
      t = t_next;
    }
  }

  ScheduleDecision decision_from(const std::vector<double>& v, double t_dry) const {
    const int nr = model_->full().grid().nr();
    const PivotConfig& pivot = model_->full().pivot();
    ScheduleDecision dec;
    dec.u1.resize(nr);
    dec.u3.resize(nr);
    for (int i = 0; i < nr; ++i) {
      dec.u1[i] = pivot.u_min + v[i] * (pivot.u_max - pivot.u_min);
      dec.u3[i] = pivot.u_min + v[nr + i] * (pivot.u_max - pivot.u_min);
    }
    dec.t_dry = t_dry;
    return dec;
  }

  ScheduleDecision solve_fixed_rates(const std::vector<double>& xi0, double t0, const WeatherFn& weather) const {
    // degenerate box: u is pinned; only T is searched
    const HorizonSpec& hz = setup_.horizon;
    ScheduleDecision best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int s = 0; s < setup_.solver.outer_seeds; ++s) {
      const double frac = static_cast<double>(s) / (setup_.solver.outer_seeds - 1);
      ScheduleDecision dec = decision_from(std::vector<double>(2 * model_->full().grid().nr(), 0.0),
                                           hz.t_lb + frac * (hz.t_ub - hz.t_lb));
      const double cost = evaluate(xi0, dec, t0, weather);
      if (cost < best_cost) {
        best_cost = cost;
        best = dec;
      }
    }
    return best;
  }

  // projected-gradient descent over normalized rates v in [0,1]^(2nr)
  std::pair<std::vector<double>, double> inner_solve(const std::vector<double>& xi0, double t_dry, double t0,
                                                     const WeatherFn& weather, const std::vector<double>* warm,
                                                     int& failures, int& evals) const {
    const SolverOptions& opt = setup_.solver;
    const int dim = 2 * model_->full().grid().nr();
    auto cost_of = [&](const std::vector<double>& v) {
      ++evals;
      ScheduleDecision dec = decision_from(v, t_dry);
      try {
        return evaluate(xi0, dec, t0, weather);
      } catch (const NumericError&) {
        ++failures;
        return std::numeric_limits<double>::infinity();
      }
    };

    std::vector<std::vector<double>> starts;
    if (warm && static_cast<int>(warm->size()) == dim) starts.push_back(*warm);
    starts.emplace_back(dim, 0.0);
    starts.emplace_back(dim, 0.5);

    std::vector<double> best_v = starts.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (auto& v : starts) {
      double cost = cost_of(v);
      for (int it = 0; it < opt.inner_iters; ++it) {
        // central-difference gradient, clamped to the box
        std::vector<double> g(dim, 0.0);
        double gmax = 0.0;
        for (int i = 0; i < dim; ++i) {
          std::vector<double> vp = v, vm = v;
          vp[i] = std::min(1.0, v[i] + opt.fd_step);
          vm[i] = std::max(0.0, v[i] - opt.fd_step);
          if (vp[i] == vm[i]) continue;
          g[i] = (cost_of(vp) - cost_of(vm)) / (vp[i] - vm[i]);
          gmax = std::max(gmax, std::abs(g[i]));
        }
        if (gmax == 0.0) break;
        double step = 0.25 / gmax;  // largest component moves 0.25 first
        bool improved = false;
        for (int half = 0; half <= opt.line_search_halvings; ++half) {
          std::vector<double> trial(dim);
          for (int i = 0; i < dim; ++i) trial[i] = std::clamp(v[i] - step * g[i], 0.0, 1.0);
          const double trial_cost = cost_of(trial);
          if (trial_cost < cost) {
            const double rel = (cost - trial_cost) / std::max(1e-30, std::abs(cost));
            v = std::move(trial);
            cost = trial_cost;
            improved = rel >= opt.inner_rel_tol;
            break;
          }
          step *= 0.5;
        }
        if (!improved) break;
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_v = v;
      }
    }
    return {best_v, best_cost};
  }

  const ReducedModel* model_;
  SchedulerSetup setup_;
};

struct SeasonConfig {
  int days = 20;
  double log_dt_s = 21600.0;  // plant trajectory sampling
  std::vector<double> x0;     // full-order initial heads

  void validate() const {
    if (days < 1) throw ParameterError("season: need at least 1 day");
    if (!(log_dt_s > 0.0)) throw ParameterError("season: log_dt_s must be > 0");
  }
};

// One row of the closed-loop log: a solve instant, what was commanded, and
// what happened to the field until the next solve.
struct EventRecord {
  int event_index = 0;
  double t_start_s = 0.0;
  std::vector<double> u_rates;           // commanded leading-event rates
  double t_chosen_s = 0.0;               // optimizer's dry-spell choice
  double water_m3 = 0.0;                 // water delivered by this event
  double deficiency_increment = 0.0;     // yield deficiency accrued this window
  double min_rootzone_head = 0.0;        // driest output node seen this window
};

struct SeasonResult {
  std::vector<EventRecord> events;
  Trajectory plant;                   // full-order states every log_dt_s
  std::vector<double> daily_stress;   // mean output-node stress at each day end
  std::vector<double> daily_ky;
  double total_deficiency = 0.0;
  double irrigation_m3 = 0.0;
  MassLedger ledger;
};

// Receding-horizon closed loop: at each solve instant the full-order plant
// state is projected down, an event is optimized on the reduced model against
// the blended forecast, its leading pass is applied to the plant, and the next
// solve happens after the pass plus the chosen dry spell — capped at the
// trusted-forecast horizon Ts, so stale long-term weather is never ridden for
// longer than it is believed.
inline SeasonResult run_season(const FieldModel& plant, const Scheduler& scheduler, const WeatherSeries& weather,
                               const SeasonConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(cfg.x0.size()) != plant.grid().size())
    throw ShapeError("season: x0 size does not match grid");
  const double season_end = cfg.days * kSecondsPerDay;
  const Projection& proj = scheduler.model().projection();
  const std::vector<int>& out_nodes = scheduler.setup().output_nodes;
  const double event_s = scheduler.setup().horizon.event_duration;
  const double ts_s = scheduler.setup().accurate_days * kSecondsPerDay;
  const int ts_days = static_cast<int>(std::llround(scheduler.setup().accurate_days));
  const WeatherFn observed = weather.observed_fn();
  const std::vector<double> zeros(plant.grid().nr(), 0.0);
  const double time_eps = 1e-6;

  SeasonResult res;
  std::vector<double> x = cfg.x0;
  res.plant.times.push_back(0.0);
  res.plant.states.push_back(x);
  double t = 0.0;
  long sample = 1;
  double next_sample = cfg.log_dt_s;
  int next_day_end = 1;
  int event_index = 0;

  while (t < season_end - time_eps) {
    const ScheduleDecision dec =
        scheduler.solve_event(proj.reduce(x), t, weather.forecast_from(FieldModel::day_of(t + time_eps), ts_days));
    const double window_end = std::min(season_end, t + event_s + std::min(dec.t_dry, ts_s));

    SprinklerSchedule schedule;
    double water = 0.0;
    const bool emits = *std::max_element(dec.u1.begin(), dec.u1.end()) > 0.0;
    if (emits) {
      schedule = SprinklerSchedule::single_event(t, event_s, dec.u1);
      double instantaneous = 0.0;  // m^3/s while the pass runs (one sector wet at a time)
      for (int i = 0; i < plant.grid().nr(); ++i) instantaneous += dec.u1[i] * plant.grid().horizontal_area(i);
      water = instantaneous * (std::min(window_end, t + event_s) - t);
    }

    EventRecord rec;
    rec.event_index = event_index++;
    rec.t_start_s = t;
    rec.u_rates = dec.u1;
    rec.t_chosen_s = dec.t_dry;
    rec.water_m3 = water;
    auto min_out = [&]() {
      double m = std::numeric_limits<double>::infinity();
      for (int id : out_nodes) m = std::min(m, x[id]);
      return m;
    };
    rec.min_rootzone_head = min_out();

    while (t < window_end - time_eps) {
      const int day = FieldModel::day_of(t + time_eps);
      double t_next = std::min(window_end, (day + 1) * kSecondsPerDay);
      t_next = std::min(t_next, schedule.next_edge_after(t + time_eps));
      t_next = std::min(t_next, next_sample);
      const std::vector<double>* rates = schedule.rates_at(t + time_eps);
      plant.step(x, rates ? *rates : zeros, rates != nullptr, observed(day), t, t_next - t, &res.ledger);
      t = t_next;
      rec.min_rootzone_head = std::min(rec.min_rootzone_head, min_out());
      if (std::abs(t - next_sample) <= time_eps) {
        res.plant.times.push_back(t);
        res.plant.states.push_back(x);
        ++sample;
        next_sample = sample * cfg.log_dt_s;
      }
      if (std::abs(t - next_day_end * kSecondsPerDay) <= time_eps) {
        const double stress = plant.mean_stress(x, out_nodes);
        const double ky = plant.calendar().at(next_day_end - 1).ky;
        res.daily_stress.push_back(stress);
        res.daily_ky.push_back(ky);
        rec.deficiency_increment += ky * (1.0 - stress);
        ++next_day_end;
      }
    }
    res.events.push_back(std::move(rec));
    res.irrigation_m3 += water;
  }

  res.total_deficiency = yield_deficiency(res.daily_ky, res.daily_stress);
  return res;
}

}  // namespace pivotsched

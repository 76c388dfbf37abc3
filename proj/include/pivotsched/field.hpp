#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pivotsched/common.hpp"
#include "pivotsched/crop.hpp"
#include "pivotsched/grid.hpp"
#include "pivotsched/soil.hpp"

namespace pivotsched {

// Center-pivot geometry and actuation limits. The pivot arm sweeps the field
// once per rotation period; while an irrigation event is active, the arm's
// sprinklers wet exactly one angular sector at a time, one commanded rate per
// ring. phase_offset_s shifts where the arm is at t = 0.
struct PivotConfig {
  double rotation_period_s = 28800.0;
  double phase_offset_s = 0.0;
  double u_min = 0.0;    // m/s
  double u_max = 4e-7;   // m/s

  void validate() const {
    if (!(rotation_period_s > 0.0)) throw ParameterError("pivot: rotation period must be > 0");
    if (!(u_min >= 0.0 && u_max >= u_min)) throw ParameterError("pivot: need 0 <= u_min <= u_max");
  }
};

// Explicit-Euler sub-step controller: each sub-step is capped so no head moves
// more than dh_max, and by a conservative linear-stability bound derived from
// the current conductances. Falling below dt_min means the problem is too
// stiff for the explicit scheme at this state and raises NumericError.
struct StepControl {
  double dh_max = 0.05;   // m
  double dt_min = 1e-3;   // s
  double safety = 0.9;    // fraction of the stability bound actually used

  void validate() const {
    if (!(dh_max > 0.0)) throw ParameterError("step control: dh_max must be > 0");
    if (!(dt_min > 0.0)) throw ParameterError("step control: dt_min must be > 0");
    if (!(safety > 0.0 && safety <= 1.0)) throw ParameterError("step control: safety must lie in (0, 1]");
  }
};

enum class BottomBoundary {
  kFreeDrainage,  // unit-gradient outflow q = -K(h) at the column base
  kSealed,        // zero flux (useful for conservation checks)
};

// Instantaneous boundary/sink rates, all positive, in m^3/s over the field.
struct FluxDiag {
  double surface_in = 0.0;  // irrigation + rain entering the surface
  double bottom_out = 0.0;  // drainage leaving through the bottom
  double sink = 0.0;        // root extraction
};

// Time-integrated water volumes, m^3.
struct MassLedger {
  double surface_in = 0.0;
  double bottom_out = 0.0;
  double sink_out = 0.0;
};

// Piecewise-constant sprinkler commands: within each segment the pivot emits
// rates[i] on ring i (applied to whichever sector the arm currently covers).
// Outside all segments the sprinklers are off.
class SprinklerSchedule {
 public:
  struct Segment {
    double t_begin;
    double t_end;
    std::vector<double> rates;  // per ring, m/s
  };

  static SprinklerSchedule off() { return {}; }

  static SprinklerSchedule single_event(double t_begin, double duration, std::vector<double> rates) {
    SprinklerSchedule s;
    s.add({t_begin, t_begin + duration, std::move(rates)});
    return s;
  }

  void add(Segment seg) {
    if (!(seg.t_end > seg.t_begin)) throw ParameterError("schedule: segment must have positive duration");
    if (seg.rates.empty()) throw ShapeError("schedule: segment has no ring rates");
    for (double r : seg.rates)
      if (!(r >= 0.0) || !std::isfinite(r)) throw ParameterError("schedule: rates must be finite and >= 0");
    if (!segments_.empty() && seg.t_begin < segments_.back().t_end - 1e-9)
      throw ParameterError("schedule: segments must be added in order and must not overlap");
    segments_.push_back(std::move(seg));
  }

  const std::vector<Segment>& segments() const { return segments_; }

  // Active rates at time t (segments are half-open: [t_begin, t_end)).
  const std::vector<double>* rates_at(double t) const {
    for (const auto& s : segments_)
      if (t >= s.t_begin && t < s.t_end) return &s.rates;
    return nullptr;
  }

  // First segment boundary strictly after t, or +inf.
  double next_edge_after(double t) const {
    for (const auto& s : segments_) {
      if (s.t_begin > t) return s.t_begin;
      if (s.t_end > t) return s.t_end;
    }
    return std::numeric_limits<double>::infinity();
  }

 private:
  std::vector<Segment> segments_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
};

using WeatherFn = std::function<Forcing(int day)>;

inline WeatherFn no_weather() {
  return [](int) { return Forcing{}; };
}

namespace detail {

inline int day_index(double t) { return std::max(0, static_cast<int>(std::floor(t / kSecondsPerDay))); }

// Shared driver for full- and reduced-order runs: walks from t_begin over the
// horizon, splitting windows at day boundaries, schedule edges and sample
// times, and records the state at every sample time (initial state included).
// `do_step` advances the state vector over one window of constant commands.
template <typename StepFn>
Trajectory simulate_loop(std::vector<double> x, const SprinklerSchedule& schedule, const WeatherFn& weather,
                         double t_begin, double horizon, double dt_sample, int n_rings, StepFn&& do_step) {
  if (!(horizon >= 0.0)) throw ParameterError("simulate: horizon must be >= 0");
  if (!(dt_sample > 0.0)) throw ParameterError("simulate: dt_sample must be > 0");
  Trajectory traj;
  traj.times.push_back(t_begin);
  traj.states.push_back(x);
  const double t_end = t_begin + horizon;
  const double time_eps = 1e-6;
  double t = t_begin;
  long sample = 1;
  double next_sample = t_begin + dt_sample;
  const std::vector<double> zeros(n_rings, 0.0);
  while (t < t_end - time_eps) {
    const int day = day_index(t + time_eps);
    const double day_end = (day + 1) * kSecondsPerDay;
    double t_next = std::min(t_end, day_end);
    t_next = std::min(t_next, schedule.next_edge_after(t + time_eps));
    if (next_sample <= t_end + time_eps) t_next = std::min(t_next, next_sample);
    const std::vector<double>* rates = schedule.rates_at(t + time_eps);
    do_step(x, rates ? std::span<const double>(*rates) : std::span<const double>(zeros), rates != nullptr, weather(day),
            t, t_next - t);
    t = t_next;
    if (std::abs(t - next_sample) <= time_eps) {
      traj.times.push_back(t);
      traj.states.push_back(x);
      ++sample;
      next_sample = t_begin + sample * dt_sample;
    }
  }
  return traj;
}

}  // namespace detail

// Pressure-head dynamics of the irrigated field: finite-volume discretization
// of variably saturated flow on the cylindrical grid, with gravity, a rotating
// surface input, free drainage (or a sealed base), and a stress-modulated root
// sink. State vector x holds the pressure head (m) of every node.
class FieldModel {
 public:
  FieldModel(CylGrid grid, SoilMap soil, CropCalendar calendar, FeddesParams feddes = {}, PivotConfig pivot = {},
             BottomBoundary bottom = BottomBoundary::kFreeDrainage, StepControl control = {})
      : grid_(grid),
        soil_(std::move(soil)),
        calendar_(std::move(calendar)),
        feddes_(feddes),
        pivot_(pivot),
        bottom_(bottom),
        control_(control) {
    if (soil_.node_count() != grid_.size())
      throw ShapeError("field: soil map covers " + std::to_string(soil_.node_count()) + " nodes, grid has " +
                       std::to_string(grid_.size()));
    feddes_.validate();
    pivot_.validate();
    control_.validate();
    calendar_.validate();
  }

  const CylGrid& grid() const { return grid_; }
  const SoilMap& soil() const { return soil_; }
  const CropCalendar& calendar() const { return calendar_; }
  const FeddesParams& feddes() const { return feddes_; }
  const PivotConfig& pivot() const { return pivot_; }
  BottomBoundary bottom() const { return bottom_; }
  const StepControl& control() const { return control_; }

  // Sector currently under the pivot arm. The arm advances one sector every
  // dwell_s() and returns to sector 0 each full rotation.
  int active_sector(double t) const {
    double frac = std::fmod((t - pivot_.phase_offset_s) / pivot_.rotation_period_s, 1.0);
    if (frac < 0.0) frac += 1.0;
    int s = static_cast<int>(frac * grid_.ntheta());
    return std::min(s, grid_.ntheta() - 1);
  }

  double dwell_s() const { return pivot_.rotation_period_s / grid_.ntheta(); }

  // Surface nodes currently wettable by the arm (ring order) and the rate
  // bounds that apply to them; all other surface nodes are pinned to zero.
  struct InputMask {
    int sector;
    std::vector<int> surface_nodes;  // node ids, one per ring
    double u_min;
    double u_max;
  };

  InputMask pivot_input_mask(double t) const {
    InputMask m;
    m.sector = active_sector(t);
    m.u_min = pivot_.u_min;
    m.u_max = pivot_.u_max;
    m.surface_nodes.reserve(grid_.nr());
    for (int i = 0; i < grid_.nr(); ++i) m.surface_nodes.push_back(grid_.surface_node(i, m.sector));
    return m;
  }

  // Time derivative of the head field. `rates` holds one commanded rate per
  // ring; they reach the surface only when `emitting` is true and only in the
  // active sector. Rain wets the whole surface. Optionally reports the
  // instantaneous boundary/sink rates and a stable explicit step size.
  void rhs(std::span<const double> x, std::span<const double> rates, bool emitting, const Forcing& forcing, double t,
           std::span<double> dxdt, FluxDiag* diag = nullptr, double* stable_dt = nullptr) const {
    const int n = grid_.size();
    if (static_cast<int>(x.size()) != n || static_cast<int>(dxdt.size()) != n)
      throw ShapeError("rhs: state size does not match grid");
    if (static_cast<int>(rates.size()) != grid_.nr()) throw ShapeError("rhs: need one rate per ring");
    for (int id = 0; id < n; ++id)
      if (!std::isfinite(x[id]))
        throw NumericError("rhs: non-finite head at node " + std::to_string(id));
    if (!(forcing.rain >= 0.0) || !(forcing.pet >= 0.0)) throw ParameterError("rhs: forcing rates must be >= 0");
    for (double r : rates)
      if (!(r >= 0.0)) throw ParameterError("rhs: ring rates must be >= 0");

    thread_local std::vector<double> K, c, net, cond;
    K.resize(n);
    c.resize(n);
    net.assign(n, 0.0);            // net volumetric inflow, m^3/s
    const bool want_dt = stable_dt != nullptr;
    cond.assign(want_dt ? n : 0, 0.0);  // sum of face conductances, m^2/s

    for (int id = 0; id < n; ++id) {
      HydraulicState hs = evaluate_hydraulics(x[id], soil_.at(id));
      K[id] = hs.K;
      c[id] = hs.c;
    }

    const int nr = grid_.nr(), ntheta = grid_.ntheta(), nz = grid_.nz();
    const double dr = grid_.dr(), dz = grid_.dz();

    auto add_face = [&](int a, int b, double flux_ab, double conductance) {
      // flux_ab > 0 moves water from cell a to cell b
      net[a] -= flux_ab;
      net[b] += flux_ab;
      if (want_dt) {
        cond[a] += conductance;
        cond[b] += conductance;
      }
    };

    // radial faces between rings i-1 and i (the axis face has zero area, the
    // outer rim is a no-flow boundary)
    for (int i = 1; i < nr; ++i) {
      const double area = grid_.radial_face_area(i);
      for (int j = 0; j < ntheta; ++j)
        for (int k = 0; k < nz; ++k) {
          const int a = grid_.id(i - 1, j, k), b = grid_.id(i, j, k);
          const double km = 0.5 * (K[a] + K[b]);
          add_face(a, b, -km * (x[b] - x[a]) / dr * area, km * area / dr);
        }
    }

    // azimuthal faces between sector j and j+1 (periodic)
    if (ntheta > 1) {
      const double area = grid_.azimuthal_face_area();
      for (int i = 0; i < nr; ++i) {
        const double spacing = grid_.azimuthal_spacing(i);
        for (int j = 0; j < ntheta; ++j) {
          const int jn = (j + 1) % ntheta;
          for (int k = 0; k < nz; ++k) {
            const int a = grid_.id(i, j, k), b = grid_.id(i, jn, k);
            const double km = 0.5 * (K[a] + K[b]);
            add_face(a, b, -km * (x[b] - x[a]) / spacing * area, km * area / spacing);
          }
        }
      }
    }

    // vertical faces, gravity included: upward flux q = -K (dh/dz + 1)
    const int day = day_of(t);
    const CropCalendar::Day& crop = calendar_.at(day);
    const EtSplit et = et_split(forcing.pet, crop.kc, crop.lai);
    thread_local std::vector<double> root_w;
    root_w = root_layer_weights(dz, nz, crop.root_depth);

    const int active = active_sector(t);
    FluxDiag local;
    for (int i = 0; i < nr; ++i) {
      const double area = grid_.horizontal_area(i);
      const double volume = grid_.cell_volume(i);
      for (int j = 0; j < ntheta; ++j) {
        for (int k = 0; k + 1 < nz; ++k) {
          const int a = grid_.id(i, j, k), b = grid_.id(i, j, k + 1);
          const double km = 0.5 * (K[a] + K[b]);
          const double q_up = -km * ((x[b] - x[a]) / dz + 1.0);
          add_face(a, b, q_up * area, km * area / dz);
        }
        // bottom face
        const int base = grid_.id(i, j, 0);
        if (bottom_ == BottomBoundary::kFreeDrainage) {
          const double q_out = K[base];  // downward, unit gradient
          net[base] -= q_out * area;
          local.bottom_out += q_out * area;
          if (want_dt) cond[base] += K[base] * area / dz;
        }
        // surface face: commanded irrigation (active sector only) plus rain
        const int top = grid_.id(i, j, nz - 1);
        const double u_eff = (emitting && j == active) ? rates[i] : 0.0;
        const double q_in = u_eff + forcing.rain;
        net[top] += q_in * area;
        local.surface_in += q_in * area;
        // root sink
        if (et.tp > 0.0) {
          for (int k = 0; k < nz; ++k) {
            const double w = root_w[nz - 1 - k];
            if (w <= 0.0) continue;
            const int id = grid_.id(i, j, k);
            const double s = stress_factor(x[id], feddes_) * et.tp * w / dz;  // 1/s
            net[id] -= s * volume;
            local.sink += s * volume;
          }
        }
      }
    }

    for (int id = 0; id < n; ++id) {
      const int i = grid_.node(id).i;
      dxdt[id] = net[id] / (c[id] * grid_.cell_volume(i));
    }
    if (diag) *diag = local;
    if (want_dt) {
      double dt = std::numeric_limits<double>::infinity();
      for (int id = 0; id < n; ++id) {
        if (cond[id] <= 0.0) continue;
        const int i = grid_.node(id).i;
        dt = std::min(dt, c[id] * grid_.cell_volume(i) / cond[id]);
      }
      *stable_dt = control_.safety * dt;
    }
  }

  // Advances the state over [t_begin, t_begin + duration] under constant
  // forcing and commands, sub-stepping as required by the controller and
  // splitting exactly at pivot sector changes.
  void step(std::vector<double>& x, std::span<const double> rates, bool emitting, const Forcing& forcing,
            double t_begin, double duration, MassLedger* ledger = nullptr) const {
    if (!(duration >= 0.0)) throw ParameterError("step: duration must be >= 0");
    const double t_end = t_begin + duration;
    const bool sector_matters =
        emitting && grid_.ntheta() > 1 && std::any_of(rates.begin(), rates.end(), [](double r) { return r > 0.0; });
    thread_local std::vector<double> dxdt;
    dxdt.resize(x.size());
    double t = t_begin;
    const double time_eps = 1e-9 * std::max(1.0, std::abs(t_end));
    while (t < t_end - time_eps) {
      double t_next = t_end;
      if (sector_matters) {
        const double dwell = dwell_s();
        const double phase = t - pivot_.phase_offset_s;
        double boundary = (std::floor(phase / dwell) + 1.0) * dwell + pivot_.phase_offset_s;
        if (boundary <= t + time_eps) boundary += dwell;
        t_next = std::min(t_next, boundary);
      }
      FluxDiag diag;
      double stable_dt = std::numeric_limits<double>::infinity();
      rhs(x, rates, emitting, forcing, t, dxdt, ledger ? &diag : nullptr, &stable_dt);
      double max_rate = 0.0;
      for (double d : dxdt) max_rate = std::max(max_rate, std::abs(d));
      const double window = t_next - t;
      double dt = window;
      if (max_rate > 0.0) dt = std::min(dt, control_.dh_max / max_rate);
      dt = std::min(dt, stable_dt);
      if (dt < window && dt < control_.dt_min)
        throw NumericError("step: required sub-step " + std::to_string(dt) + " s fell below the floor " +
                           std::to_string(control_.dt_min) + " s at t = " + std::to_string(t) +
                           " s; the state is too stiff for the explicit scheme");
      for (size_t id = 0; id < x.size(); ++id) x[id] += dt * dxdt[id];
      if (ledger) {
        ledger->surface_in += diag.surface_in * dt;
        ledger->bottom_out += diag.bottom_out * dt;
        ledger->sink_out += diag.sink * dt;
      }
      t += dt;
    }
  }

  // Runs the model from t_begin for `horizon` seconds under a sprinkler
  // schedule and daily weather, recording the state every dt_sample seconds
  // (including the initial state). Weather and crop properties change at day
  // boundaries; the integrator splits windows there.
  Trajectory simulate(std::vector<double> x, const SprinklerSchedule& schedule, const WeatherFn& weather,
                      double t_begin, double horizon, double dt_sample, MassLedger* ledger = nullptr) const {
    if (static_cast<int>(x.size()) != grid_.size()) throw ShapeError("simulate: state size does not match grid");
    return detail::simulate_loop(std::move(x), schedule, weather, t_begin, horizon, dt_sample, grid_.nr(),
                                 [&](std::vector<double>& state, std::span<const double> rates, bool emitting,
                                     const Forcing& f, double t, double dur) {
                                   step(state, rates, emitting, f, t, dur, ledger);
                                 });
  }

  // Total water volume held in the field, m^3.
  double water_storage(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != grid_.size()) throw ShapeError("storage: state size does not match grid");
    double v = 0.0;
    for (int id = 0; id < grid_.size(); ++id)
      v += water_content(x[id], soil_.at(id)) * grid_.cell_volume(grid_.node(id).i);
    return v;
  }

  double mean_head(std::span<const double> x, std::span<const int> nodes) const {
    if (nodes.empty()) throw ShapeError("mean_head: empty node set");
    double s = 0.0;
    for (int id : nodes) s += x[id];
    return s / static_cast<double>(nodes.size());
  }

  double mean_stress(std::span<const double> x, std::span<const int> nodes) const {
    if (nodes.empty()) throw ShapeError("mean_stress: empty node set");
    double s = 0.0;
    for (int id : nodes) s += stress_factor(x[id], feddes_);
    return s / static_cast<double>(nodes.size());
  }

  // All nodes in the vertical layer counted from the surface (1 = surface).
  std::vector<int> layer_nodes_from_top(int layer) const {
    if (layer < 1 || layer > grid_.nz()) throw ShapeError("layer_nodes_from_top: layer out of range");
    const int k = grid_.nz() - layer;
    std::vector<int> ids;
    ids.reserve(static_cast<size_t>(grid_.nr()) * grid_.ntheta());
    for (int i = 0; i < grid_.nr(); ++i)
      for (int j = 0; j < grid_.ntheta(); ++j) ids.push_back(grid_.id(i, j, k));
    return ids;
  }

  static int day_of(double t) { return detail::day_index(t); }

 private:
  CylGrid grid_;
  SoilMap soil_;
  CropCalendar calendar_;
  FeddesParams feddes_;
  PivotConfig pivot_;
  BottomBoundary bottom_;
  StepControl control_;
};

}  // namespace pivotsched

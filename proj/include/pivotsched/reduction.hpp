#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pivotsched/common.hpp"
#include "pivotsched/csv.hpp"
#include "pivotsched/field.hpp"

namespace pivotsched {

// Trajectory samples rearranged as one row per node (n x N). Row i is the
// time history of node i; rows that stay close together describe nodes with
// similar dynamics.
inline Matrix snapshot_matrix(const Trajectory& traj) {
  if (traj.states.empty()) throw ShapeError("snapshots: empty trajectory");
  const int cols = static_cast<int>(traj.states.size());
  const int rows = static_cast<int>(traj.states.front().size());
  Matrix x(rows, cols);
  for (int s = 0; s < cols; ++s) {
    if (static_cast<int>(traj.states[s].size()) != rows) throw ShapeError("snapshots: ragged trajectory");
    for (int i = 0; i < rows; ++i) x.at(i, s) = traj.states[s][i];
  }
  return x;
}

// Runs the field under a sprinkler schedule and returns the snapshot matrix
// sampled every dt_sample seconds.
inline Matrix collect_snapshots(const FieldModel& model, const std::vector<double>& x0,
                                const SprinklerSchedule& schedule, const WeatherFn& weather, double horizon_s,
                                double dt_sample) {
  return snapshot_matrix(model.simulate(x0, schedule, weather, 0.0, horizon_s, dt_sample));
}

// Per-row z-scoring, for clustering fields whose soils put rows on different
// scales. Constant rows become zero rows.
inline Matrix standardize_rows(const Matrix& x) {
  Matrix out = x;
  for (int i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (int c = 0; c < x.cols; ++c) mean += x.at(i, c);
    mean /= std::max(1, x.cols);
    double var = 0.0;
    for (int c = 0; c < x.cols; ++c) {
      const double d = x.at(i, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / std::max(1, x.cols));
    for (int c = 0; c < x.cols; ++c) out.at(i, c) = sd > 0.0 ? (x.at(i, c) - mean) / sd : 0.0;
  }
  return out;
}

// One agglomeration step: the clusters whose smallest member ids are `a` and
// `b` (a < b) were merged at average pairwise distance `dist`.
struct LinkageMerge {
  int a;
  int b;
  double dist;
};

struct Linkage {
  int n = 0;
  std::vector<LinkageMerge> merges;  // n-1 entries, nondecreasing dist
};

// Bottom-up average-linkage clustering of the matrix rows under Euclidean
// distance. Cluster distance is the mean of all member-pair distances,
// maintained exactly via the weighted (Lance-Williams) update. Ties are broken
// deterministically toward the lexicographically smallest pair of cluster
// representatives (each cluster represented by its smallest member id).
inline Linkage average_linkage(const Matrix& x) {
  const int n = x.rows;
  if (n <= 0) throw ShapeError("linkage: empty snapshot matrix");
  Linkage out;
  out.n = n;
  if (n == 1) return out;
  std::vector<double> d(static_cast<size_t>(n) * n, 0.0);
  auto dist = [&](int a, int b) -> double& { return d[static_cast<size_t>(a) * n + b]; };
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      double s = 0.0;
      for (int c = 0; c < x.cols; ++c) {
        const double diff = x.at(a, c) - x.at(b, c);
        s += diff * diff;
      }
      dist(a, b) = dist(b, a) = std::sqrt(s);
    }
  std::vector<int> active(n);
  std::iota(active.begin(), active.end(), 0);
  std::vector<double> size(n, 1.0);
  out.merges.reserve(n - 1);
  while (active.size() > 1) {
    int best_a = -1, best_b = -1;
    double best = std::numeric_limits<double>::infinity();
    for (size_t p = 0; p < active.size(); ++p)
      for (size_t q = p + 1; q < active.size(); ++q) {
        const int a = active[p], b = active[q];
        const double v = dist(a, b);
        if (v < best || (v == best && (a < best_a || (a == best_a && b < best_b)))) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    out.merges.push_back({best_a, best_b, best});
    const double sa = size[best_a], sb = size[best_b];
    for (int k : active) {
      if (k == best_a || k == best_b) continue;
      const double merged = (sa * dist(best_a, k) + sb * dist(best_b, k)) / (sa + sb);
      dist(best_a, k) = dist(k, best_a) = merged;
    }
    size[best_a] = sa + sb;
    active.erase(std::find(active.begin(), active.end(), best_b));
  }
  return out;
}

// A partition of the node set. Members of each cluster are sorted; clusters
// are ordered by their smallest member.
struct Clustering {
  std::vector<std::vector<int>> clusters;
  double threshold = 0.0;  // cut distance that produced this partition

  int node_count() const {
    int n = 0;
    for (const auto& c : clusters) n += static_cast<int>(c.size());
    return n;
  }

  void validate(int n) const {
    std::vector<char> seen(n, 0);
    if (clusters.empty()) throw ShapeError("clustering: no clusters");
    for (const auto& c : clusters) {
      if (c.empty()) throw ShapeError("clustering: empty cluster");
      for (int id : c) {
        if (id < 0 || id >= n) throw ShapeError("clustering: node id out of range");
        if (seen[id]) throw ShapeError("clustering: node assigned twice");
        seen[id] = 1;
      }
    }
    for (int i = 0; i < n; ++i)
      if (!seen[i]) throw ShapeError("clustering: node " + std::to_string(i) + " unassigned");
  }
};

// Applies every merge with distance <= threshold (the linkage heights are
// nondecreasing, so this is a prefix of the merge sequence).
inline Clustering cut_linkage(const Linkage& linkage, double threshold) {
  if (!(threshold >= 0.0)) throw ParameterError("clustering: threshold must be >= 0");
  std::vector<int> parent(linkage.n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& m : linkage.merges) {
    if (m.dist > threshold) break;
    const int ra = find(m.a), rb = find(m.b);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::vector<int>> groups(linkage.n);
  for (int v = 0; v < linkage.n; ++v) groups[find(v)].push_back(v);
  Clustering c;
  c.threshold = threshold;
  for (auto& g : groups)
    if (!g.empty()) c.clusters.push_back(std::move(g));
  return c;
}

inline Clustering cluster_states(const Matrix& snapshots, double threshold, bool standardize = false) {
  if (!(threshold > 0.0)) throw ParameterError("clustering: threshold must be > 0");
  if (snapshots.cols < 1) throw ShapeError("clustering: need at least one snapshot");
  if (standardize) return cut_linkage(average_linkage(standardize_rows(snapshots)), threshold);
  return cut_linkage(average_linkage(snapshots), threshold);
}

// Orthonormal cluster-averaging projection. Column j of the lifting map picks
// out cluster j with weight 1/sqrt(|C_j|), so reduce() averages (up to scale)
// and lift() broadcasts one value per cluster.
class Projection {
 public:
  Projection(const Clustering& clustering, int n) {
    clustering.validate(n);
    cluster_of_.assign(n, -1);
    members_ = clustering.clusters;
    weight_.resize(members_.size());
    for (size_t j = 0; j < members_.size(); ++j) {
      weight_[j] = 1.0 / std::sqrt(static_cast<double>(members_[j].size()));
      for (int id : members_[j]) cluster_of_[id] = static_cast<int>(j);
    }
  }

  int full_dim() const { return static_cast<int>(cluster_of_.size()); }
  int reduced_dim() const { return static_cast<int>(members_.size()); }
  int cluster_of(int node) const { return cluster_of_[node]; }
  double weight(int cluster) const { return weight_[cluster]; }
  const std::vector<std::vector<int>>& members() const { return members_; }

  void reduce(std::span<const double> x, std::span<double> xi) const {
    if (static_cast<int>(x.size()) != full_dim() || static_cast<int>(xi.size()) != reduced_dim())
      throw ShapeError("reduce: dimension mismatch");
    for (int j = 0; j < reduced_dim(); ++j) {
      double s = 0.0;
      for (int id : members_[j]) s += x[id];
      xi[j] = s * weight_[j];
    }
  }

  void lift(std::span<const double> xi, std::span<double> x) const {
    if (static_cast<int>(xi.size()) != reduced_dim() || static_cast<int>(x.size()) != full_dim())
      throw ShapeError("lift: dimension mismatch");
    for (int id = 0; id < full_dim(); ++id) {
      const int j = cluster_of_[id];
      x[id] = xi[j] * weight_[j];
    }
  }

  std::vector<double> reduce(const std::vector<double>& x) const {
    std::vector<double> xi(reduced_dim());
    reduce(std::span<const double>(x), std::span<double>(xi));
    return xi;
  }

  std::vector<double> lift(const std::vector<double>& xi) const {
    std::vector<double> x(full_dim());
    lift(std::span<const double>(xi), std::span<double>(x));
    return x;
  }

  // CSV schema: node_id,cluster_id. Cluster ids are renumbered on load by
  // smallest member so the mapping is stable regardless of input numbering.
  void save_csv(const std::string& path, double threshold = 0.0) const {
    csv::Writer out(path);
    if (threshold > 0.0) out.comment("threshold=" + csv::format_double(threshold));
    out.comment("reduced_dim=" + std::to_string(reduced_dim()));
    out.header({"node_id", "cluster_id"});
    for (int id = 0; id < full_dim(); ++id) out.row({static_cast<double>(id), static_cast<double>(cluster_of_[id])});
  }

  static Projection load_csv(const std::string& path, int n) {
    csv::Table t = csv::read_table(path);
    const int c_node = t.require_column("node_id");
    const int c_cluster = t.require_column("cluster_id");
    std::vector<long> raw(n, -1);
    for (size_t r = 0; r < t.rows.size(); ++r) {
      const long id = csv::parse_long(t, static_cast<int>(r), c_node);
      if (id < 0 || id >= n)
        throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": node_id out of range");
      if (raw[id] != -1) throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": duplicate node_id");
      raw[id] = csv::parse_long(t, static_cast<int>(r), c_cluster);
    }
    std::vector<long> ids;
    for (int i = 0; i < n; ++i) {
      if (raw[i] == -1) throw ParseError(path + ": node_id " + std::to_string(i) + " missing");
      ids.push_back(raw[i]);
    }
    // renumber clusters in order of their smallest member
    Clustering c;
    std::vector<long> seen_order;
    for (int i = 0; i < n; ++i) {
      auto it = std::find(seen_order.begin(), seen_order.end(), ids[i]);
      size_t j;
      if (it == seen_order.end()) {
        seen_order.push_back(ids[i]);
        c.clusters.emplace_back();
        j = seen_order.size() - 1;
      } else {
        j = static_cast<size_t>(it - seen_order.begin());
      }
      c.clusters[j].push_back(i);
    }
    return Projection(c, n);
  }

 private:
  std::vector<int> cluster_of_;
  std::vector<double> weight_;
  std::vector<std::vector<int>> members_;
};

// The full field dynamics restricted to the projection subspace: the state is
// xi = U'x, the dynamics are xi' = U' f(U xi). Step control (head change cap,
// stability bound, stiffness floor) is enforced on the lifted heads, and the
// water ledger reflects the lifted state.
class ReducedModel {
 public:
  ReducedModel(const FieldModel& full, Projection projection) : full_(&full), p_(std::move(projection)) {
    if (p_.full_dim() != full.grid().size()) throw ShapeError("reduced model: projection does not match grid");
  }

  const FieldModel& full() const { return *full_; }
  const Projection& projection() const { return p_; }
  int dim() const { return p_.reduced_dim(); }

  void rhs(std::span<const double> xi, std::span<const double> rates, bool emitting, const Forcing& forcing, double t,
           std::span<double> dxi) const {
    thread_local std::vector<double> x, f;
    x.resize(p_.full_dim());
    f.resize(p_.full_dim());
    p_.lift(xi, std::span<double>(x));
    full_->rhs(x, rates, emitting, forcing, t, f);
    p_.reduce(std::span<const double>(f), dxi);
  }

  void step(std::vector<double>& xi, std::span<const double> rates, bool emitting, const Forcing& forcing,
            double t_begin, double duration, MassLedger* ledger = nullptr) const {
    if (!(duration >= 0.0)) throw ParameterError("step: duration must be >= 0");
    const StepControl& ctl = full_->control();
    const double t_end = t_begin + duration;
    const bool sector_matters = emitting && full_->grid().ntheta() > 1 &&
                                std::any_of(rates.begin(), rates.end(), [](double r) { return r > 0.0; });
    thread_local std::vector<double> x, f, dxi;
    x.resize(p_.full_dim());
    f.resize(p_.full_dim());
    dxi.resize(p_.reduced_dim());
    double t = t_begin;
    const double time_eps = 1e-9 * std::max(1.0, std::abs(t_end));
    while (t < t_end - time_eps) {
      double t_next = t_end;
      if (sector_matters) {
        const double dwell = full_->dwell_s();
        const double phase = t - full_->pivot().phase_offset_s;
        double boundary = (std::floor(phase / dwell) + 1.0) * dwell + full_->pivot().phase_offset_s;
        if (boundary <= t + time_eps) boundary += dwell;
        t_next = std::min(t_next, boundary);
      }
      p_.lift(std::span<const double>(xi), std::span<double>(x));
      FluxDiag diag;
      double stable_dt = std::numeric_limits<double>::infinity();
      full_->rhs(x, rates, emitting, forcing, t, f, ledger ? &diag : nullptr, &stable_dt);
      p_.reduce(std::span<const double>(f), std::span<double>(dxi));
      double max_rate = 0.0;
      for (int j = 0; j < p_.reduced_dim(); ++j) max_rate = std::max(max_rate, std::abs(dxi[j]) * p_.weight(j));
      const double window = t_next - t;
      double dt = window;
      if (max_rate > 0.0) dt = std::min(dt, ctl.dh_max / max_rate);
      dt = std::min(dt, stable_dt);
      if (dt < window && dt < ctl.dt_min)
        throw NumericError("reduced step: required sub-step " + std::to_string(dt) + " s fell below the floor " +
                           std::to_string(ctl.dt_min) + " s at t = " + std::to_string(t) + " s");
      for (size_t j = 0; j < xi.size(); ++j) xi[j] += dt * dxi[j];
      if (ledger) {
        ledger->surface_in += diag.surface_in * dt;
        ledger->bottom_out += diag.bottom_out * dt;
        ledger->sink_out += diag.sink * dt;
      }
      t += dt;
    }
  }

  // Same contract as FieldModel::simulate, in reduced coordinates.
  Trajectory simulate(std::vector<double> xi, const SprinklerSchedule& schedule, const WeatherFn& weather,
                      double t_begin, double horizon, double dt_sample, MassLedger* ledger = nullptr) const {
    if (static_cast<int>(xi.size()) != dim()) throw ShapeError("simulate: reduced state size mismatch");
    return detail::simulate_loop(std::move(xi), schedule, weather, t_begin, horizon, dt_sample, full_->grid().nr(),
                                 [&](std::vector<double>& state, std::span<const double> rates, bool emitting,
                                     const Forcing& f, double t, double dur) {
                                   step(state, rates, emitting, f, t, dur, ledger);
                                 });
  }

  Trajectory lift_trajectory(const Trajectory& reduced) const {
    Trajectory full;
    full.times = reduced.times;
    full.states.reserve(reduced.states.size());
    for (const auto& xi : reduced.states) full.states.push_back(p_.lift(xi));
    return full;
  }

 private:
  const FieldModel* full_;
  Projection p_;
};

// Mean squared head error between two equally sampled runs in full
// coordinates (lift a reduced trajectory first).
inline double model_mse(const Trajectory& a, const Trajectory& b) {
  if (a.times.size() != b.times.size() || a.states.empty()) throw ShapeError("mse: trajectories not comparable");
  for (size_t s = 0; s < a.times.size(); ++s)
    if (std::abs(a.times[s] - b.times[s]) > 1e-6) throw ShapeError("mse: sample times differ");
  double acc = 0.0;
  size_t count = 0;
  for (size_t s = 0; s < a.states.size(); ++s) {
    if (a.states[s].size() != b.states[s].size()) throw ShapeError("mse: state dimensions differ");
    for (size_t i = 0; i < a.states[s].size(); ++i) {
      const double diff = a.states[s][i] - b.states[s][i];
      acc += diff * diff;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace pivotsched

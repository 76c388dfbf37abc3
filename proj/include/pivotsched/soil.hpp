#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pivotsched/common.hpp"
#include "pivotsched/csv.hpp"

namespace pivotsched {

// Lower bound on the storage coefficient; keeps dh/dt = f/c finite at and near
// saturation, where the analytic capacity vanishes.
constexpr double kDefaultCapacityFloor = 1e-8;  // 1/m

// van Genuchten-Mualem parameter set (m = 1 - 1/n throughout).
struct SoilParams {
  double Ks = 0.0;       // saturated conductivity [m/s]
  double theta_s = 0.0;  // saturated water content [-]
  double theta_r = 0.0;  // residual water content [-]
  double alpha = 0.0;    // inverse air-entry length [1/m]
  double n = 0.0;        // pore-size distribution exponent [-]

  double m() const { return 1.0 - 1.0 / n; }

  void validate() const {
    if (!(Ks > 0.0)) throw ParameterError("soil: Ks must be > 0");
    if (!(theta_s > 0.0 && theta_s < 1.0)) throw ParameterError("soil: theta_s must lie in (0, 1)");
    if (!(theta_r >= 0.0 && theta_r < theta_s)) throw ParameterError("soil: need 0 <= theta_r < theta_s");
    if (!(alpha > 0.0)) throw ParameterError("soil: alpha must be > 0");
    if (!(n > 1.0)) throw ParameterError("soil: n must be > 1");
  }
};

// Everything the flow model needs at one node, from one evaluation.
struct HydraulicState {
  double Se;     // effective saturation in (0, 1]
  double theta;  // volumetric water content
  double K;      // unsaturated conductivity [m/s]
  double c;      // storage coefficient dtheta/dh, floored [1/m]
};

namespace detail {

// exp with the argument clamped so the result stays finite in double precision.
inline double safe_exp(double x) { return std::exp(std::clamp(x, -745.0, 709.0)); }

}  // namespace detail

// Evaluates retention, conductivity and capacity together so shared powers are
// computed once. Closed forms used:
//   t   = alpha*|h|,  Se = (1 + t^n)^(-m)
//   K   = Ks * sqrt(Se) * (1 - (t^n/(1+t^n))^m)^2      (equivalent to the
//         usual (1 - (1 - Se^(1/m))^m)^2 since Se^(1/m) = 1/(1+t^n))
//   c   = (theta_s-theta_r) * m*n*alpha * t^(n-1) * (1+t^n)^(-m-1)
// For h >= 0 the medium is saturated: Se = 1, K = Ks, c = c_floor.
inline HydraulicState evaluate_hydraulics(double h, const SoilParams& p, double c_floor = kDefaultCapacityFloor) {
  p.validate();
  if (!std::isfinite(h)) throw ParameterError("soil: non-finite head");
  HydraulicState s;
  if (h >= 0.0) {
    s.Se = 1.0;
    s.theta = p.theta_s;
    s.K = p.Ks;
    s.c = c_floor;
    return s;
  }
  const double m = p.m();
  const double t = p.alpha * -h;
  const double log_t = std::log(t);
  const double tn = detail::safe_exp(p.n * log_t);
  const double log1p_tn = std::log1p(tn);
  s.Se = detail::safe_exp(-m * log1p_tn);
  s.theta = p.theta_r + (p.theta_s - p.theta_r) * s.Se;
  // (t^n/(1+t^n))^m = exp(m*(log(tn) - log1p(tn))); expm1 keeps the bracket
  // accurate when t^n is large and the ratio approaches 1.
  const double bracket = tn > 0.0 ? -std::expm1(m * (p.n * log_t - log1p_tn)) : 1.0;
  s.K = p.Ks * std::sqrt(s.Se) * bracket * bracket;
  const double c_analytic =
      (p.theta_s - p.theta_r) * m * p.n * p.alpha * detail::safe_exp((p.n - 1.0) * log_t - (m + 1.0) * log1p_tn);
  s.c = std::max(c_analytic, c_floor);
  return s;
}

inline double effective_saturation(double h, const SoilParams& p) { return evaluate_hydraulics(h, p).Se; }

inline double water_content(double h, const SoilParams& p) { return evaluate_hydraulics(h, p).theta; }

inline double hydraulic_conductivity(double h, const SoilParams& p) { return evaluate_hydraulics(h, p).K; }

inline double capillary_capacity(double h, const SoilParams& p, double c_floor = kDefaultCapacityFloor) {
  return evaluate_hydraulics(h, p, c_floor).c;
}

// Per-node soil assignment. Either one parameter set for the whole field or an
// explicit set per node.
class SoilMap {
 public:
  static SoilMap uniform(const SoilParams& p, int node_count) {
    p.validate();
    if (node_count <= 0) throw ShapeError("soil map: node count must be > 0");
    SoilMap m;
    m.node_count_ = node_count;
    m.uniform_ = {p};
    return m;
  }

  static SoilMap per_node(std::vector<SoilParams> params) {
    if (params.empty()) throw ShapeError("soil map: empty parameter list");
    for (const auto& p : params) p.validate();
    SoilMap m;
    m.node_count_ = static_cast<int>(params.size());
    m.per_node_ = std::move(params);
    return m;
  }

  // CSV schema: node_id,Ks,theta_s,theta_r,alpha_vg,n_vg. A single row with
  // node_id "*" assigns one soil everywhere; otherwise every node in
  // [0, node_count) must appear exactly once.
  static SoilMap load_csv(const std::string& path, int node_count) {
    csv::Table t = csv::read_table(path);
    const int c_id = t.require_column("node_id");
    const int c_ks = t.require_column("Ks");
    const int c_ts = t.require_column("theta_s");
    const int c_tr = t.require_column("theta_r");
    const int c_a = t.require_column("alpha_vg");
    const int c_n = t.require_column("n_vg");
    auto params_at = [&](int row) {
      SoilParams p;
      p.Ks = csv::parse_double(t, row, c_ks);
      p.theta_s = csv::parse_double(t, row, c_ts);
      p.theta_r = csv::parse_double(t, row, c_tr);
      p.alpha = csv::parse_double(t, row, c_a);
      p.n = csv::parse_double(t, row, c_n);
      try {
        p.validate();
      } catch (const ParameterError& e) {
        throw ParseError(path + ":" + std::to_string(t.line_numbers[row]) + ": " + e.what());
      }
      return p;
    };
    if (t.rows.size() == 1 && t.rows[0][c_id] == "*") return uniform(params_at(0), node_count);
    if (node_count <= 0) throw ShapeError("soil map: node count must be > 0");
    std::vector<SoilParams> per(node_count);
    std::vector<char> seen(node_count, 0);
    for (size_t r = 0; r < t.rows.size(); ++r) {
      if (t.rows[r][c_id] == "*")
        throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": '*' row must be the only row");
      long id = csv::parse_long(t, static_cast<int>(r), c_id);
      if (id < 0 || id >= node_count)
        throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": node_id " + std::to_string(id) +
                         " outside [0, " + std::to_string(node_count) + ")");
      if (seen[id])
        throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": duplicate node_id " + std::to_string(id));
      seen[id] = 1;
      per[id] = params_at(static_cast<int>(r));
    }
    for (int i = 0; i < node_count; ++i)
      if (!seen[i]) throw ParseError(path + ": node_id " + std::to_string(i) + " has no soil assignment");
    return per_node(std::move(per));
  }

  int node_count() const { return node_count_; }
  bool is_uniform() const { return !uniform_.empty(); }

  const SoilParams& at(int node) const { return uniform_.empty() ? per_node_[node] : uniform_[0]; }

 private:
  int node_count_ = 0;
  std::vector<SoilParams> uniform_;   // size 1 when uniform
  std::vector<SoilParams> per_node_;  // size node_count when per-node
};

// Reference parameter sets used across tests and fixtures.
inline SoilParams loam_soil() { return {2.889e-6, 0.43, 0.078, 3.6, 1.56}; }
inline SoilParams sandy_clay_loam_soil() { return {3.6388e-6, 0.39, 0.1, 5.9, 1.48}; }
inline SoilParams clay_loam_soil() { return {7.2223e-7, 0.41, 0.095, 1.9, 1.31}; }

}  // namespace pivotsched

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pivotsched/common.hpp"
#include "pivotsched/csv.hpp"

namespace pivotsched {

// Piecewise-linear water-stress response. Uptake is zero wetter than h1
// (oxygen deficit) and dryer than h4 (wilting), full between h2 and h3, and
// ramps linearly in between.
struct FeddesParams {
  double h1 = -0.1;
  double h2 = -0.25;
  double h3 = -3.1;
  double h4 = -80.0;

  void validate() const {
    if (!(h1 < 0.0 && h2 < h1 && h3 < h2 && h4 < h3))
      throw ParameterError("stress response: need 0 > h1 > h2 > h3 > h4");
  }
};

inline double stress_factor(double h, const FeddesParams& p = {}) {
  p.validate();
  if (h >= p.h1 || h <= p.h4) return 0.0;
  if (h > p.h2) return (p.h1 - h) / (p.h1 - p.h2);
  if (h >= p.h3) return 1.0;
  return (h - p.h4) / (p.h3 - p.h4);
}

// Potential evapotranspiration split into soil evaporation and transpiration
// via leaf-area shading.
struct EtSplit {
  double etp;  // potential crop evapotranspiration [m/s]
  double ev;   // potential soil evaporation [m/s]
  double tp;   // potential transpiration [m/s]
};

inline EtSplit et_split(double pet, double kc, double lai) {
  if (!(pet >= 0.0)) throw ParameterError("et: reference evapotranspiration must be >= 0");
  if (!(kc > 0.0)) throw ParameterError("et: crop coefficient must be > 0");
  if (!(lai >= 0.0)) throw ParameterError("et: leaf area index must be >= 0");
  EtSplit s;
  s.etp = kc * pet;
  s.ev = s.etp * std::exp(-0.623 * lai);
  s.tp = s.etp - s.ev;
  return s;
}

// Seasonal yield deficiency: sum of daily stress shortfalls weighted by the
// crop sensitivity factor. Zero means potential yield was reached.
inline double yield_deficiency(std::span<const double> ky, std::span<const double> stress) {
  if (ky.size() != stress.size()) throw ShapeError("yield: Ky and stress series lengths differ");
  double d = 0.0;
  for (size_t i = 0; i < ky.size(); ++i) {
    if (!(ky[i] >= 0.0)) throw ParameterError("yield: Ky must be >= 0");
    d += ky[i] * (1.0 - std::clamp(stress[i], 0.0, 1.0));
  }
  return d;
}

// Per-day crop properties over a season. Queries past the last day hold the
// final value, so simulations may run beyond the calendar without error.
class CropCalendar {
 public:
  struct Day {
    double kc;          // crop coefficient [-]
    double ky;          // yield sensitivity [-]
    double lai;         // leaf area index [-]
    double root_depth;  // rooting depth [m]
  };

  static CropCalendar constant(Day d, int days) {
    CropCalendar c;
    c.days_.assign(days > 0 ? days : 1, d);
    c.validate();
    return c;
  }

  // CSV schema: day,Kc,Ky,LAI,L with day = 0,1,2,... consecutive.
  static CropCalendar load_csv(const std::string& path) {
    csv::Table t = csv::read_table(path);
    const int c_day = t.require_column("day");
    const int c_kc = t.require_column("Kc");
    const int c_ky = t.require_column("Ky");
    const int c_lai = t.require_column("LAI");
    const int c_l = t.require_column("L");
    CropCalendar c;
    for (size_t r = 0; r < t.rows.size(); ++r) {
      long day = csv::parse_long(t, static_cast<int>(r), c_day);
      if (day != static_cast<long>(r))
        throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": day column must run 0,1,2,... (got " +
                         std::to_string(day) + ")");
      c.days_.push_back({csv::parse_double(t, static_cast<int>(r), c_kc), csv::parse_double(t, static_cast<int>(r), c_ky),
                         csv::parse_double(t, static_cast<int>(r), c_lai), csv::parse_double(t, static_cast<int>(r), c_l)});
    }
    if (c.days_.empty()) throw ParseError(path + ": calendar has no rows");
    try {
      c.validate();
    } catch (const ParameterError& e) {
      throw ParseError(path + ": " + e.what());
    }
    return c;
  }

  void validate() const {
    if (days_.empty()) throw ParameterError("crop calendar: empty");
    for (const auto& d : days_) {
      if (!(d.kc > 0.0)) throw ParameterError("crop calendar: Kc must be > 0");
      if (!(d.ky >= 0.0)) throw ParameterError("crop calendar: Ky must be >= 0");
      if (!(d.lai >= 0.0)) throw ParameterError("crop calendar: LAI must be >= 0");
      if (!(d.root_depth > 0.0)) throw ParameterError("crop calendar: root depth L must be > 0");
    }
  }

  int length() const { return static_cast<int>(days_.size()); }

  const Day& at(int day) const {
    if (day < 0) day = 0;
    if (day >= length()) day = length() - 1;
    return days_[day];
  }

 private:
  std::vector<Day> days_;
};

// Fraction of the root zone lying in each vertical layer, top layer first.
// Roots occupy [0, L] below the surface, uniformly; a layer only partially
// inside the root zone gets a proportional share. Weights sum to 1.
inline std::vector<double> root_layer_weights(double dz, int nz, double root_depth) {
  if (!(dz > 0.0) || nz <= 0) throw ParameterError("root weights: need dz > 0 and nz > 0");
  if (!(root_depth > 0.0)) throw ParameterError("root weights: root depth must be > 0");
  const double depth_limit = std::min(root_depth, dz * nz);
  std::vector<double> w(nz, 0.0);
  for (int l = 0; l < nz; ++l) {
    const double top = dz * l;  // depth of layer top below surface
    const double overlap = std::clamp(depth_limit - top, 0.0, dz);
    w[l] = overlap / depth_limit;
  }
  return w;
}

}  // namespace pivotsched

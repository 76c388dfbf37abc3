#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "pivotsched/common.hpp"
#include "pivotsched/csv.hpp"
#include "pivotsched/field.hpp"

namespace pivotsched {

// Daily rainfall and reference evapotranspiration, with a parallel long-term
// (climatological) series used beyond the reliable forecast window. Values
// are stored as mm/day exactly as read and converted on access.
class WeatherSeries {
 public:
  static WeatherSeries from_daily_mm(std::vector<double> rain_mm, std::vector<double> pet_mm) {
    WeatherSeries w;
    w.rain_mm_ = std::move(rain_mm);
    w.pet_mm_ = std::move(pet_mm);
    w.finish(std::string("weather series"));
    return w;
  }

  // CSV schema: day,rain_mm,pet_mm[,rain_lt_mm,pet_lt_mm]. day must run
  // 0,1,2,... consecutively. When the long-term columns are absent, the
  // long-term series defaults to the mean of the observed one.
  static WeatherSeries load_csv(const std::string& path) {
    csv::Table t = csv::read_table(path);
    const int c_day = t.require_column("day");
    const int c_rain = t.require_column("rain_mm");
    const int c_pet = t.require_column("pet_mm");
    const int c_rlt = t.column("rain_lt_mm");
    const int c_plt = t.column("pet_lt_mm");
    WeatherSeries w;
    for (size_t r = 0; r < t.rows.size(); ++r) {
      long day = csv::parse_long(t, static_cast<int>(r), c_day);
      if (day != static_cast<long>(r))
        throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": day column must run 0,1,2,... (got " +
                         std::to_string(day) + ")");
      auto checked = [&](int col) {
        double v = csv::parse_double(t, static_cast<int>(r), col);
        if (!(v >= 0.0))
          throw ParseError(path + ":" + std::to_string(t.line_numbers[r]) + ": negative value in column '" +
                           t.header[col] + "'");
        return v;
      };
      w.rain_mm_.push_back(checked(c_rain));
      w.pet_mm_.push_back(checked(c_pet));
      if (c_rlt >= 0) w.rain_lt_mm_.push_back(checked(c_rlt));
      if (c_plt >= 0) w.pet_lt_mm_.push_back(checked(c_plt));
    }
    w.finish(path);
    return w;
  }

  void save_csv(const std::string& path) const {
    csv::Writer out(path);
    out.header({"day", "rain_mm", "pet_mm", "rain_lt_mm", "pet_lt_mm"});
    for (int d = 0; d < length(); ++d)
      out.row({static_cast<double>(d), rain_mm_[d], pet_mm_[d], rain_lt_mm_[d], pet_lt_mm_[d]});
  }

  int length() const { return static_cast<int>(rain_mm_.size()); }

  // Realized weather for a day (held constant past the end of the series).
  Forcing observed(int day) const {
    const int d = clamp_day(day);
    return {rain_mm_[d] * kMmPerDayToMetersPerSecond, pet_mm_[d] * kMmPerDayToMetersPerSecond};
  }

  Forcing long_term(int day) const {
    const int d = clamp_day(day);
    return {rain_lt_mm_[d] * kMmPerDayToMetersPerSecond, pet_lt_mm_[d] * kMmPerDayToMetersPerSecond};
  }

  // Forecast available when planning at day `from_day`: the observed series
  // for the next `accurate_days` days, the long-term series after that.
  WeatherFn forecast_from(int from_day, int accurate_days) const {
    if (accurate_days < 0) throw ParameterError("weather: accurate_days must be >= 0");
    return [*this, from_day, accurate_days](int day) {
      return day < from_day + accurate_days ? observed(day) : long_term(day);
    };
  }

  WeatherFn observed_fn() const {
    return [*this](int day) { return observed(day); };
  }

 private:
  int clamp_day(int day) const {
    if (day < 0) return 0;
    if (day >= length()) return length() - 1;
    return day;
  }

  void finish(const std::string& context) {
    if (rain_mm_.empty()) throw ParseError(context + ": no weather days");
    if (pet_mm_.size() != rain_mm_.size()) throw ShapeError(context + ": rain and PET series lengths differ");
    for (double v : rain_mm_)
      if (!(v >= 0.0)) throw ParameterError(context + ": rain must be >= 0");
    for (double v : pet_mm_)
      if (!(v >= 0.0)) throw ParameterError(context + ": PET must be >= 0");
    auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    if (rain_lt_mm_.empty()) rain_lt_mm_.assign(rain_mm_.size(), mean(rain_mm_));
    if (pet_lt_mm_.empty()) pet_lt_mm_.assign(pet_mm_.size(), mean(pet_mm_));
    if (rain_lt_mm_.size() != rain_mm_.size() || pet_lt_mm_.size() != pet_mm_.size())
      throw ShapeError(context + ": long-term columns must cover every day");
  }

  std::vector<double> rain_mm_, pet_mm_;
  std::vector<double> rain_lt_mm_, pet_lt_mm_;
};

}  // namespace pivotsched

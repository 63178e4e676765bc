#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace missurv {

namespace detail {

// Index of the last jump at or before t, or -1.
inline std::ptrdiff_t last_jump_at_or_before(const std::vector<double>& times, double t) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  return static_cast<std::ptrdiff_t>(it - times.begin()) - 1;
}

}  // namespace detail

/// Right-continuous step function for a cumulative hazard. Zero before the
/// first jump.
///
/// `variances` (when present) holds the estimated variance of
/// sqrt(n) (estimate - truth) at each jump time. Past `reliable_until` (the
/// last event the estimator is driven by) the variances are extrapolations.
struct HazardCurve {
  std::vector<double> jump_times;
  std::vector<double> values;
  std::vector<double> variances;
  std::string estimator;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double reliable_until = std::numeric_limits<double>::infinity();

  double operator()(double t) const {
    const auto k = detail::last_jump_at_or_before(jump_times, t);
    return k < 0 ? 0.0 : values[static_cast<std::size_t>(k)];
  }

  double variance_at(double t) const {
    if (variances.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto k = detail::last_jump_at_or_before(jump_times, t);
    return k < 0 ? 0.0 : variances[static_cast<std::size_t>(k)];
  }

  bool has_variances() const { return !variances.empty(); }
};

/// Right-continuous survival step function, one before the first jump.
struct SurvivalCurve {
  std::vector<double> jump_times;
  std::vector<double> values;
  std::string estimator;
  bool clamped = false;  // some factor or value was forced into [0, 1]

  double operator()(double t) const {
    const auto k = detail::last_jump_at_or_before(jump_times, t);
    return k < 0 ? 1.0 : values[static_cast<std::size_t>(k)];
  }
};

}  // namespace missurv

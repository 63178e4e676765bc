#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "missurv/curves.hpp"
#include "missurv/error.hpp"
#include "missurv/survival_data.hpp"

namespace missurv {

/// Plug-in functionals at a time t: the complete-case hazard Lambda_1, the
/// censoring hazard analogue Lambda_G, and their 1/risk-set weighted
/// integrals A_1 and A_G (scaled by n).
struct AuxiliaryFunctionals {
  double lambda1 = 0.0;
  double lambda_g = 0.0;
  double a1 = 0.0;
  double a_g = 0.0;
};

namespace detail {

// Counts per distinct time. `primary` drives Lambda_1 (known failures, or
// known cause-of-interest deaths), `secondary` is the known complementary
// event (known censoring, or known other-cause death), `unknown` the events
// whose type is missing.
struct Tally {
  double time;
  double at_risk;
  double primary;
  double secondary;
  double unknown;
};

inline std::vector<Tally> type1_tallies(const Dataset& ds) {
  require_type1(ds);
  const auto order = ds.event_order();
  std::vector<Tally> out;
  out.reserve(ds.tie_groups().size());
  for (const auto& g : ds.tie_groups()) {
    Tally t{g.time, static_cast<double>(ds.n() - g.begin), 0.0, 0.0, 0.0};
    for (std::size_t k = g.begin; k < g.end; ++k) {
      switch (ds.type1_status(order[k])) {
        case FailureStatus::Failure: t.primary += 1.0; break;
        case FailureStatus::Censored: t.secondary += 1.0; break;
        case FailureStatus::Unknown: t.unknown += 1.0; break;
      }
    }
    out.push_back(t);
  }
  return out;
}

// Lambda_1 increment: primary / (p Y).
inline double primary_increment(const Tally& t, double prob) { return t.primary / (prob * t.at_risk); }

// Lambda_2 increment: {unknown - p^{-1}(1 - p) secondary} / ((1 - p) Y).
inline double recovery_increment(const Tally& t, double prob) {
  return (t.unknown - ((1.0 - prob) / prob) * t.secondary) / ((1.0 - prob) * t.at_risk);
}

inline AuxiliaryFunctionals aux_at(const std::vector<Tally>& tallies, double prob, double n, double t) {
  AuxiliaryFunctionals a;
  for (const auto& x : tallies) {
    if (x.time > t) break;
    const double d1 = primary_increment(x, prob);
    const double dg = x.secondary / (prob * x.at_risk);
    a.lambda1 += d1;
    a.lambda_g += dg;
    a.a1 += n * d1 / x.at_risk;
    a.a_g += n * dg / x.at_risk;
  }
  return a;
}

// Covariance of sqrt(n){Lambda(alpha, .) - Lambda} at (t, t2) from plug-in
// functionals at t ^ t2, t and t2.
inline double gamma_plugin(double alpha, double prob, const AuxiliaryFunctionals& lo, const AuxiliaryFunctionals& u,
                           const AuxiliaryFunctionals& v) {
  double g = alpha * alpha / prob * (lo.a1 - (1.0 - prob) * u.lambda1 * v.lambda1);
  if (alpha != 1.0) {
    if (prob >= 1.0) {
      throw Error(ErrorCode::RhoDegenerate, "variance of the recovery term needs a missing fraction above zero");
    }
    g += alpha * (1.0 - alpha) *
         (2.0 * u.lambda1 * v.lambda1 + u.lambda1 * v.lambda_g / prob + v.lambda1 * u.lambda_g / prob);
    g += (1.0 - alpha) * (1.0 - alpha) / (1.0 - prob) *
         (lo.a1 + lo.a_g / prob - prob * (u.lambda1 + u.lambda_g / prob) * (v.lambda1 + v.lambda_g / prob));
  }
  return g;
}

struct AlphaStar {
  double raw;        // unclamped ratio
  double value;      // clamped to [0, 1]
  bool degenerate;   // |denominator| below 1e-10
};

inline AlphaStar alpha_star_formula(double prob, const AuxiliaryFunctionals& a) {
  const double L = a.lambda1;
  const double LG = a.lambda_g;
  const double num = prob * (a.a1 - L * L) + a.a_g - LG * LG - (1.0 + prob) * L * LG;
  const double den = (a.a1 - L * L) + a.a_g - LG * LG - 2.0 * L * LG;
  if (std::abs(den) < 1e-10) return {1.0, 1.0, true};
  const double r = num / den;
  return {r, std::clamp(r, 0.0, 1.0), false};
}

// Builds a curve from per-tally increments, keeping only nonzero jumps.
inline HazardCurve curve_from_increments(const std::vector<Tally>& tallies, const std::vector<double>& inc,
                                         std::string name) {
  HazardCurve c;
  c.estimator = std::move(name);
  double v = 0.0;
  for (std::size_t k = 0; k < tallies.size(); ++k) {
    if (inc[k] == 0.0) continue;
    v += inc[k];
    c.jump_times.push_back(tallies[k].time);
    c.values.push_back(v);
  }
  return c;
}

inline double last_primary_time(const std::vector<Tally>& tallies) {
  double t = -std::numeric_limits<double>::infinity();
  for (const auto& x : tallies) {
    if (x.primary > 0.0) t = x.time;
  }
  return t;
}

// Evaluates Gamma_alpha(t, t) at every jump time of c.
inline void attach_variances(HazardCurve& c, const std::vector<Tally>& tallies, double alpha, double prob, double n) {
  c.variances.clear();
  c.variances.reserve(c.jump_times.size());
  AuxiliaryFunctionals run;
  std::size_t k = 0;
  for (double t : c.jump_times) {
    for (; k < tallies.size() && tallies[k].time <= t; ++k) {
      const auto& x = tallies[k];
      const double d1 = primary_increment(x, prob);
      const double dg = x.secondary / (prob * x.at_risk);
      run.lambda1 += d1;
      run.lambda_g += dg;
      run.a1 += n * d1 / x.at_risk;
      run.a_g += n * dg / x.at_risk;
    }
    c.variances.push_back(gamma_plugin(alpha, prob, run, run, run));
  }
}

// Lambda(alpha, .) = alpha Lambda_1 + (1 - alpha) Lambda_2 on the merged grid.
inline HazardCurve mix_curves(const HazardCurve& c1, const HazardCurve& c2, double alpha, std::string name) {
  std::vector<double> grid;
  std::merge(c1.jump_times.begin(), c1.jump_times.end(), c2.jump_times.begin(), c2.jump_times.end(),
             std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  HazardCurve c;
  c.estimator = std::move(name);
  c.alpha = alpha;
  double prev = 0.0;
  for (double t : grid) {
    const double v = alpha * c1(t) + (1.0 - alpha) * c2(t);
    if (v == prev) continue;
    c.jump_times.push_back(t);
    c.values.push_back(v);
    prev = v;
  }
  return c;
}

inline void require_rho_positive(double rho) {
  if (!(rho > 0.0)) throw Error(ErrorCode::RhoZero, "no record has a known failure indicator");
}

inline void require_rho_interior(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw Error(ErrorCode::RhoDegenerate, "estimator needs a known fraction strictly between 0 and 1");
  }
}

}  // namespace detail

/// Nelson-Aalen estimator. Variances are the classical A(t) plug-in.
inline HazardCurve nelson_aalen(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  std::vector<double> inc;
  inc.reserve(tallies.size());
  for (const auto& x : tallies) {
    if (x.unknown > 0.0) throw Error(ErrorCode::UnknownStatusPresent, "Nelson-Aalen needs every failure indicator");
    inc.push_back(x.primary / x.at_risk);
  }
  auto c = detail::curve_from_increments(tallies, inc, "nelson-aalen");
  c.alpha = 1.0;
  c.reliable_until = detail::last_primary_time(tallies);
  detail::attach_variances(c, tallies, 1.0, 1.0, static_cast<double>(ds.n()));
  return c;
}

/// Product-limit survival curve. Tied failures each contribute their own
/// factor 1 - 1/Y at the common risk set.
inline SurvivalCurve kaplan_meier(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  SurvivalCurve c;
  c.estimator = "kaplan-meier";
  double s = 1.0;
  for (const auto& x : tallies) {
    if (x.unknown > 0.0) throw Error(ErrorCode::UnknownStatusPresent, "Kaplan-Meier needs every failure indicator");
    if (x.primary == 0.0) continue;
    for (int k = 0; k < static_cast<int>(x.primary); ++k) s *= 1.0 - 1.0 / x.at_risk;
    c.jump_times.push_back(x.time);
    c.values.push_back(s);
  }
  return c;
}

/// Kaplan-Meier on the records with a known indicator only.
inline SurvivalCurve complete_case_kaplan_meier(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  SurvivalCurve c;
  c.estimator = "complete-case-kaplan-meier";
  double known_at_risk = 0.0;
  for (const auto& x : tallies) known_at_risk += x.primary + x.secondary;
  double s = 1.0;
  for (const auto& x : tallies) {
    if (x.primary > 0.0) {
      for (int k = 0; k < static_cast<int>(x.primary); ++k) s *= 1.0 - 1.0 / known_at_risk;
      c.jump_times.push_back(x.time);
      c.values.push_back(s);
    }
    known_at_risk -= x.primary + x.secondary;
  }
  return c;
}

/// Complete-case hazard with inverse-probability weighting,
/// sum xi dN^u / (rho_hat sum Y). Variances are Gamma_1.
inline HazardCurve lambda1(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  const double rho = rho_hat(ds);
  detail::require_rho_positive(rho);
  std::vector<double> inc;
  inc.reserve(tallies.size());
  for (const auto& x : tallies) inc.push_back(detail::primary_increment(x, rho));
  auto c = detail::curve_from_increments(tallies, inc, "lambda1");
  c.alpha = 1.0;
  c.reliable_until = detail::last_primary_time(tallies);
  detail::attach_variances(c, tallies, 1.0, rho, static_cast<double>(ds.n()));
  return c;
}

/// Hazard recovered from the unknown-indicator records with the known
/// censorings subtracted off. Increments can be negative.
inline HazardCurve lambda2(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  const double rho = rho_hat(ds);
  detail::require_rho_interior(rho);
  std::vector<double> inc;
  inc.reserve(tallies.size());
  for (const auto& x : tallies) inc.push_back(detail::recovery_increment(x, rho));
  auto c = detail::curve_from_increments(tallies, inc, "lambda2");
  c.alpha = 0.0;
  c.reliable_until = detail::last_primary_time(tallies);
  detail::attach_variances(c, tallies, 0.0, rho, static_cast<double>(ds.n()));
  return c;
}

/// alpha Lambda_1 + (1 - alpha) Lambda_2 with Gamma_alpha variances.
inline HazardCurve lambda_alpha(const Dataset& ds, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  if (alpha == 1.0) return lambda1(ds);
  if (alpha == 0.0) return lambda2(ds);
  const auto c1 = lambda1(ds);
  const auto c2 = lambda2(ds);
  auto c = detail::mix_curves(c1, c2, alpha, "lambda-alpha");
  c.reliable_until = c1.reliable_until;
  detail::attach_variances(c, detail::type1_tallies(ds), alpha, rho_hat(ds), static_cast<double>(ds.n()));
  return c;
}

inline AuxiliaryFunctionals auxiliary_functionals(const Dataset& ds, double t) {
  const double rho = rho_hat(ds);
  detail::require_rho_positive(rho);
  return detail::aux_at(detail::type1_tallies(ds), rho, static_cast<double>(ds.n()), t);
}

/// Plug-in Gamma_alpha(t, t2); t == t2 gives the pointwise variance.
inline double gamma_alpha_hat(const Dataset& ds, double alpha, double t, double t2) {
  const double rho = rho_hat(ds);
  detail::require_rho_positive(rho);
  const auto tallies = detail::type1_tallies(ds);
  const double n = static_cast<double>(ds.n());
  return detail::gamma_plugin(alpha, rho, detail::aux_at(tallies, rho, n, std::min(t, t2)),
                              detail::aux_at(tallies, rho, n, t), detail::aux_at(tallies, rho, n, t2));
}

namespace detail {

inline AlphaStar alpha_star_detail(const Dataset& ds, double t) {
  const double rho = rho_hat(ds);
  require_rho_positive(rho);
  const auto tallies = type1_tallies(ds);
  bool any = false;
  for (const auto& x : tallies) {
    if (x.time > t) break;
    if (x.primary > 0.0) any = true;
  }
  if (!any) throw Error(ErrorCode::NoEventsBeforeT, "no failure with a known indicator at or before t");
  if (rho >= 1.0) return {1.0, 1.0, false};
  return alpha_star_formula(rho, aux_at(tallies, rho, static_cast<double>(ds.n()), t));
}

}  // namespace detail

/// Estimated variance-minimizing alpha at t, clamped to [0, 1]; 1 when the
/// formula's denominator vanishes.
inline double alpha_star_hat(const Dataset& ds, double t) { return detail::alpha_star_detail(ds, t).value; }

/// Reweighted product-limit estimator: product over known failures of (1 - 1/Y)^(1/rho_hat).
inline SurvivalCurve lo_estimator(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  const double rho = rho_hat(ds);
  detail::require_rho_positive(rho);
  SurvivalCurve c;
  c.estimator = "lo";
  double s = 1.0;
  for (const auto& x : tallies) {
    if (x.primary == 0.0) continue;
    for (int k = 0; k < static_cast<int>(x.primary); ++k) s *= std::pow(1.0 - 1.0 / x.at_risk, 1.0 / rho);
    c.jump_times.push_back(x.time);
    c.values.push_back(s);
  }
  return c;
}

/// Product-limit form of Lambda_1: factors 1 - xi delta / (rho_hat Y), floored
/// at zero (flagged through `clamped`).
inline SurvivalCurve f1_estimator(const Dataset& ds) {
  const auto tallies = detail::type1_tallies(ds);
  const double rho = rho_hat(ds);
  detail::require_rho_positive(rho);
  SurvivalCurve c;
  c.estimator = "f1";
  double s = 1.0;
  for (const auto& x : tallies) {
    if (x.primary == 0.0) continue;
    for (int k = 0; k < static_cast<int>(x.primary); ++k) {
      double f = 1.0 - 1.0 / (rho * x.at_risk);
      if (f < 0.0) {
        f = 0.0;
        c.clamped = true;
      }
      s *= f;
    }
    c.jump_times.push_back(x.time);
    c.values.push_back(s);
  }
  return c;
}

struct AdaptiveSurvival {
  double estimate;    // F(t) = 1 - exp(-Lambda(alpha*, t)), clamped to [0, 1]
  double variance;    // estimated Var of sqrt(n) F_hat(t)
  double alpha_used;
  double cumulative_hazard;
  bool clamped = false;
};

/// Distribution function at t from Lambda(alpha_hat*, t), with the
/// delta-method variance exp(-2 Lambda) Gamma_alpha(t).
inline AdaptiveSurvival adaptive_survival(const Dataset& ds, double t) {
  const double alpha = alpha_star_hat(ds, t);
  const double rho = rho_hat(ds);
  const auto tallies = detail::type1_tallies(ds);
  const double n = static_cast<double>(ds.n());

  double l1 = 0.0;
  double l2 = 0.0;
  for (const auto& x : tallies) {
    if (x.time > t) break;
    l1 += detail::primary_increment(x, rho);
    if (alpha != 1.0) l2 += detail::recovery_increment(x, rho);
  }
  const double lam = alpha == 1.0 ? l1 : alpha * l1 + (1.0 - alpha) * l2;
  const auto aux = detail::aux_at(tallies, rho, n, t);
  const double gamma = detail::gamma_plugin(alpha, rho, aux, aux, aux);
  const double surv = std::exp(-lam);
  AdaptiveSurvival out{1.0 - surv, surv * surv * gamma, alpha, lam, false};
  if (out.estimate < 0.0 || out.estimate > 1.0) {
    out.estimate = std::clamp(out.estimate, 0.0, 1.0);
    out.clamped = true;
  }
  return out;
}

}  // namespace missurv

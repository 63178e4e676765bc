#pragma once

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "missurv/cox_engine.hpp"
#include "missurv/curves.hpp"
#include "missurv/detail/estimating.hpp"
#include "missurv/hazard_cox.hpp"
#include "missurv/hazard_one_sample.hpp"
#include "missurv/survival_data.hpp"

// Competing risks with the cause of death missing completely at random among
// deaths. Each estimator mirrors its Type I counterpart with rho_hat replaced
// by tau_hat, the fraction of deaths with a known cause, and the known
// censorings replaced by known other-cause deaths.

namespace missurv {

struct Type2Fit : FitResult {
  double tau_hat = 1.0;
};

enum class PhiType { FullData, CompleteCase, S1, S2, Combined };

struct PhiKind {
  PhiType type = PhiType::S1;
  Eigen::MatrixXd D;

  static PhiKind full_data() { return {PhiType::FullData, {}}; }
  static PhiKind complete_case() { return {PhiType::CompleteCase, {}}; }
  static PhiKind s1() { return {PhiType::S1, {}}; }
  static PhiKind s2() { return {PhiType::S2, {}}; }
  static PhiKind combined(Eigen::MatrixXd d) { return {PhiType::Combined, std::move(d)}; }
};

namespace detail {

struct Type2Indicators {
  Eigen::VectorXd death;           // delta
  Eigen::VectorXd known_death;     // xi * delta
  Eigen::VectorXd known_interest;  // xi * phi * delta
  Eigen::VectorXd known_other;     // xi * (1 - phi) * delta
  Eigen::VectorXd unknown;         // (1 - xi) * delta
  double deaths = 0.0;
  double tau = 1.0;
};

inline Type2Indicators type2_indicators(const Dataset& ds) {
  require_type2(ds);
  const auto n = static_cast<Eigen::Index>(ds.n());
  Type2Indicators ind;
  ind.death = ind.known_death = ind.known_interest = ind.known_other = ind.unknown = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (ds.type2_status(static_cast<std::size_t>(i))) {
      case Type2Status::CauseOfInterest:
        ind.death(i) = ind.known_death(i) = ind.known_interest(i) = 1.0;
        break;
      case Type2Status::OtherCause:
        ind.death(i) = ind.known_death(i) = ind.known_other(i) = 1.0;
        break;
      case Type2Status::UnknownCause:
        ind.death(i) = ind.unknown(i) = 1.0;
        break;
      case Type2Status::Censored:
        break;
    }
  }
  ind.deaths = ind.death.sum();
  ind.tau = ind.deaths > 0.0 ? ind.known_death.sum() / ind.deaths : 0.0;
  return ind;
}

inline void require_tau_positive(const Type2Indicators& ind) {
  if (ind.deaths == 0.0) throw Error(ErrorCode::NoDeaths, "no deaths observed");
  if (!(ind.tau > 0.0)) throw Error(ErrorCode::TauDegenerate, "no death has a known cause");
}

inline Eigen::VectorXd s2_phi_weights(const Type2Indicators& ind) {
  require_tau_positive(ind);
  return ind.unknown - ((1.0 - ind.tau) / ind.tau) * ind.known_other;
}

inline EstimatingFunction type2_function(const Dataset& ds, const PhiKind& kind, const Type2Indicators& ind) {
  if (ind.deaths == 0.0) throw Error(ErrorCode::NoDeaths, "no deaths observed");
  EstimatingFunction ef;
  switch (kind.type) {
    case PhiType::FullData:
      if ((ind.unknown.array() != 0.0).any()) {
        throw Error(ErrorCode::UnknownStatusInFullData, "full competing-risks score needs every cause of death");
      }
      ef.primary = ind.known_interest;
      break;
    case PhiType::CompleteCase:
      ef.risk_weight = Eigen::VectorXd::Ones(ind.unknown.size()) - ind.unknown;
      ef.primary = ind.known_interest;
      break;
    case PhiType::S1:
      require_tau_positive(ind);
      ef.primary = ind.known_interest;
      break;
    case PhiType::S2:
      ef.primary = s2_phi_weights(ind);
      break;
    case PhiType::Combined:
      check_weight_matrix(kind.D, ds.p());
      require_tau_positive(ind);
      ef.primary = ind.known_interest;
      ef.secondary = s2_phi_weights(ind);
      ef.weight = kind.D;
      break;
  }
  return ef;
}

}  // namespace detail

/// Fraction of deaths whose cause is known.
inline double tau_hat(const Dataset& ds) {
  const auto ind = detail::type2_indicators(ds);
  if (ind.deaths == 0.0) throw Error(ErrorCode::NoDeaths, "no deaths observed");
  return ind.tau;
}

inline Eigen::VectorXd score_phi(const Dataset& ds, const Eigen::VectorXd& beta, const PhiKind& kind) {
  const auto ind = detail::type2_indicators(ds);
  return detail::evaluate(ds, detail::type2_function(ds, kind, ind), beta, false).score;
}

inline Eigen::MatrixXd score_phi_jacobian(const Dataset& ds, const Eigen::VectorXd& beta, const PhiKind& kind) {
  const auto ind = detail::type2_indicators(ds);
  return detail::evaluate(ds, detail::type2_function(ds, kind, ind), beta, true).jacobian;
}

/// V^phi, the covariance of N^phi (in V_cz) and V_2^phi at beta. All moments
/// are inverse-probability weighted by n tau_hat.
inline CovarianceComponents estimate_phi_components(const Dataset& ds, const Eigen::VectorXd& beta) {
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  if (!(ind.known_interest.array() != 0.0).any()) {
    throw Error(ErrorCode::NoCompleteEvents, "no death with a known cause of interest");
  }
  const double tau = ind.tau;
  auto [V, Vn] = detail::information_and_residual_cov(ds, beta, ind.known_interest, ind.known_other,
                                                      static_cast<double>(ds.n()) * tau);
  Eigen::MatrixXd V2 = (1.0 - tau) * V + ((1.0 - tau) / tau) * Vn;
  return {std::move(V), std::move(Vn), std::move(V2), tau};
}

/// Root of S_1^phi + D S_2^phi (or of the selected score). `kind` empty
/// requests the adaptive estimator with D_hat* from a first-stage S_1^phi root.
inline Type2Fit fit_phi(const Dataset& ds, const std::optional<PhiKind>& kind, const SolverOptions& opts = {}) {
  const auto ind = detail::type2_indicators(ds);
  const double n = static_cast<double>(ds.n());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.p()));

  Type2Fit fit;
  fit.tau_hat = ind.tau;
  fit.rho_hat = ind.tau;

  if (!kind) {
    const Type2Fit first = fit_phi(ds, PhiKind::s1(), opts);
    const auto c0 = estimate_phi_components(ds, first.beta);
    auto [D, fallback] = optimal_weight(c0);
    const auto ef = detail::type2_function(ds, PhiKind::combined(D), ind);
    const auto sol = detail::newton_solve(ds, ef, first.beta, opts);
    const auto c = estimate_phi_components(ds, sol.beta);
    fit.beta = sol.beta;
    fit.method = FitMethod::Adaptive;
    fit.weight = D;
    fit.pseudo_inverse_fallback = fallback;
    fit.iterations = first.iterations + sol.iterations;
    fit.final_score_norm = sol.score_norm;
    fit.covariance = sigma_optimal(c.V, c.V2, c.rho) / n;
    if (fallback) fit.warnings.emplace_back("V2 singular; optimal weight uses its pseudo-inverse");
    return fit;
  }

  if (kind->type == PhiType::S2) {
    throw Error(ErrorCode::InvalidArgument, "S2 alone does not identify beta; use a combined score");
  }
  const auto ef = detail::type2_function(ds, *kind, ind);
  if (!detail::has_events(ef)) throw Error(ErrorCode::NoEvents, "no usable deaths for this estimator");
  const auto sol = detail::newton_solve(ds, ef, zero, opts);
  fit.beta = sol.beta;
  fit.iterations = sol.iterations;
  fit.final_score_norm = sol.score_norm;
  switch (kind->type) {
    case PhiType::FullData:
    case PhiType::CompleteCase:
    case PhiType::S1:
      fit.method = kind->type == PhiType::FullData       ? FitMethod::FullData
                   : kind->type == PhiType::CompleteCase ? FitMethod::CompleteCase
                                                         : FitMethod::S1;
      if (kind->type == PhiType::S1) {
        fit.weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.p()), static_cast<Eigen::Index>(ds.p()));
      }
      fit.covariance = detail::inverse_or_throw(-sol.jacobian, ErrorCode::SingularJacobian, "information is singular");
      break;
    case PhiType::Combined: {
      const auto c = estimate_phi_components(ds, sol.beta);
      fit.method = FitMethod::Combined;
      fit.weight = kind->D;
      fit.covariance = sigma_of_D(c.V, c.V2, c.rho, kind->D) / n;
      break;
    }
    case PhiType::S2:
      break;
  }
  fit.covariance = detail::symmetrize(fit.covariance);
  return fit;
}

namespace detail {

inline BaselineModel type2_baseline_model(const Dataset& ds, const Type2Fit& fit) {
  if (!fit.weight) throw Error(ErrorCode::MissingD, "fit does not carry a weight matrix D");
  const auto ind = type2_indicators(ds);
  require_tau_positive(ind);
  const auto comps = estimate_phi_components(ds, fit.beta);
  BaselineModel m;
  m.ds = &ds;
  m.beta = fit.beta;
  m.prob = ind.tau;
  m.sigma = fit.covariance * static_cast<double>(ds.n());
  m.omega = omega_matrix(comps.V, ind.tau, *fit.weight);
  m.primary = ind.known_interest;
  m.moment = ind.known_death / (static_cast<double>(ds.n()) * ind.tau);
  m.other = ind.known_other;
  m.prepare();
  return m;
}

}  // namespace detail

/// Baseline hazard of the cause of interest at the fitted beta; which = 1 uses
/// known cause-of-interest deaths only, which = 2 every death.
inline BaselineCurve baseline_phi(const Dataset& ds, const Type2Fit& fit, int which) {
  if (which != 1 && which != 2) throw Error(ErrorCode::InvalidArgument, "which must be 1 or 2");
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  BaselineCurve c;
  if (which == 1) {
    c = detail::baseline_curve(ds, fit.beta, ind.known_interest, ind.tau, ind.known_interest, ind.tau, "baseline-phi1");
  } else {
    const Eigen::VectorXd numer = ind.known_interest + ind.unknown - ((1.0 - ind.tau) / ind.tau) * ind.known_other;
    c = detail::baseline_curve(ds, fit.beta, numer, 1.0, ind.known_interest, ind.tau, "baseline-phi2");
  }
  if (fit.weight) detail::attach_baseline_variances(c, detail::type2_baseline_model(ds, fit), which);
  return c;
}

/// Plug-in sigma^2_{phi,k}(t).
inline BaselineVariance baseline_phi_variance(const Dataset& ds, const Type2Fit& fit, int which, double t) {
  if (which != 1 && which != 2) throw Error(ErrorCode::InvalidArgument, "which must be 1 or 2");
  return detail::type2_baseline_model(ds, fit).evaluate(which, t);
}

namespace detail {

inline std::vector<Tally> type2_tallies(const Dataset& ds) {
  require_type2(ds);
  const auto order = ds.event_order();
  std::vector<Tally> out;
  out.reserve(ds.tie_groups().size());
  for (const auto& g : ds.tie_groups()) {
    Tally t{g.time, static_cast<double>(ds.n() - g.begin), 0.0, 0.0, 0.0};
    for (std::size_t k = g.begin; k < g.end; ++k) {
      switch (ds.type2_status(order[k])) {
        case Type2Status::CauseOfInterest: t.primary += 1.0; break;
        case Type2Status::OtherCause: t.secondary += 1.0; break;
        case Type2Status::UnknownCause: t.unknown += 1.0; break;
        case Type2Status::Censored: break;
      }
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace detail

struct OneSamplePhi {
  double estimate;    // Lambda^phi(alpha, t)
  double variance;    // sigma_t^2(alpha)
  double alpha_used;
};

/// Plug-in Lambda_1, Lambda_Q, A and A_Q at t (Lambda_Q is the known
/// other-cause hazard reweighted by 1/tau_hat).
inline AuxiliaryFunctionals phi_functionals(const Dataset& ds, double t) {
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  return detail::aux_at(detail::type2_tallies(ds), ind.tau, static_cast<double>(ds.n()), t);
}

/// sigma_t^2(alpha) with plug-in functionals.
inline double sigma_phi_hat(const Dataset& ds, double alpha, double t) {
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  const auto a = detail::aux_at(detail::type2_tallies(ds), ind.tau, static_cast<double>(ds.n()), t);
  try {
    return detail::gamma_plugin(alpha, ind.tau, a, a, a);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::RhoDegenerate) throw Error(ErrorCode::TauDegenerate, "alpha < 1 needs tau_hat < 1");
    throw;
  }
}

/// Unclamped alpha* for Type II (exposed for the parabola-vertex identity).
inline double alpha_star_phi_raw(const Dataset& ds, double t) {
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  return detail::alpha_star_formula(ind.tau, detail::aux_at(detail::type2_tallies(ds), ind.tau,
                                                            static_cast<double>(ds.n()), t))
      .raw;
}

/// Cumulative hazard of the cause of interest at t. `alpha` empty selects the
/// plug-in alpha*, clamped to [0, 1].
inline OneSamplePhi one_sample_phi(const Dataset& ds, std::optional<double> alpha, double t) {
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  const auto tallies = detail::type2_tallies(ds);
  const double tau = ind.tau;
  const auto aux = detail::aux_at(tallies, tau, static_cast<double>(ds.n()), t);
  double a = 1.0;
  if (alpha) {
    if (!(*alpha >= 0.0 && *alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
    a = *alpha;
  } else if (tau < 1.0) {
    a = detail::alpha_star_formula(tau, aux).value;
  }
  if (a != 1.0 && tau >= 1.0) throw Error(ErrorCode::TauDegenerate, "alpha < 1 needs tau_hat < 1");

  double l1 = 0.0;
  double l2 = 0.0;
  for (const auto& x : tallies) {
    if (x.time > t) break;
    l1 += detail::primary_increment(x, tau);
    if (a != 1.0) l2 += detail::recovery_increment(x, tau);
  }
  const double est = a == 1.0 ? l1 : a * l1 + (1.0 - a) * l2;
  return {est, detail::gamma_plugin(a, tau, aux, aux, aux), a};
}

/// Lambda^phi(alpha, .) as a curve with sigma_t^2(alpha) at each jump.
inline HazardCurve lambda_phi_curve(const Dataset& ds, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  const auto ind = detail::type2_indicators(ds);
  detail::require_tau_positive(ind);
  if (alpha != 1.0 && ind.tau >= 1.0) throw Error(ErrorCode::TauDegenerate, "alpha < 1 needs tau_hat < 1");
  const auto tallies = detail::type2_tallies(ds);
  std::vector<double> inc1, inc2;
  for (const auto& x : tallies) {
    inc1.push_back(detail::primary_increment(x, ind.tau));
    inc2.push_back(alpha != 1.0 ? detail::recovery_increment(x, ind.tau) : 0.0);
  }
  const auto c1 = detail::curve_from_increments(tallies, inc1, "lambda-phi1");
  const auto c2 = detail::curve_from_increments(tallies, inc2, "lambda-phi2");
  auto c = alpha == 1.0 ? c1 : detail::mix_curves(c1, c2, alpha, "lambda-phi");
  c.alpha = alpha;
  c.reliable_until = detail::last_primary_time(tallies);
  detail::attach_variances(c, tallies, alpha, ind.tau, static_cast<double>(ds.n()));
  return c;
}

}  // namespace missurv

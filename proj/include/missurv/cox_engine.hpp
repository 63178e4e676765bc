#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "missurv/detail/estimating.hpp"
#include "missurv/detail/linalg.hpp"
#include "missurv/error.hpp"
#include "missurv/survival_data.hpp"

namespace missurv {

using detail::SolverOptions;

enum class ScoreType { FullData, CompleteCase, S1, S2, Combined };

/// Selects an estimating function for Type I data. Combined carries the p x p
/// weight D of S1 + D S2.
struct ScoreKind {
  ScoreType type = ScoreType::FullData;
  Eigen::MatrixXd D;

  static ScoreKind full_data() { return {ScoreType::FullData, {}}; }
  static ScoreKind complete_case() { return {ScoreType::CompleteCase, {}}; }
  static ScoreKind s1() { return {ScoreType::S1, {}}; }
  static ScoreKind s2() { return {ScoreType::S2, {}}; }
  static ScoreKind combined(Eigen::MatrixXd d) { return {ScoreType::Combined, std::move(d)}; }
};

enum class FitMethod { FullData, CompleteCase, S1, Combined, Adaptive };

constexpr std::string_view method_name(FitMethod m) {
  switch (m) {
    case FitMethod::FullData: return "full";
    case FitMethod::CompleteCase: return "complete-case";
    case FitMethod::S1: return "s1";
    case FitMethod::Combined: return "combined";
    case FitMethod::Adaptive: return "adaptive";
  }
  return "unknown";
}

struct FitResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // estimated Var(beta), i.e. Sigma_hat / n
  double rho_hat = 1.0;
  FitMethod method = FitMethod::FullData;
  std::optional<Eigen::MatrixXd> weight;  // D of S1 + D S2; zero for S1 fits
  bool pseudo_inverse_fallback = false;
  int iterations = 0;
  double final_score_norm = 0.0;
  std::vector<std::string> warnings;
};

// Covariate averages over the risk set at t, normalized by n.
struct WeightedAverages {
  double s0 = 0.0;
  Eigen::VectorXd s1;
  Eigen::MatrixXd s2;
  Eigen::VectorXd zbar;
};

inline WeightedAverages weighted_averages(const Dataset& ds, const Eigen::VectorXd& beta, double t) {
  const auto& z = ds.covariates();
  const Eigen::Index p = z.cols();
  WeightedAverages wa{0.0, Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p)};
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.time(i) < t) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const double w = std::exp(p > 0 ? z.row(r).dot(beta) : 0.0);
    wa.s0 += w;
    wa.s1 += w * z.row(r).transpose();
    wa.s2 += w * z.row(r).transpose() * z.row(r);
  }
  const double n = static_cast<double>(ds.n());
  wa.s0 /= n;
  wa.s1 /= n;
  wa.s2 /= n;
  if (wa.s0 > 0.0) wa.zbar = wa.s1 / wa.s0;
  return wa;
}

namespace detail {

// Observed indicator vectors of a Type I dataset.
struct Type1Indicators {
  Eigen::VectorXd known;            // xi
  Eigen::VectorXd known_failure;    // xi * delta
  Eigen::VectorXd known_censored;   // xi * (1 - delta)
  Eigen::VectorXd unknown;          // 1 - xi
  double rho = 1.0;
  bool any_unknown = false;
};

inline Type1Indicators type1_indicators(const Dataset& ds) {
  require_type1(ds);
  const auto n = static_cast<Eigen::Index>(ds.n());
  Type1Indicators ind{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                      Eigen::VectorXd::Zero(n), 1.0, false};
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (ds.type1_status(static_cast<std::size_t>(i))) {
      case FailureStatus::Failure:
        ind.known(i) = 1.0;
        ind.known_failure(i) = 1.0;
        break;
      case FailureStatus::Censored:
        ind.known(i) = 1.0;
        ind.known_censored(i) = 1.0;
        break;
      case FailureStatus::Unknown:
        ind.unknown(i) = 1.0;
        ind.any_unknown = true;
        break;
    }
  }
  ind.rho = ind.known.sum() / static_cast<double>(n);
  return ind;
}

// Event weights of S2: (1 - xi) dN - rho^{-1}(1 - rho) xi dN^c.
inline Eigen::VectorXd s2_weights(const Type1Indicators& ind) {
  if (ind.rho <= 0.0) throw Error(ErrorCode::RhoZero, "no record has a known failure indicator");
  return ind.unknown - ((1.0 - ind.rho) / ind.rho) * ind.known_censored;
}

inline void check_weight_matrix(const Eigen::MatrixXd& D, std::size_t p) {
  if (D.rows() != static_cast<Eigen::Index>(p) || D.cols() != static_cast<Eigen::Index>(p)) {
    throw Error(ErrorCode::DimensionMismatch, "weight matrix D must be " + std::to_string(p) + "x" +
                                                  std::to_string(p));
  }
  if (!D.allFinite()) throw Error(ErrorCode::NonFiniteValue, "weight matrix D has non-finite entries");
}

inline EstimatingFunction type1_function(const Dataset& ds, const ScoreKind& kind, const Type1Indicators& ind) {
  EstimatingFunction ef;
  switch (kind.type) {
    case ScoreType::FullData:
      if (ind.any_unknown) {
        throw Error(ErrorCode::UnknownStatusInFullData, "full-data score requires every failure indicator");
      }
      ef.primary = ind.known_failure;
      break;
    case ScoreType::CompleteCase:
      ef.risk_weight = ind.known;
      ef.primary = ind.known_failure;
      break;
    case ScoreType::S1:
      ef.primary = ind.known_failure;
      break;
    case ScoreType::S2:
      ef.primary = s2_weights(ind);
      break;
    case ScoreType::Combined:
      check_weight_matrix(kind.D, ds.p());
      ef.primary = ind.known_failure;
      ef.secondary = s2_weights(ind);
      ef.weight = kind.D;
      break;
  }
  return ef;
}

inline bool has_events(const EstimatingFunction& ef) {
  return (ef.primary.array() != 0.0).any() || (ef.has_secondary() && (ef.secondary.array() != 0.0).any());
}

}  // namespace detail

inline Eigen::VectorXd score(const Dataset& ds, const Eigen::VectorXd& beta, const ScoreKind& kind) {
  const auto ind = detail::type1_indicators(ds);
  return detail::evaluate(ds, detail::type1_function(ds, kind, ind), beta, false).score;
}

inline Eigen::MatrixXd score_jacobian(const Dataset& ds, const Eigen::VectorXd& beta, const ScoreKind& kind) {
  const auto ind = detail::type1_indicators(ds);
  return detail::evaluate(ds, detail::type1_function(ds, kind, ind), beta, true).jacobian;
}

/// V_hat, V_hat_CZ and V_hat_2 evaluated at beta. V and V_CZ are normalized by
/// the number of records with a known indicator.
struct CovarianceComponents {
  Eigen::MatrixXd V;
  Eigen::MatrixXd V_cz;
  Eigen::MatrixXd V2;
  double rho = 1.0;
};

namespace detail {

// Shared by Type I and Type II: information-type average over events with
// weight `w` and empirical covariance of the residual sums over `cw` records,
// both normalized by `norm`.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> information_and_residual_cov(const Dataset& ds,
                                                                                const Eigen::VectorXd& beta,
                                                                                const Eigen::VectorXd& w,
                                                                                const Eigen::VectorXd& cw,
                                                                                double norm) {
  const Eigen::Index p = static_cast<Eigen::Index>(ds.p());
  const RiskSums rs = risk_sums(ds, beta, Eigen::VectorXd(), true);
  const auto& z = ds.covariates();
  const auto& groups = ds.tie_groups();
  const auto order = ds.event_order();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Eigen::VectorXd zb;
    Eigen::MatrixXd info;
    bool ready = false;
    for (std::size_t k = groups[g].begin; k < groups[g].end; ++k) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      if (w(i) == 0.0 && cw(i) == 0.0) continue;
      if (!ready) {
        zb = rs.zbar(g);
        info = rs.second_moment(g, p) - zb * zb.transpose();
        ready = true;
      }
      if (w(i) != 0.0) V += w(i) * info;
      if (cw(i) != 0.0) {
        const Eigen::VectorXd r = z.row(i).transpose() - zb;
        outer += cw(i) * r * r.transpose();
        mean += cw(i) * r;
      }
    }
  }
  V /= norm;
  outer /= norm;
  mean /= norm;
  return {symmetrize(V), symmetrize(Eigen::MatrixXd(outer - mean * mean.transpose()))};
}

}  // namespace detail

inline CovarianceComponents estimate_covariance_components(const Dataset& ds, const Eigen::VectorXd& beta) {
  const auto ind = detail::type1_indicators(ds);
  if (ind.rho <= 0.0) throw Error(ErrorCode::RhoZero, "no record has a known failure indicator");
  if (!(ind.known_failure.array() != 0.0).any()) {
    throw Error(ErrorCode::NoCompleteEvents, "no failure with a known indicator");
  }
  auto [V, Vcz] = detail::information_and_residual_cov(ds, beta, ind.known_failure, ind.known_censored,
                                                       ind.known.sum());
  const double r = ind.rho;
  Eigen::MatrixXd V2 = (1.0 - r) * V + ((1.0 - r) / r) * Vcz;
  return {std::move(V), std::move(Vcz), std::move(V2), r};
}

/// n^{-1}-normalized information of S1 over all known failures.
inline Eigen::MatrixXd v1_hat(const Dataset& ds, const Eigen::VectorXd& beta) {
  const auto ind = detail::type1_indicators(ds);
  return detail::information_and_residual_cov(ds, beta, ind.known_failure, Eigen::VectorXd::Zero(ind.known.size()),
                                              static_cast<double>(ds.n()))
      .first;
}

/// Sandwich {rV + (1-r)DV}^{-1}(rV + D V2 D'){rV + (1-r)VD'}^{-1}.
inline Eigen::MatrixXd sigma_of_D(const Eigen::MatrixXd& V, const Eigen::MatrixXd& V2, double rho,
                                  const Eigen::MatrixXd& D) {
  const Eigen::MatrixXd left = rho * V + (1.0 - rho) * D * V;
  const Eigen::MatrixXd right = rho * V + (1.0 - rho) * V * D.transpose();
  const Eigen::MatrixXd li = detail::inverse_or_throw(left, ErrorCode::SingularBread, "sandwich bread is singular");
  const Eigen::MatrixXd ri = detail::inverse_or_throw(right, ErrorCode::SingularBread, "sandwich bread is singular");
  return li * (rho * V + D * V2 * D.transpose()) * ri;
}

/// Sigma at the optimal weight, {rV + (1-r)^2 V V2^{-1} V}^{-1}. A singular V2
/// is replaced by its pseudo-inverse.
inline Eigen::MatrixXd sigma_optimal(const Eigen::MatrixXd& V, const Eigen::MatrixXd& V2, double rho) {
  const Eigen::MatrixXd V2inv = detail::is_singular(V2) ? detail::pseudo_inverse(V2)
                                                        : Eigen::MatrixXd(V2.fullPivLu().inverse());
  const Eigen::MatrixXd m = rho * V + (1.0 - rho) * (1.0 - rho) * V * V2inv * V;
  return detail::symmetrize(detail::inverse_or_throw(m, ErrorCode::SingularBread, "optimal information is singular"));
}

/// Root of the selected estimating function with its covariance estimate.
inline FitResult solve(const Dataset& ds, const ScoreKind& kind, const Eigen::VectorXd& init,
                       const SolverOptions& opts = {}) {
  const auto ind = detail::type1_indicators(ds);
  if (kind.type == ScoreType::S2) {
    throw Error(ErrorCode::InvalidArgument, "S2 alone does not identify beta; use a combined score");
  }
  if (init.size() != static_cast<Eigen::Index>(ds.p())) {
    throw Error(ErrorCode::DimensionMismatch, "initial value has the wrong dimension");
  }
  const auto ef = detail::type1_function(ds, kind, ind);
  if (!detail::has_events(ef)) throw Error(ErrorCode::NoEvents, "no usable failure times for this estimator");

  const auto sol = detail::newton_solve(ds, ef, init, opts);
  const double n = static_cast<double>(ds.n());

  FitResult fit;
  fit.beta = sol.beta;
  fit.rho_hat = ind.rho;
  fit.iterations = sol.iterations;
  fit.final_score_norm = sol.score_norm;
  switch (kind.type) {
    case ScoreType::FullData:
      fit.method = FitMethod::FullData;
      fit.covariance = detail::inverse_or_throw(-sol.jacobian, ErrorCode::SingularJacobian, "information is singular");
      break;
    case ScoreType::S1:
      fit.method = FitMethod::S1;
      fit.weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.p()), static_cast<Eigen::Index>(ds.p()));
      fit.covariance = detail::inverse_or_throw(-sol.jacobian, ErrorCode::SingularJacobian, "information is singular");
      break;
    case ScoreType::CompleteCase:
      // Inverse partial-likelihood information of the complete cases. The
      // full-risk-set form (rho_hat V_hat)^{-1} / n is asymptotically equal
      // but understates the variance at n = 100 with heavy missingness.
      fit.method = FitMethod::CompleteCase;
      fit.covariance = detail::inverse_or_throw(-sol.jacobian, ErrorCode::SingularJacobian, "information is singular");
      break;
    case ScoreType::Combined: {
      fit.method = FitMethod::Combined;
      fit.weight = kind.D;
      const auto c = estimate_covariance_components(ds, sol.beta);
      fit.covariance = sigma_of_D(c.V, c.V2, c.rho, kind.D) / n;
      break;
    }
    case ScoreType::S2:
      break;
  }
  fit.covariance = detail::symmetrize(fit.covariance);
  return fit;
}

/// D_hat* = (1 - rho) V V2^{-1}, with V2's pseudo-inverse when it is singular.
inline std::pair<Eigen::MatrixXd, bool> optimal_weight(const CovarianceComponents& c) {
  if (detail::is_singular(c.V2)) return {(1.0 - c.rho) * c.V * detail::pseudo_inverse(c.V2), true};
  return {(1.0 - c.rho) * c.V * c.V2.fullPivLu().inverse(), false};
}

/// Two-stage adaptive estimator: solve S1 = 0, plug the estimated optimal
/// weight into S1 + D S2 and re-solve from the first-stage root.
inline FitResult adaptive_fit(const Dataset& ds, const SolverOptions& opts = {}) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.p()));
  const FitResult first = solve(ds, ScoreKind::s1(), zero, opts);
  const auto c0 = estimate_covariance_components(ds, first.beta);
  auto [D, fallback] = optimal_weight(c0);

  const auto ind = detail::type1_indicators(ds);
  const auto ef = detail::type1_function(ds, ScoreKind::combined(D), ind);
  const auto sol = detail::newton_solve(ds, ef, first.beta, opts);

  const auto c = estimate_covariance_components(ds, sol.beta);
  FitResult fit;
  fit.beta = sol.beta;
  fit.rho_hat = ind.rho;
  fit.method = FitMethod::Adaptive;
  fit.weight = D;
  fit.pseudo_inverse_fallback = fallback;
  fit.iterations = first.iterations + sol.iterations;
  fit.final_score_norm = sol.score_norm;
  fit.covariance = sigma_optimal(c.V, c.V2, c.rho) / static_cast<double>(ds.n());
  if (fallback) fit.warnings.emplace_back("V2 singular; optimal weight uses its pseudo-inverse");
  return fit;
}

struct WaldComponent {
  double statistic;
  bool reject;
};

/// Per-component z = (beta_k - null_k) / se_k against the two-sided normal
/// critical value at `level`.
inline std::vector<WaldComponent> wald_test(const FitResult& fit, const Eigen::VectorXd& null_beta,
                                            double level = 0.05) {
  if (null_beta.size() != fit.beta.size()) {
    throw Error(ErrorCode::DimensionMismatch, "null value has the wrong dimension");
  }
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  const double crit = boost::math::quantile(boost::math::normal(), 1.0 - level / 2.0);
  std::vector<WaldComponent> out;
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    const double v = fit.covariance(k, k);
    if (!(v > 0.0)) throw Error(ErrorCode::ZeroVariance, "zero variance for component " + std::to_string(k));
    const double z = (fit.beta(k) - null_beta(k)) / std::sqrt(v);
    out.push_back({z, std::abs(z) > crit});
  }
  return out;
}

}  // namespace missurv

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "missurv/cox_engine.hpp"
#include "missurv/curves.hpp"
#include "missurv/detail/estimating.hpp"
#include "missurv/error.hpp"
#include "missurv/survival_data.hpp"

namespace missurv {

/// Cumulative baseline hazard under the Cox model.
///
/// `a_path` column k is a(t) = int zbar(beta, s) dLambda_1(beta, s) at jump k
/// and `hz_path[k]` is n^{-1} sum_j Y_j exp(beta'Z_j) there.
struct BaselineCurve : HazardCurve {
  Eigen::VectorXd beta_used;
  Eigen::MatrixXd a_path;
  std::vector<double> hz_path;
};

struct BaselineVariance {
  double variance;   // plug-in variance of sqrt(n){Lambda_k(beta_hat, t) - Lambda_0(t)}
  std::size_t at_risk;  // risk set size at t, to judge tail reliability
};

namespace detail {

// Everything the baseline variance plug-ins need, computed once per fit.
//   prob     : rho_hat (Type I) or tau_hat (Type II)
//   primary  : per-record weights of the Lambda_1 numerator
//   moment   : per-record weights c_i with E g ~ sum_i c_i g_i
//   other    : indicator of the observed complementary event (censoring, or
//              a known other-cause death) that feeds N^CZ and N^CH
struct BaselineModel {
  const Dataset* ds = nullptr;
  Eigen::VectorXd beta;
  double prob = 1.0;
  Eigen::MatrixXd sigma;  // asymptotic covariance of sqrt(n)(beta_hat - beta_0)
  Eigen::MatrixXd omega;  // {pV + (1-p)DV}^{-1} D
  Eigen::VectorXd primary;
  Eigen::VectorXd moment;
  Eigen::VectorXd other;

  RiskSums rs;              // unshifted, full risk set
  std::vector<double> jump1;  // Lambda_1 increment per tie group
  Eigen::VectorXd en_cz;      // E N^CZ(infinity)
  std::vector<Eigen::VectorXd> n_cz;  // per record (in input order), zero where other == 0

  void prepare() {
    const Dataset& d = *ds;
    const Eigen::Index p = static_cast<Eigen::Index>(d.p());
    rs = risk_sums(d, beta, Eigen::VectorXd(), false, false);
    const auto& groups = d.tie_groups();
    const auto order = d.event_order();
    jump1.assign(groups.size(), 0.0);
    n_cz.assign(d.n(), Eigen::VectorXd::Zero(p));
    en_cz = Eigen::VectorXd::Zero(p);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      double num = 0.0;
      for (std::size_t k = groups[g].begin; k < groups[g].end; ++k) {
        const auto i = static_cast<Eigen::Index>(order[k]);
        num += primary(i);
        if (other(i) != 0.0) {
          n_cz[order[k]] = d.covariates().row(i).transpose() - rs.zbar(g);
          en_cz += moment(i) * n_cz[order[k]];
        }
      }
      if (num != 0.0) jump1[g] = num / (prob * rs.s0(static_cast<Eigen::Index>(g)));
    }
  }

  BaselineVariance evaluate(int which, double t) const {
    const Dataset& d = *ds;
    const Eigen::Index p = static_cast<Eigen::Index>(d.p());
    const double n = static_cast<double>(d.n());
    const auto& groups = d.tie_groups();
    const auto order = d.event_order();

    double lam = 0.0;
    double integral = 0.0;  // n int dLambda_1 / S0
    Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
    double e_ch = 0.0;
    double e_ch2 = 0.0;
    Eigen::VectorXd e_czch = Eigen::VectorXd::Zero(p);
    for (std::size_t g = 0; g < groups.size() && groups[g].time <= t; ++g) {
      const double s0 = rs.s0(static_cast<Eigen::Index>(g));
      if (jump1[g] != 0.0) {
        lam += jump1[g];
        integral += n * jump1[g] / s0;
        a += rs.zbar(g) * jump1[g];
      }
      for (std::size_t k = groups[g].begin; k < groups[g].end; ++k) {
        const auto i = static_cast<Eigen::Index>(order[k]);
        if (other(i) == 0.0) continue;
        const double nch = n / s0;
        e_ch += moment(i) * nch;
        e_ch2 += moment(i) * nch * nch;
        e_czch += moment(i) * nch * n_cz[order[k]];
      }
    }

    const double c = (1.0 - prob) / prob;
    const double quad = a.dot(sigma * a);
    double v = 0.0;
    if (which == 1) {
      v = integral / prob - c * lam * lam + quad;
      if (c != 0.0) v -= 2.0 * c * a.dot(omega * en_cz) * lam;
    } else {
      const double var_ch = e_ch2 - e_ch * e_ch;
      const Eigen::VectorXd cross = e_czch - en_cz * e_ch;
      v = integral + c * var_ch + quad;
      if (c != 0.0) v -= 2.0 * c * a.dot(omega * cross);
    }
    return {v, risk_set_size(d, t)};
  }
};

inline Eigen::MatrixXd omega_matrix(const Eigen::MatrixXd& V, double prob, const Eigen::MatrixXd& D) {
  if (prob >= 1.0) return Eigen::MatrixXd::Zero(D.rows(), D.cols());
  return inverse_or_throw(prob * V + (1.0 - prob) * D * V, ErrorCode::SingularBread, "sandwich bread is singular") *
         D;
}

inline BaselineCurve baseline_curve(const Dataset& ds, const Eigen::VectorXd& beta, const Eigen::VectorXd& numer,
                                    double denom_scale, const Eigen::VectorXd& lambda1_numer, double prob,
                                    std::string name) {
  const auto rs = risk_sums(ds, beta, Eigen::VectorXd(), false, false);
  const auto& groups = ds.tie_groups();
  const auto order = ds.event_order();
  const Eigen::Index p = static_cast<Eigen::Index>(ds.p());
  const double n = static_cast<double>(ds.n());
  BaselineCurve c;
  c.estimator = std::move(name);
  c.beta_used = beta;
  c.reliable_until = -std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> a_cols;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
  double v = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double num = 0.0;
    double num1 = 0.0;
    for (std::size_t k = groups[g].begin; k < groups[g].end; ++k) {
      num += numer(static_cast<Eigen::Index>(order[k]));
      num1 += lambda1_numer(static_cast<Eigen::Index>(order[k]));
    }
    const double s0 = rs.s0(static_cast<Eigen::Index>(g));
    if (num1 != 0.0) a += rs.zbar(g) * (num1 / (prob * s0));
    if (num1 > 0.0 && groups[g].time > c.reliable_until) c.reliable_until = groups[g].time;
    if (num == 0.0) continue;
    v += num / (denom_scale * s0);
    c.jump_times.push_back(groups[g].time);
    c.values.push_back(v);
    c.hz_path.push_back(s0 / n);
    a_cols.push_back(a);
  }
  c.a_path.resize(p, static_cast<Eigen::Index>(a_cols.size()));
  for (std::size_t k = 0; k < a_cols.size(); ++k) c.a_path.col(static_cast<Eigen::Index>(k)) = a_cols[k];
  return c;
}

inline void attach_baseline_variances(BaselineCurve& c, const BaselineModel& m, int which) {
  c.variances.clear();
  for (double t : c.jump_times) c.variances.push_back(m.evaluate(which, t).variance);
}

}  // namespace detail

/// Breslow estimator at a supplied beta.
inline BaselineCurve breslow(const Dataset& ds, const Eigen::VectorXd& beta) {
  const auto ind = detail::type1_indicators(ds);
  if (ind.any_unknown) throw Error(ErrorCode::UnknownStatusPresent, "Breslow estimator needs every failure indicator");
  if (beta.size() != static_cast<Eigen::Index>(ds.p())) throw Error(ErrorCode::DimensionMismatch, "beta dimension");
  return detail::baseline_curve(ds, beta, ind.known_failure, 1.0, ind.known_failure, 1.0, "breslow");
}

namespace detail {

inline BaselineModel type1_baseline_model(const Dataset& ds, const FitResult& fit) {
  if (!fit.weight) throw Error(ErrorCode::MissingD, "fit does not carry a weight matrix D");
  const auto ind = type1_indicators(ds);
  if (ind.rho <= 0.0) throw Error(ErrorCode::RhoZero, "no record has a known failure indicator");
  const auto comps = estimate_covariance_components(ds, fit.beta);
  BaselineModel m;
  m.ds = &ds;
  m.beta = fit.beta;
  m.prob = ind.rho;
  m.sigma = fit.covariance * static_cast<double>(ds.n());
  m.omega = omega_matrix(comps.V, ind.rho, *fit.weight);
  m.primary = ind.known_failure;
  m.moment = ind.known / ind.known.sum();
  m.other = ind.known_censored;
  m.prepare();
  return m;
}

}  // namespace detail

/// sum xi dN^u / (rho_hat sum Y exp(beta'Z)) at the fitted beta. Variances
/// are attached when the fit carries a weight matrix.
inline BaselineCurve baseline_lambda1(const Dataset& ds, const FitResult& fit) {
  const auto ind = detail::type1_indicators(ds);
  if (ind.rho <= 0.0) throw Error(ErrorCode::RhoZero, "no record has a known failure indicator");
  auto c = detail::baseline_curve(ds, fit.beta, ind.known_failure, ind.rho, ind.known_failure, ind.rho, "baseline1");
  if (fit.weight) detail::attach_baseline_variances(c, detail::type1_baseline_model(ds, fit), 1);
  return c;
}

/// Baseline hazard using every record: known failures, all unknown-indicator
/// jumps, minus the reweighted known censorings.
inline BaselineCurve baseline_lambda2(const Dataset& ds, const FitResult& fit) {
  const auto ind = detail::type1_indicators(ds);
  if (ind.rho <= 0.0) throw Error(ErrorCode::RhoZero, "no record has a known failure indicator");
  const Eigen::VectorXd numer = ind.known_failure + ind.unknown - ((1.0 - ind.rho) / ind.rho) * ind.known_censored;
  auto c = detail::baseline_curve(ds, fit.beta, numer, 1.0, ind.known_failure, ind.rho, "baseline2");
  if (fit.weight) detail::attach_baseline_variances(c, detail::type1_baseline_model(ds, fit), 2);
  return c;
}

/// Plug-in variance of sqrt(n){Lambda_k(beta_hat, t) - Lambda_0(t)}, k = which.
inline BaselineVariance baseline_variance(const Dataset& ds, const FitResult& fit, int which, double t) {
  if (which != 1 && which != 2) throw Error(ErrorCode::InvalidArgument, "which must be 1 or 2");
  return detail::type1_baseline_model(ds, fit).evaluate(which, t);
}

}  // namespace missurv

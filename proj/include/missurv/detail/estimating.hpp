#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "missurv/detail/linalg.hpp"
#include "missurv/error.hpp"
#include "missurv/survival_data.hpp"

namespace missurv::detail {

// Risk-set sums per tie group:
//   s0 = sum_j r_j Y_j(t) exp(b'Z_j)
//   s1 = sum_j r_j Y_j(t) exp(b'Z_j) Z_j
//   s2 = sum_j r_j Y_j(t) exp(b'Z_j) Z_j Z_j'   (column-major p*p per group)
// Exponents are shifted by `shift`; multiply s0/s1/s2 by exp(shift) to get the
// unshifted sums. Ratios such as zbar do not depend on the shift.
struct RiskSums {
  Eigen::VectorXd s0;
  Eigen::MatrixXd s1;
  Eigen::MatrixXd s2;
  double shift = 0.0;

  Eigen::VectorXd zbar(std::size_t g) const {
    return s1.col(static_cast<Eigen::Index>(g)) / s0(static_cast<Eigen::Index>(g));
  }
  Eigen::MatrixXd second_moment(std::size_t g, Eigen::Index p) const {
    return Eigen::Map<const Eigen::MatrixXd>(s2.col(static_cast<Eigen::Index>(g)).data(), p, p) /
           s0(static_cast<Eigen::Index>(g));
  }
  // Unshifted s0 of group g.
  double absolute_s0(std::size_t g) const { return s0(static_cast<Eigen::Index>(g)) * std::exp(shift); }
};

// risk_weight empty means every record is in the risk set.
inline RiskSums risk_sums(const Dataset& ds, const Eigen::VectorXd& beta, const Eigen::VectorXd& risk_weight,
                          bool want_s2, bool shifted = true) {
  const auto& z = ds.covariates();
  const Eigen::Index p = z.cols();
  const auto& groups = ds.tie_groups();
  const auto order = ds.event_order();
  const auto G = static_cast<Eigen::Index>(groups.size());

  Eigen::VectorXd eta = p > 0 ? Eigen::VectorXd(z * beta) : Eigen::VectorXd::Zero(z.rows());
  double shift = 0.0;
  if (shifted && eta.size() > 0) shift = eta.maxCoeff();

  RiskSums rs;
  rs.shift = shift;
  rs.s0 = Eigen::VectorXd::Zero(G);
  rs.s1 = Eigen::MatrixXd::Zero(p, G);
  if (want_s2) rs.s2 = Eigen::MatrixXd::Zero(p * p, G);

  double a0 = 0.0;
  Eigen::VectorXd a1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd a2 = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index g = G - 1; g >= 0; --g) {
    const auto& grp = groups[static_cast<std::size_t>(g)];
    for (std::size_t k = grp.begin; k < grp.end; ++k) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      const double r = risk_weight.size() == 0 ? 1.0 : risk_weight(i);
      if (r == 0.0) continue;
      const double w = r * std::exp(eta(i) - shift);
      a0 += w;
      if (p > 0) {
        a1.noalias() += w * z.row(i).transpose();
        if (want_s2) a2.noalias() += w * z.row(i).transpose() * z.row(i);
      }
    }
    rs.s0(g) = a0;
    rs.s1.col(g) = a1;
    if (want_s2) rs.s2.col(g) = Eigen::Map<const Eigen::VectorXd>(a2.data(), p * p);
  }
  return rs;
}

// Per-group aggregation of per-record event weights: W_g = sum w_i and
// ZW_g = sum w_i Z_i over the records of group g.
struct GroupedEvents {
  Eigen::VectorXd weight;
  Eigen::MatrixXd weighted_z;
};

inline GroupedEvents group_events(const Dataset& ds, const Eigen::VectorXd& w) {
  const auto& z = ds.covariates();
  const auto& groups = ds.tie_groups();
  const auto order = ds.event_order();
  GroupedEvents ge;
  ge.weight = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(groups.size()));
  ge.weighted_z = Eigen::MatrixXd::Zero(z.cols(), static_cast<Eigen::Index>(groups.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t k = groups[g].begin; k < groups[g].end; ++k) {
      const auto i = static_cast<Eigen::Index>(order[k]);
      if (w(i) == 0.0) continue;
      ge.weight(static_cast<Eigen::Index>(g)) += w(i);
      if (z.cols() > 0) ge.weighted_z.col(static_cast<Eigen::Index>(g)) += w(i) * z.row(i).transpose();
    }
  }
  return ge;
}

struct ScoreEval {
  Eigen::VectorXd score;
  Eigen::MatrixXd jacobian;
};

// sum_i w_i {Z_i - zbar(X_i)} and its derivative -sum_i w_i {s2/s0 - zbar zbar'}.
inline ScoreEval weighted_score(const Dataset& ds, const RiskSums& rs, const Eigen::VectorXd& w, bool want_jac) {
  const Eigen::Index p = static_cast<Eigen::Index>(ds.p());
  const GroupedEvents ge = group_events(ds, w);
  ScoreEval out{Eigen::VectorXd::Zero(p), want_jac ? Eigen::MatrixXd::Zero(p, p) : Eigen::MatrixXd()};
  for (Eigen::Index g = 0; g < ge.weight.size(); ++g) {
    const double W = ge.weight(g);
    if (W == 0.0) continue;
    if (!(rs.s0(g) > 0.0)) {
      throw Error(ErrorCode::EmptyRiskSetAtEvent, "event time with an empty risk set");
    }
    const Eigen::VectorXd zb = rs.zbar(static_cast<std::size_t>(g));
    out.score += ge.weighted_z.col(g) - W * zb;
    if (want_jac) {
      out.jacobian -= W * (rs.second_moment(static_cast<std::size_t>(g), p) - zb * zb.transpose());
    }
  }
  return out;
}

/// Estimating function of the form U1(b) + D U2(b), where
///   Uk(b) = sum_i w^(k)_i {Z_i - zbar_r(b, X_i)}
/// and zbar_r is the exp(b'Z)-weighted covariate mean over the risk set
/// restricted by `risk_weight`. Every Cox-type score in the library is an
/// instance: only the weights differ.
struct EstimatingFunction {
  Eigen::VectorXd risk_weight;  // empty: full risk set
  Eigen::VectorXd primary;
  Eigen::VectorXd secondary;    // empty: no second term
  Eigen::MatrixXd weight;       // D, p x p

  bool has_secondary() const { return secondary.size() > 0; }
};

inline ScoreEval evaluate(const Dataset& ds, const EstimatingFunction& ef, const Eigen::VectorXd& beta,
                          bool want_jac) {
  const RiskSums rs = risk_sums(ds, beta, ef.risk_weight, want_jac);
  ScoreEval e = weighted_score(ds, rs, ef.primary, want_jac);
  if (ef.has_secondary()) {
    const ScoreEval e2 = weighted_score(ds, rs, ef.secondary, want_jac);
    e.score += ef.weight * e2.score;
    if (want_jac) e.jacobian += ef.weight * e2.jacobian;
  }
  return e;
}

struct SolverOptions {
  double score_tol_per_record = 1e-8;  // convergence when ||U||_inf < this * n
  double step_tol = 1e-12;
  int max_iterations = 50;
  int max_halvings = 30;
};

struct SolveOutcome {
  Eigen::VectorXd beta;
  Eigen::MatrixXd jacobian;
  int iterations = 0;
  double score_norm = 0.0;
};

/// Damped Newton: b <- b - J^{-1} U, halving the step while ||U||_2 fails to
/// decrease. The Jacobian at the returned root is checked for singularity even
/// when no step was needed.
inline SolveOutcome newton_solve(const Dataset& ds, const EstimatingFunction& ef, Eigen::VectorXd beta,
                                 const SolverOptions& opts) {
  const double tol = opts.score_tol_per_record * static_cast<double>(ds.n());
  ScoreEval cur = evaluate(ds, ef, beta, true);
  int it = 0;
  while (cur.score.lpNorm<Eigen::Infinity>() >= tol) {
    if (it >= opts.max_iterations) {
      throw Error(ErrorCode::MaxIterations, "Newton iteration did not converge");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cur.jacobian);
    if (!cur.jacobian.allFinite() || !lu.isInvertible()) {
      throw Error(ErrorCode::SingularJacobian, "score Jacobian is singular");
    }
    Eigen::VectorXd step = lu.solve(cur.score);
    const double base = cur.score.norm();
    ScoreEval next;
    Eigen::VectorXd trial;
    bool improved = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      trial = beta - step;
      next = evaluate(ds, ef, trial, true);
      if (next.score.allFinite() && next.score.norm() < base) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    ++it;
    if (!improved) {
      throw Error(ErrorCode::MaxIterations, "step halving failed to reduce the score");
    }
    beta = trial;
    cur = std::move(next);
    if (step.norm() < opts.step_tol && cur.score.lpNorm<Eigen::Infinity>() >= tol) {
      throw Error(ErrorCode::MaxIterations, "Newton steps stalled before the score converged");
    }
  }
  if (is_singular(cur.jacobian)) throw Error(ErrorCode::SingularJacobian, "score Jacobian is singular");
  return {std::move(beta), std::move(cur.jacobian), it, cur.score.lpNorm<Eigen::Infinity>()};
}

}  // namespace missurv::detail

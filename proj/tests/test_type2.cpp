#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace missurv;
using namespace testutil;

namespace {

constexpr Type2Status I = Type2Status::CauseOfInterest;
constexpr Type2Status O = Type2Status::OtherCause;
constexpr Type2Status X = Type2Status::UnknownCause;
constexpr Type2Status K = Type2Status::Censored;

Dataset all_known(std::mt19937_64& g, const RandomSpec& s) { return random_type2(g, s, 1.0); }

struct PhiPlug {
  double L = 0, LQ = 0, A = 0, AQ = 0, tau = 0;
};

// Plug-in functionals of the cause of interest and the reweighted known
// other-cause hazard, summed record by record.
PhiPlug brute_phi(const Dataset& ds, double t) {
  PhiPlug p;
  const double n = static_cast<double>(ds.n());
  double deaths = 0, known = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto s = ds.type2_status(i);
    deaths += s != K;
    known += s == I || s == O;
  }
  p.tau = known / deaths;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.time(i) > t) continue;
    double y = 0;
    for (std::size_t j = 0; j < ds.n(); ++j) y += ds.time(j) >= ds.time(i);
    const auto s = ds.type2_status(i);
    if (s == I) {
      p.L += 1 / (p.tau * y);
      p.A += n / (p.tau * y * y);
    } else if (s == O) {
      p.LQ += 1 / (p.tau * y);
      p.AQ += n / (p.tau * y * y);
    }
  }
  return p;
}

}  // namespace

TEST(Type2, TauHat) {
  EXPECT_NEAR(tau_hat(type2({1, 2, 3, 4}, {I, X, O, K})), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(error_code_of([] { tau_hat(type2({1, 2}, {K, K})); }), ErrorCode::NoDeaths);
  EXPECT_EQ(error_code_of([] { fit_phi(type2({1, 2}, {X, K}, {{1}, {0}}), PhiKind::s1()); }),
            ErrorCode::TauDegenerate);
}

TEST(Type2, ScoreHandExample) {
  const auto ds = type2({1, 2}, {I, K}, {{1}, {0}});
  EXPECT_NEAR(score_phi(ds, Eigen::VectorXd::Zero(1), PhiKind::s1())(0), 0.5, 1e-12);
  EXPECT_EQ(score_phi(ds, Eigen::VectorXd::Zero(1), PhiKind::s2())(0), 0.0);
}

TEST(Type2, S2VanishesWhenCausesKnown) {
  std::mt19937_64 g(81);
  for (int k = 0; k < 50; ++k) {
    const auto ds = all_known(g, {.n = 30, .p = 2, .censor_rate = 0.5, .ties = k % 2 == 0});
    const auto s2 = score_phi(ds, random_beta(g, 2), PhiKind::s2());
    EXPECT_EQ(s2(0), 0.0);
    EXPECT_EQ(s2(1), 0.0);
  }
}

TEST(Type2, Errors) {
  const auto ds = type2({1, 2, 3, 4}, {I, X, O, K}, {{1}, {0}, {2}, {1}});
  EXPECT_EQ(error_code_of([&] { fit_phi(ds, PhiKind::s2()); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_code_of([&] { fit_phi(ds, PhiKind::full_data()); }), ErrorCode::UnknownStatusInFullData);
  EXPECT_EQ(error_code_of([&] { fit_phi(ds, PhiKind::combined(Eigen::MatrixXd::Zero(2, 2))); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(error_code_of([&] { fit_phi(type1({1, 2}, {F, C}, {{1}, {0}}), PhiKind::s1()); }),
            ErrorCode::StatusTypeMismatch);
  EXPECT_EQ(error_code_of([] { estimate_phi_components(type2({1, 2}, {O, X}, {{1}, {0}}), Eigen::VectorXd::Zero(1)); }),
            ErrorCode::NoCompleteEvents);
  const auto known = type2({1, 2, 3}, {I, O, K});
  EXPECT_EQ(error_code_of([&] { one_sample_phi(known, 0.5, 3.0); }), ErrorCode::TauDegenerate);
  EXPECT_EQ(error_code_of([&] { sigma_phi_hat(known, 0.5, 3.0); }), ErrorCode::TauDegenerate);
  EXPECT_EQ(error_code_of([&] { lambda_phi_curve(known, 0.5); }), ErrorCode::TauDegenerate);
  EXPECT_EQ(error_code_of([&] { one_sample_phi(known, 1.5, 3.0); }), ErrorCode::InvalidArgument);
}

TEST(Type2, KnownCausesCollapseToCauseSpecificCox) {
  std::mt19937_64 g(82);
  for (int k = 0; k < 50; ++k) {
    const int p = 1 + k % 2;
    const auto ds = all_known(g, {.n = 40, .p = p, .censor_rate = 0.4, .ties = k % 3 == 0});
    const auto t1 = cause_as_type1(ds);
    FitResult ref;
    try {
      ref = solve(t1, ScoreKind::full_data(), Eigen::VectorXd::Zero(p));
    } catch (const Error&) {
      continue;
    }
    const auto s1 = fit_phi(ds, PhiKind::s1());
    const auto full = fit_phi(ds, PhiKind::full_data());
    const auto cc = fit_phi(ds, PhiKind::complete_case());
    const auto ad = fit_phi(ds, std::nullopt);
    EXPECT_EQ(s1.tau_hat, 1.0);
    for (int c = 0; c < p; ++c) {
      EXPECT_EQ(s1.beta(c), ref.beta(c));
      EXPECT_EQ(full.beta(c), ref.beta(c));
      EXPECT_EQ(cc.beta(c), ref.beta(c));
      EXPECT_NEAR(ad.beta(c), ref.beta(c), 1e-10);
    }
    const auto b1 = baseline_phi(ds, s1, 1);
    const auto br = breslow(t1, s1.beta);
    EXPECT_EQ(b1.jump_times, br.jump_times);
    EXPECT_EQ(b1.values, br.values);
    const auto na = nelson_aalen(t1);
    for (double t : {0.2, 0.6, 1.0}) {
      const auto os = one_sample_phi(ds, std::nullopt, t);
      EXPECT_EQ(os.alpha_used, 1.0);
      EXPECT_NEAR(os.estimate, na(t), 1e-12);
      EXPECT_NEAR(baseline_phi_variance(ds, s1, 1, t).variance,
                  baseline_variance(t1, solve(t1, ScoreKind::s1(), Eigen::VectorXd::Zero(p)), 1, t).variance,
                  1e-10 * (1 + baseline_phi_variance(ds, s1, 1, t).variance));
    }
  }
}

TEST(Type2, JacobianMatchesFiniteDifference) {
  std::mt19937_64 g(83);
  int checked = 0;
  for (int k = 0; checked < 100; ++k) {
    const int p = 1 + k % 3;
    const auto ds = random_type2(g, {.n = 35, .p = p, .censor_rate = 0.5, .ties = k % 3 == 0}, 0.6);
    const auto ind = detail::type2_indicators(ds);
    if (ind.tau == 0.0 || ind.tau == 1.0) continue;
    const auto b = random_beta(g, p);
    const auto D = random_matrix(g, p);
    for (const auto& kind : {PhiKind::s1(), PhiKind::s2(), PhiKind::complete_case(), PhiKind::combined(D)}) {
      const Eigen::MatrixXd J = score_phi_jacobian(ds, b, kind);
      for (int c = 0; c < p; ++c) {
        const double h = 1e-5 * std::max(1.0, std::abs(b(c)));
        Eigen::VectorXd bp = b, bm = b;
        bp(c) += h;
        bm(c) -= h;
        const Eigen::VectorXd fd = (score_phi(ds, bp, kind) - score_phi(ds, bm, kind)) / (2.0 * h);
        for (int r = 0; r < p; ++r) {
          EXPECT_LT(std::abs(fd(r) - J(r, c)) / std::max(1.0, std::abs(J(r, c))), 1e-5) << "instance " << k;
        }
      }
    }
    ++checked;
  }
}

TEST(Type2, OptimalWeightMinimisesSandwich) {
  std::mt19937_64 g(84);
  int checked = 0;
  for (int k = 0; checked < 100 && k < 400; ++k) {
    const int p = 1 + k % 3;
    const auto ds = random_type2(g, {.n = 60, .p = p, .censor_rate = 0.4}, 0.6);
    CovarianceComponents c;
    try {
      c = estimate_phi_components(ds, random_beta(g, p));
    } catch (const Error&) {
      continue;
    }
    if (c.rho == 1.0 || detail::is_singular(c.V2) || detail::is_singular(c.V)) continue;
    const Eigen::MatrixXd Dstar = (1.0 - c.rho) * c.V * c.V2.inverse();
    const Eigen::MatrixXd opt = sigma_optimal(c.V, c.V2, c.rho);
    EXPECT_LT((sigma_of_D(c.V, c.V2, c.rho, Dstar) - opt).norm(), 1e-8 * (1 + opt.norm()));
    Eigen::MatrixXd diff;
    try {
      diff = sigma_of_D(c.V, c.V2, c.rho, random_matrix(g, p)) - opt;
    } catch (const Error&) {
      continue;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (diff + diff.transpose()));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * (1 + opt.norm()));
    ++checked;
  }
  EXPECT_GE(checked, 100);
}

TEST(Type2, OneSampleVarianceMatchesRecordSums) {
  std::mt19937_64 g(85);
  for (int k = 0; k < 40; ++k) {
    const auto ds = random_type2(g, {.n = 30, .p = 0, .censor_rate = 0.4, .ties = k % 2 == 0}, 0.6);
    const auto ind = detail::type2_indicators(ds);
    if (ind.tau == 0.0 || ind.tau == 1.0) continue;
    for (double t : {0.3, 0.9}) {
      const auto p = brute_phi(ds, t);
      const auto aux = phi_functionals(ds, t);
      EXPECT_NEAR(aux.lambda1, p.L, 1e-12);
      EXPECT_NEAR(aux.lambda_g, p.LQ, 1e-12);
      EXPECT_NEAR(aux.a1, p.A, 1e-10);
      EXPECT_NEAR(aux.a_g, p.AQ, 1e-10);
      const double tol = 1e-10 * (1 + p.A + p.AQ);
      EXPECT_NEAR(sigma_phi_hat(ds, p.tau, t), p.A + (1 - p.tau) / p.tau * (p.AQ - p.LQ * p.LQ), tol);
      EXPECT_NEAR(sigma_phi_hat(ds, 1.0, t), (p.A - (1 - p.tau) * p.L * p.L) / p.tau, tol);
    }
  }
}

TEST(Type2, AlphaStarIsVertexAndLinear) {
  std::mt19937_64 g(86);
  int checked = 0;
  for (int k = 0; k < 300 && checked < 100; ++k) {
    const auto ds = random_type2(g, {.n = 40, .p = 0, .censor_rate = 0.5, .ties = k % 3 == 0}, 0.6);
    const auto ind = detail::type2_indicators(ds);
    if (ind.tau == 0.0 || ind.tau == 1.0) continue;
    const double t = 0.8;
    const double s0 = sigma_phi_hat(ds, 0.0, t);
    const double sh = sigma_phi_hat(ds, 0.5, t);
    const double s1 = sigma_phi_hat(ds, 1.0, t);
    const double a2 = 2 * s0 - 4 * sh + 2 * s1;
    const double a1 = -3 * s0 + 4 * sh - s1;
    if (!(a2 > 1e-8)) continue;
    const double vertex = -a1 / (2 * a2);
    EXPECT_NEAR(alpha_star_phi_raw(ds, t), vertex, 1e-10 * std::max(1.0, std::abs(vertex)));
    const double l1 = one_sample_phi(ds, 1.0, t).estimate;
    const double l0 = one_sample_phi(ds, 0.0, t).estimate;
    for (double a : {0.2, 0.55, 0.9}) {
      EXPECT_NEAR(one_sample_phi(ds, a, t).estimate, a * l1 + (1 - a) * l0, 1e-12 * (1 + std::abs(l1) + std::abs(l0)));
    }
    const auto adaptive = one_sample_phi(ds, std::nullopt, t);
    EXPECT_EQ(adaptive.alpha_used, std::clamp(alpha_star_phi_raw(ds, t), 0.0, 1.0));
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(Type2, AlphaStarIsTauWithoutOtherCauses) {
  const auto ds = type2({1, 2, 3, 4, 5, 6}, {I, X, I, K, I, X});
  EXPECT_NEAR(one_sample_phi(ds, std::nullopt, 5.5).alpha_used, tau_hat(ds), 1e-12);
}

TEST(Type2, CurveMatchesPointEstimates) {
  std::mt19937_64 g(87);
  const auto ds = random_type2(g, {.n = 50, .p = 0, .censor_rate = 0.4}, 0.6);
  const auto c = lambda_phi_curve(ds, 0.4);
  for (std::size_t k = 0; k < c.jump_times.size(); ++k) {
    const auto os = one_sample_phi(ds, 0.4, c.jump_times[k]);
    EXPECT_NEAR(c.values[k], os.estimate, 1e-12 * (1 + std::abs(os.estimate)));
    EXPECT_NEAR(c.variances[k], os.variance, 1e-10 * (1 + os.variance));
  }
}

TEST(Type2, BaselineHandValues) {
  const auto ds = type2({1, 2, 3, 4}, {I, X, O, I}, {{0}, {0}, {0}, {0}});
  Type2Fit fit;
  fit.beta = Eigen::VectorXd::Zero(1);
  // tau = 3/4; known interest at 1 and 4, unknown at 2, known other at 3.
  EXPECT_NEAR(baseline_phi(ds, fit, 1)(4.0), (0.25 + 1.0) / 0.75, 1e-12);
  EXPECT_NEAR(baseline_phi(ds, fit, 2)(4.0), 0.25 + 1.0 / 3.0 - (1.0 / 3.0) * 0.5 + 1.0, 1e-12);
}

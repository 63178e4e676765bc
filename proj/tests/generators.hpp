#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "missurv/missurv.hpp"

namespace testutil {

using missurv::Dataset;
using missurv::FailureStatus;
using missurv::SurvivalRecord;
using missurv::Type2Status;

inline constexpr FailureStatus F = FailureStatus::Failure;
inline constexpr FailureStatus C = FailureStatus::Censored;
inline constexpr FailureStatus U = FailureStatus::Unknown;

inline Dataset type1(const std::vector<double>& t, const std::vector<FailureStatus>& s,
                     const std::vector<std::vector<double>>& z = {}) {
  std::vector<SurvivalRecord> r;
  for (std::size_t i = 0; i < t.size(); ++i) r.push_back({t[i], s[i], z.empty() ? std::vector<double>{} : z[i]});
  return Dataset::validate(std::move(r));
}

inline Dataset type2(const std::vector<double>& t, const std::vector<Type2Status>& s,
                     const std::vector<std::vector<double>>& z = {}) {
  std::vector<SurvivalRecord> r;
  for (std::size_t i = 0; i < t.size(); ++i) r.push_back({t[i], s[i], z.empty() ? std::vector<double>{} : z[i]});
  return Dataset::validate(std::move(r));
}

// Random Type I data: exponential failures with hazard exp(0.5 z_1), exponential
// censoring, indicators observed with probability rho. With `ties` the times
// are rounded to a coarse grid.
struct RandomSpec {
  int n = 40;
  int p = 1;
  double rho = 0.7;
  double censor_rate = 0.5;
  bool ties = false;
};

inline double unif(std::mt19937_64& g) { return std::uniform_real_distribution<double>(0.0, 1.0)(g); }

inline Dataset random_type1(std::mt19937_64& g, const RandomSpec& s) {
  std::normal_distribution<double> nd;
  std::vector<SurvivalRecord> r;
  for (int i = 0; i < s.n; ++i) {
    SurvivalRecord rec;
    for (int k = 0; k < s.p; ++k) rec.covariates.push_back(nd(g));
    const double lin = s.p > 0 ? 0.5 * rec.covariates[0] : 0.0;
    const double t = -std::log(1.0 - unif(g)) / std::exp(lin);
    const double c = -std::log(1.0 - unif(g)) / s.censor_rate;
    rec.time = std::min(t, c);
    if (s.ties) rec.time = std::ceil(rec.time * 4.0) / 4.0;
    rec.status = t <= c ? F : C;
    if (unif(g) >= s.rho) rec.status = U;
    r.push_back(rec);
  }
  return Dataset::validate(std::move(r));
}

// Same with the indicators forced to be observed.
inline Dataset random_full(std::mt19937_64& g, RandomSpec s) {
  s.rho = 1.0;
  return random_type1(g, s);
}

// Competing risks: T1 hazard exp(0.5 z_1), T2 unit exponential, causes known
// with probability tau.
inline Dataset random_type2(std::mt19937_64& g, const RandomSpec& s, double tau) {
  std::normal_distribution<double> nd;
  std::vector<SurvivalRecord> r;
  for (int i = 0; i < s.n; ++i) {
    SurvivalRecord rec;
    for (int k = 0; k < s.p; ++k) rec.covariates.push_back(nd(g));
    const double lin = s.p > 0 ? 0.5 * rec.covariates[0] : 0.0;
    const double t1 = -std::log(1.0 - unif(g)) / std::exp(lin);
    const double t2 = -std::log(1.0 - unif(g));
    const double c = -std::log(1.0 - unif(g)) / s.censor_rate;
    const double t = std::min(t1, t2);
    rec.time = std::min(t, c);
    if (s.ties) rec.time = std::ceil(rec.time * 4.0) / 4.0;
    if (c < t) {
      rec.status = Type2Status::Censored;
    } else if (unif(g) >= tau) {
      rec.status = Type2Status::UnknownCause;
    } else {
      rec.status = t1 <= t2 ? Type2Status::CauseOfInterest : Type2Status::OtherCause;
    }
    r.push_back(rec);
  }
  return Dataset::validate(std::move(r));
}

// Type II data with every cause known, mapped to the Type I failure process of
// the cause of interest (other-cause deaths become censorings).
inline Dataset cause_as_type1(const Dataset& ds) {
  std::vector<SurvivalRecord> r;
  for (const auto& rec : ds.records()) {
    SurvivalRecord x = rec;
    x.status = std::get<Type2Status>(rec.status) == Type2Status::CauseOfInterest ? F : C;
    r.push_back(x);
  }
  return Dataset::validate(std::move(r));
}

inline Eigen::VectorXd random_beta(std::mt19937_64& g, int p) {
  std::normal_distribution<double> nd(0.0, 0.5);
  Eigen::VectorXd b(p);
  for (int k = 0; k < p; ++k) b(k) = nd(g);
  return b;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& g, int p) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) m(i, j) = nd(g);
  return m;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& g, int p) {
  const Eigen::MatrixXd a = random_matrix(g, p);
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(p, p);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace testutil

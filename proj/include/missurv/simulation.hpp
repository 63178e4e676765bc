#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "missurv/cox_engine.hpp"
#include "missurv/error.hpp"
#include "missurv/hazard_one_sample.hpp"
#include "missurv/survival_data.hpp"
#include "missurv/type2_missing.hpp"

namespace missurv {

enum class SimModel {
  Null,       // lambda(t | Z) = 1, Z ~ N(0, 1)
  CoxExp,     // lambda(t | Z) = exp(beta0 Z)
  OneSample,  // T ~ exp(1), no covariates
  Type2       // T1 hazard exp(beta0 Z), T2 ~ exp(1), cause of T1 is of interest
};

inline const char* model_name(SimModel m) {
  switch (m) {
    case SimModel::Null: return "null";
    case SimModel::CoxExp: return "cox-exp";
    case SimModel::OneSample: return "one-sample";
    case SimModel::Type2: return "type2";
  }
  return "unknown";
}

// How the censoring rate is chosen. Exact solves P(C < T) = target under the
// design's failure model; UnitRate uses target / (1 - target), the exact rate
// for unit exponential failures, whatever the covariate effect.
enum class Calibration { Exact, UnitRate };

struct SimDesign {
  SimModel model = SimModel::Null;
  double beta0 = 0.0;
  int n = 100;
  double rho_or_tau = 1.0;        // P(xi = 1)
  double target_censoring = 0.0;  // P(C < T)
  int reps = 1000;
  std::uint64_t master_seed = 1;
  std::vector<std::string> estimators;  // empty: the model's defaults
  double eval_time = std::log(2.0);     // one-sample designs only
  Calibration calibration = Calibration::Exact;
};

inline bool is_regression(SimModel m) { return m != SimModel::OneSample; }

inline std::vector<std::string> default_estimators(SimModel m) {
  if (m == SimModel::OneSample) return {"adaptive", "complete-case", "lo"};
  return {"full", "complete-case", "s1", "adaptive"};
}

inline void validate_design(const SimDesign& d) {
  if (d.n < 2) throw Error(ErrorCode::InvalidArgument, "design needs n >= 2");
  if (d.reps < 1) throw Error(ErrorCode::InvalidArgument, "design needs reps >= 1");
  if (!(d.rho_or_tau > 0.0 && d.rho_or_tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "missingness probability must lie in (0, 1]");
  }
  if (!std::isfinite(d.beta0)) throw Error(ErrorCode::NonFiniteValue, "beta0 is not finite");
  if (!(d.target_censoring >= 0.0)) throw Error(ErrorCode::InvalidArgument, "target censoring must be >= 0");
  const auto known = is_regression(d.model) ? std::vector<std::string>{"full", "complete-case", "s1", "adaptive"}
                                            : std::vector<std::string>{"adaptive", "complete-case", "lo", "full"};
  for (const auto& e : d.estimators) {
    if (std::find(known.begin(), known.end(), e) == known.end()) {
      throw Error(ErrorCode::InvalidArgument, "estimator '" + e + "' does not apply to model " + model_name(d.model));
    }
  }
}

namespace detail {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// 64-node Gauss-Hermite rule for the weight exp(-x^2), by Golub-Welsch.
inline const Quadrature& gauss_hermite64() {
  static const Quadrature q = [] {
    constexpr int m = 64;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (int k = 1; k < m; ++k) J(k - 1, k) = J(k, k - 1) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Quadrature out;
    const double mu0 = std::sqrt(M_PI);
    for (int k = 0; k < m; ++k) {
      out.nodes.push_back(es.eigenvalues()(k));
      const double v = es.eigenvectors()(0, k);
      out.weights.push_back(mu0 * v * v);
    }
    return out;
  }();
  return q;
}

// E f(Z) for Z ~ N(0, 1).
template <class F>
double normal_expectation(F&& f) {
  const auto& q = gauss_hermite64();
  double s = 0.0;
  for (std::size_t k = 0; k < q.nodes.size(); ++k) s += q.weights[k] * f(std::sqrt(2.0) * q.nodes[k]);
  return s / std::sqrt(M_PI);
}

}  // namespace detail

/// P(C < T) under the design's failure model for a given censoring rate.
inline double censoring_probability(const SimDesign& d, double lambda_c) {
  switch (d.model) {
    case SimModel::Null:
    case SimModel::OneSample:
      return lambda_c / (1.0 + lambda_c);
    case SimModel::CoxExp:
      return detail::normal_expectation([&](double z) { return lambda_c / (lambda_c + std::exp(d.beta0 * z)); });
    case SimModel::Type2:
      return detail::normal_expectation(
          [&](double z) { return lambda_c / (lambda_c + std::exp(d.beta0 * z) + 1.0); });
  }
  return 0.0;
}

/// Exponential censoring rate that makes P(C < T) equal the design target.
inline double calibrate_censoring(const SimDesign& d) {
  const double q = d.target_censoring;
  if (!(q >= 0.0)) throw Error(ErrorCode::InvalidArgument, "target censoring must be >= 0");
  if (q >= 1.0) throw Error(ErrorCode::TargetUnreachable, "censoring fraction must stay below 1");
  if (q == 0.0) return 0.0;
  if (d.model == SimModel::Null || d.model == SimModel::OneSample || d.calibration == Calibration::UnitRate) {
    return q / (1.0 - q);
  }
  double lo = 0.0;
  double hi = 1.0;
  while (censoring_probability(d, hi) < q) {
    hi *= 2.0;
    if (!std::isfinite(hi)) throw Error(ErrorCode::TargetUnreachable, "censoring target not bracketed");
  }
  while (hi - lo > 1e-6 * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    (censoring_probability(d, mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace detail {

// Uniform stream keyed by (seed, rep). Outputs lie strictly inside (0, 1).
class RepStream {
 public:
  RepStream(std::uint64_t seed, std::uint64_t rep) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
    eng_.seed(seq);
  }

  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() { return boost::math::quantile(boost::math::normal(), uniform()); }
  double exponential(double rate) {
    const double u = uniform();
    return rate > 0.0 ? -std::log(u) / rate : std::numeric_limits<double>::infinity();
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace detail

/// One replication: the data with every indicator observed and the same data
/// after masking.
struct SimSample {
  Dataset full;
  Dataset observed;
};

/// Draws replication `rep` with a pre-computed censoring rate. Per record the
/// stream is consumed as Z, T (T1 then T2 for Type II), C, then the uniform
/// deciding whether the indicator is observed.
inline SimSample generate_sample(const SimDesign& d, std::uint64_t rep, double lambda_c) {
  detail::RepStream rs(d.master_seed, rep);
  std::vector<SurvivalRecord> full, obs;
  full.reserve(static_cast<std::size_t>(d.n));
  obs.reserve(static_cast<std::size_t>(d.n));
  for (int i = 0; i < d.n; ++i) {
    SurvivalRecord r;
    double z = 0.0;
    if (is_regression(d.model)) {
      z = rs.normal();
      r.covariates = {z};
    }
    if (d.model == SimModel::Type2) {
      const double t1 = rs.exponential(std::exp(d.beta0 * z));
      const double t2 = rs.exponential(1.0);
      const double c = rs.exponential(lambda_c);
      const bool known = rs.uniform() < d.rho_or_tau;
      const double t = std::min(t1, t2);
      r.time = std::min(t, c);
      Type2Status s = Type2Status::Censored;
      if (t <= c) s = t1 <= t2 ? Type2Status::CauseOfInterest : Type2Status::OtherCause;
      r.status = s;
      full.push_back(r);
      if (s != Type2Status::Censored && !known) r.status = Type2Status::UnknownCause;
      obs.push_back(std::move(r));
    } else {
      const double rate = d.model == SimModel::CoxExp ? std::exp(d.beta0 * z) : 1.0;
      const double t = rs.exponential(rate);
      const double c = rs.exponential(lambda_c);
      const bool known = rs.uniform() < d.rho_or_tau;
      r.time = std::min(t, c);
      r.status = t <= c ? FailureStatus::Failure : FailureStatus::Censored;
      full.push_back(r);
      if (!known) r.status = FailureStatus::Unknown;
      obs.push_back(std::move(r));
    }
  }
  return {Dataset::validate(std::move(full)), Dataset::validate(std::move(obs))};
}

/// Observed data of replication `rep`; a pure function of (design, rep).
inline Dataset generate(const SimDesign& d, std::uint64_t rep) {
  validate_design(d);
  return generate_sample(d, rep, calibrate_censoring(d)).observed;
}

struct EstimatorSummary {
  std::string name;
  double mean = 0.0;                    // of beta_hat, or of F_hat(t)
  double variance = 0.0;                // of beta_hat, or of sqrt(n) F_hat(t)
  double mean_variance_estimate = std::numeric_limits<double>::quiet_NaN();
  double rejection_rate = std::numeric_limits<double>::quiet_NaN();  // Wald, H0: beta = 0, level 0.05
  double variance_ratio = std::numeric_limits<double>::quiet_NaN();  // variance / variance of the reference
};

struct SimReport {
  SimDesign design;
  double lambda_c = 0.0;
  double observed_censoring = 0.0;  // mean censored fraction in the full data
  int reps_completed = 0;
  int failures = 0;
  std::string reference;  // estimator the variance ratios are taken against
  double mean_alpha_star = std::numeric_limits<double>::quiet_NaN();
  double rejection_mc_se = std::numeric_limits<double>::quiet_NaN();  // binomial se of a rate near 0.05
  std::vector<EstimatorSummary> estimators;
};

namespace detail {

struct RepResult {
  bool ok = false;
  std::vector<double> estimate;
  std::vector<double> variance_estimate;
  std::vector<double> reject;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double censored = 0.0;
};

inline void record_fit(RepResult& r, const FitResult& fit) {
  r.estimate.push_back(fit.beta(0));
  r.variance_estimate.push_back(fit.covariance(0, 0));
  const auto w = wald_test(fit, Eigen::VectorXd::Zero(fit.beta.size()));
  r.reject.push_back(w[0].reject ? 1.0 : 0.0);
}

inline double censored_fraction(const Dataset& full) {
  double c = 0.0;
  for (std::size_t i = 0; i < full.n(); ++i) {
    const auto& s = full.record(i).status;
    if (std::holds_alternative<FailureStatus>(s) ? std::get<FailureStatus>(s) == FailureStatus::Censored
                                                 : std::get<Type2Status>(s) == Type2Status::Censored) {
      c += 1.0;
    }
  }
  return c / static_cast<double>(full.n());
}

inline RepResult run_replication(const SimDesign& d, const std::vector<std::string>& est, std::uint64_t rep,
                                 double lambda_c) {
  RepResult r;
  const SimSample s = generate_sample(d, rep, lambda_c);
  r.censored = censored_fraction(s.full);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  try {
    for (const auto& e : est) {
      if (d.model == SimModel::OneSample) {
        const double t = d.eval_time;
        if (e == "adaptive") {
          const auto a = adaptive_survival(s.observed, t);
          r.estimate.push_back(a.estimate);
          r.variance_estimate.push_back(a.variance);
          r.alpha = a.alpha_used;
        } else if (e == "complete-case") {
          r.estimate.push_back(1.0 - complete_case_kaplan_meier(s.observed)(t));
          r.variance_estimate.push_back(std::numeric_limits<double>::quiet_NaN());
        } else if (e == "lo") {
          r.estimate.push_back(1.0 - lo_estimator(s.observed)(t));
          r.variance_estimate.push_back(std::numeric_limits<double>::quiet_NaN());
        } else {
          r.estimate.push_back(1.0 - kaplan_meier(s.full)(t));
          r.variance_estimate.push_back(std::numeric_limits<double>::quiet_NaN());
        }
        r.reject.push_back(std::numeric_limits<double>::quiet_NaN());
      } else if (d.model == SimModel::Type2) {
        if (e == "full") record_fit(r, fit_phi(s.full, PhiKind::full_data()));
        else if (e == "complete-case") record_fit(r, fit_phi(s.observed, PhiKind::complete_case()));
        else if (e == "s1") record_fit(r, fit_phi(s.observed, PhiKind::s1()));
        else record_fit(r, fit_phi(s.observed, std::nullopt));
      } else {
        if (e == "full") record_fit(r, solve(s.full, ScoreKind::full_data(), zero));
        else if (e == "complete-case") record_fit(r, solve(s.observed, ScoreKind::complete_case(), zero));
        else if (e == "s1") record_fit(r, solve(s.observed, ScoreKind::s1(), zero));
        else record_fit(r, adaptive_fit(s.observed));
      }
    }
    r.ok = true;
  } catch (const Error&) {
    r.ok = false;
  }
  return r;
}

}  // namespace detail

/// Runs every replication of the design on `threads` workers. Results are
/// stored per replication and aggregated in replication order, so the report
/// does not depend on the thread count.
inline SimReport run(const SimDesign& design, unsigned threads = 1) {
  validate_design(design);
  const auto est = design.estimators.empty() ? default_estimators(design.model) : design.estimators;
  const double lambda_c = calibrate_censoring(design);
  const auto reps = static_cast<std::size_t>(design.reps);

  std::vector<detail::RepResult> results(reps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto worker = [&] {
    for (std::size_t k = next++; k < reps; k = next++) {
      try {
        results[k] = detail::run_replication(design, est, k, lambda_c);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        next = reps;
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(reps)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  SimReport rep;
  rep.design = design;
  rep.design.estimators = est;
  rep.lambda_c = lambda_c;
  rep.reference = "adaptive";
  const std::size_t m = est.size();
  std::vector<double> sum(m, 0.0), sum_var(m, 0.0), sum_rej(m, 0.0);
  double alpha_sum = 0.0, cens_sum = 0.0;
  for (const auto& r : results) {
    cens_sum += r.censored;
    if (!r.ok) {
      ++rep.failures;
      continue;
    }
    ++rep.reps_completed;
    for (std::size_t j = 0; j < m; ++j) {
      sum[j] += r.estimate[j];
      sum_var[j] += r.variance_estimate[j];
      sum_rej[j] += r.reject[j];
    }
    alpha_sum += r.alpha;
  }
  rep.observed_censoring = cens_sum / static_cast<double>(reps);
  if (static_cast<double>(rep.failures) > 0.01 * static_cast<double>(reps)) {
    throw Error(ErrorCode::TooManyFailures, std::to_string(rep.failures) + " of " + std::to_string(reps) +
                                                " replications failed");
  }
  const double done = rep.reps_completed;
  if (done < 2) throw Error(ErrorCode::TooManyFailures, "fewer than two replications completed");

  const double scale = design.model == SimModel::OneSample ? static_cast<double>(design.n) : 1.0;
  rep.estimators.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto& s = rep.estimators[j];
    s.name = est[j];
    s.mean = sum[j] / done;
    double ss = 0.0;
    for (const auto& r : results) {
      if (r.ok) ss += (r.estimate[j] - s.mean) * (r.estimate[j] - s.mean);
    }
    s.variance = scale * ss / (done - 1.0);
    s.mean_variance_estimate = sum_var[j] / done;
    s.rejection_rate = sum_rej[j] / done;
  }
  const auto ref = std::find(est.begin(), est.end(), rep.reference);
  if (ref != est.end()) {
    const double v = rep.estimators[static_cast<std::size_t>(ref - est.begin())].variance;
    for (auto& s : rep.estimators) s.variance_ratio = s.variance / v;
  }
  if (design.model == SimModel::OneSample &&
      std::find(est.begin(), est.end(), "adaptive") != est.end()) {
    rep.mean_alpha_star = alpha_sum / done;
  }
  if (is_regression(design.model)) rep.rejection_mc_se = std::sqrt(0.05 * 0.95 / done);
  return rep;
}

/// The blocks of a named table in reading order (rho-major for the
/// regression tables, censoring-major for the one-sample table).
inline std::vector<SimDesign> table_designs(const std::string& table, std::optional<int> reps, std::uint64_t seed) {
  std::vector<SimDesign> out;
  const double cens[] = {0.2, 0.5, 0.7};
  const double rhos[] = {0.8, 0.5};
  auto base = [&](SimModel m, double beta0, int n, int default_reps) {
    SimDesign d;
    d.model = m;
    d.beta0 = beta0;
    d.n = n;
    d.reps = reps.value_or(default_reps);
    d.master_seed = seed;
    return d;
  };
  if (table == "table1" || table == "table2") {
    for (double r : rhos) {
      for (double q : cens) {
        auto d = table == "table1" ? base(SimModel::Null, 0.0, 100, 10000) : base(SimModel::CoxExp, 0.5, 100, 10000);
        // The reference full-data variances and powers match this rate rather
        // than the exactly calibrated one at 20% and 70% censoring.
        if (table == "table2") d.calibration = Calibration::UnitRate;
        d.rho_or_tau = r;
        d.target_censoring = q;
        out.push_back(d);
      }
    }
  } else if (table == "table3") {
    for (double q : cens) {
      for (double r : rhos) {
        auto d = base(SimModel::OneSample, 0.0, 100, 10000);
        d.rho_or_tau = r;
        d.target_censoring = q;
        out.push_back(d);
      }
    }
  } else if (table == "type2") {
    auto d = base(SimModel::Type2, 0.5, 2000, 500);
    d.rho_or_tau = 0.5;
    d.target_censoring = 0.2;
    out.push_back(d);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown table '" + table + "'");
  }
  return out;
}

}  // namespace missurv

#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "missurv/cox_engine.hpp"
#include "missurv/curves.hpp"
#include "missurv/error.hpp"
#include "missurv/simulation.hpp"
#include "missurv/survival_data.hpp"
#include "missurv/type2_missing.hpp"

namespace missurv::io {

using json = nlohmann::json;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto k = line.find(',', start);
    out.push_back(trim(line.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start)));
    if (k == std::string_view::npos) break;
    start = k + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline bool is_na(std::string_view s) { return s == "NA" || s == "na" || s == "."; }

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses `time,status,z1..zp` rows. Type I codes: 1 failure, 0 censored,
/// NA unknown. Type II codes: 1 cause of interest, 2 other cause, NA unknown
/// cause, 0 censored.
inline Dataset parse_csv(std::istream& in, MissingType type) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::size_t columns = 0;
  std::vector<SurvivalRecord> recs;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto f = detail::split(line);
    if (!header) {
      if (f.size() < 2 || f[0] != "time" || f[1] != "status") {
        throw Error(ErrorCode::ParseError, "header must start with time,status");
      }
      columns = f.size();
      header = true;
      continue;
    }
    if (f.size() < 2) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": too few fields");
    SurvivalRecord r;
    r.time = detail::parse_double(f[0], lineno);
    const auto s = f[1];
    if (type == MissingType::TypeI) {
      if (detail::is_na(s)) r.status = FailureStatus::Unknown;
      else if (s == "1") r.status = FailureStatus::Failure;
      else if (s == "0") r.status = FailureStatus::Censored;
      else throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad Type I status '" + std::string(s) + "'");
    } else {
      if (detail::is_na(s)) r.status = Type2Status::UnknownCause;
      else if (s == "1") r.status = Type2Status::CauseOfInterest;
      else if (s == "2") r.status = Type2Status::OtherCause;
      else if (s == "0") r.status = Type2Status::Censored;
      else throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad Type II status '" + std::string(s) + "'");
    }
    for (std::size_t k = 2; k < f.size(); ++k) r.covariates.push_back(detail::parse_double(f[k], lineno));
    if (f.size() != columns) {
      throw Error(ErrorCode::DimensionMismatch, "line " + std::to_string(lineno) + ": field count differs from header");
    }
    recs.push_back(std::move(r));
  }
  if (!header) throw Error(ErrorCode::EmptyDataset, "input has no header");
  return Dataset::validate(std::move(recs));
}

inline Dataset read_csv(const std::string& path, MissingType type) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return parse_csv(in, type);
}

/// Whitespace-separated p x p matrix.
inline Eigen::MatrixXd parse_matrix(std::istream& in, std::size_t p) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(detail::parse_double(tok, lineno));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.size() != p) throw Error(ErrorCode::DimensionMismatch, "weight matrix needs " + std::to_string(p) + " rows");
  Eigen::MatrixXd D(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    if (rows[i].size() != p) throw Error(ErrorCode::DimensionMismatch, "weight matrix must be square");
    for (std::size_t j = 0; j < p; ++j) D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  if (!D.allFinite()) throw Error(ErrorCode::NonFiniteValue, "weight matrix has non-finite entries");
  return D;
}

inline Eigen::MatrixXd read_matrix(const std::string& path, std::size_t p) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return parse_matrix(in, p);
}

/// `time,value,variance`, one row per jump, 17 significant digits. The
/// variance column is NA when the curve carries none.
inline void write_curve_csv(std::ostream& out, const HazardCurve& c) {
  out << "time,value,variance\n";
  for (std::size_t k = 0; k < c.jump_times.size(); ++k) {
    out << detail::fmt17(c.jump_times[k]) << ',' << detail::fmt17(c.values[k]) << ','
        << (c.variances.empty() ? std::string("NA") : detail::fmt17(c.variances[k])) << '\n';
  }
}

inline void write_curve_csv(std::ostream& out, const SurvivalCurve& c) {
  out << "time,value,variance\n";
  for (std::size_t k = 0; k < c.jump_times.size(); ++k) {
    out << detail::fmt17(c.jump_times[k]) << ',' << detail::fmt17(c.values[k]) << ",NA\n";
  }
}

inline HazardCurve parse_curve_csv(std::istream& in) {
  HazardCurve c;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  bool any_na = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (!header) {
      if (f.size() != 3 || f[0] != "time" || f[1] != "value" || f[2] != "variance") {
        throw Error(ErrorCode::ParseError, "curve header must be time,value,variance");
      }
      header = true;
      continue;
    }
    if (f.size() != 3) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 3 fields");
    c.jump_times.push_back(detail::parse_double(f[0], lineno));
    c.values.push_back(detail::parse_double(f[1], lineno));
    if (detail::is_na(f[2])) any_na = true;
    else c.variances.push_back(detail::parse_double(f[2], lineno));
  }
  if (!header) throw Error(ErrorCode::ParseError, "curve has no header");
  if (any_na) c.variances.clear();
  return c;
}

// JSON ----------------------------------------------------------------------

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    a.push_back(row);
  }
  return a;
}

inline json fit_json(const FitResult& f) {
  json j;
  j["method"] = method_name(f.method);
  j["beta"] = vector_json(f.beta);
  Eigen::VectorXd se = f.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  j["std_error"] = vector_json(se);
  j["covariance"] = matrix_json(f.covariance);
  j["rho_hat"] = number(f.rho_hat);
  j["weight"] = f.weight ? matrix_json(*f.weight) : json(nullptr);
  j["pseudo_inverse_fallback"] = f.pseudo_inverse_fallback;
  j["iterations"] = f.iterations;
  j["final_score_norm"] = number(f.final_score_norm);
  j["warnings"] = f.warnings;
  return j;
}

inline json fit_json(const Type2Fit& f) {
  json j = fit_json(static_cast<const FitResult&>(f));
  j.erase("rho_hat");
  j["tau_hat"] = number(f.tau_hat);
  return j;
}

inline json error_json(const Error& e) {
  return {{"error", {{"code", std::string(code_name(e.code()))}, {"message", e.what()}}}};
}

inline SimModel model_from_name(const std::string& s) {
  for (auto m : {SimModel::Null, SimModel::CoxExp, SimModel::OneSample, SimModel::Type2}) {
    if (s == model_name(m)) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + s + "'");
}

inline json design_json(const SimDesign& d) {
  return {{"model", model_name(d.model)},     {"beta0", d.beta0},
          {"n", d.n},                          {"rho_or_tau", d.rho_or_tau},
          {"target_censoring", d.target_censoring}, {"reps", d.reps},
          {"master_seed", d.master_seed},      {"estimators", d.estimators},
          {"eval_time", d.eval_time},
          {"calibration", d.calibration == Calibration::Exact ? "exact" : "unit-rate"}};
}

/// Design from JSON with SimDesign field names; absent fields keep defaults.
inline SimDesign design_from_json(const json& j) {
  SimDesign d;
  try {
    if (j.contains("model")) d.model = model_from_name(j.at("model").get<std::string>());
    if (j.contains("beta0")) d.beta0 = j.at("beta0").get<double>();
    if (j.contains("n")) d.n = j.at("n").get<int>();
    if (j.contains("rho_or_tau")) d.rho_or_tau = j.at("rho_or_tau").get<double>();
    if (j.contains("target_censoring")) d.target_censoring = j.at("target_censoring").get<double>();
    if (j.contains("reps")) d.reps = j.at("reps").get<int>();
    if (j.contains("master_seed")) d.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("estimators")) d.estimators = j.at("estimators").get<std::vector<std::string>>();
    if (j.contains("eval_time")) d.eval_time = j.at("eval_time").get<double>();
    if (j.contains("calibration")) {
      const auto c = j.at("calibration").get<std::string>();
      if (c == "exact") d.calibration = Calibration::Exact;
      else if (c == "unit-rate") d.calibration = Calibration::UnitRate;
      else throw Error(ErrorCode::InvalidArgument, "calibration must be exact or unit-rate");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("design: ") + e.what());
  }
  return d;
}

inline json report_json(const SimReport& r) {
  json j;
  j["design"] = design_json(r.design);
  j["lambda_c"] = number(r.lambda_c);
  j["observed_censoring"] = number(r.observed_censoring);
  j["reps_completed"] = r.reps_completed;
  j["failures"] = r.failures;
  j["seed"] = r.design.master_seed;
  j["reference"] = r.reference;
  j["mean_alpha_star"] = number(r.mean_alpha_star);
  j["rejection_mc_se"] = number(r.rejection_mc_se);
  json es = json::array();
  for (const auto& e : r.estimators) {
    es.push_back({{"name", e.name},
                  {"mean", number(e.mean)},
                  {"variance", number(e.variance)},
                  {"mean_variance_estimate", number(e.mean_variance_estimate)},
                  {"rejection_rate", number(e.rejection_rate)},
                  {"variance_ratio", number(e.variance_ratio)}});
  }
  j["estimators"] = es;
  return j;
}

namespace detail {

inline std::string fixed(double v, int prec) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

}  // namespace detail

/// Aligned text rendering, one section per block.
inline std::string report_text(const std::vector<SimReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    const auto& d = r.design;
    out << model_name(d.model) << "  n=" << d.n << "  " << (d.model == SimModel::Type2 ? "tau=" : "rho=")
        << detail::fixed(d.rho_or_tau, 2) << "  censoring=" << detail::fixed(100.0 * d.target_censoring, 0)
        << "%  reps=" << r.reps_completed << "/" << d.reps << "  seed=" << d.master_seed << '\n';
    if (d.model == SimModel::OneSample) {
      out << "  t=" << detail::fixed(d.eval_time, 4) << "  mean alpha*=" << detail::fixed(r.mean_alpha_star, 3)
          << '\n';
      out << "  " << std::left << std::setw(16) << "estimator" << std::right << std::setw(10) << "mean F"
          << std::setw(12) << "n var" << std::setw(12) << "mean V" << std::setw(12) << "var ratio" << '\n';
      for (const auto& e : r.estimators) {
        out << "  " << std::left << std::setw(16) << e.name << std::right << std::setw(10) << detail::fixed(e.mean, 3)
            << std::setw(12) << detail::fixed(e.variance, 3) << std::setw(12)
            << detail::fixed(e.mean_variance_estimate, 3) << std::setw(12) << detail::fixed(e.variance_ratio, 2)
            << '\n';
      }
    } else {
      const char* rate = d.beta0 == 0.0 ? "size" : "power";
      out << "  " << std::left << std::setw(16) << "estimator" << std::right << std::setw(10) << "mean"
          << std::setw(10) << "var" << std::setw(12) << "mean est" << std::setw(10) << rate << '\n';
      for (const auto& e : r.estimators) {
        out << "  " << std::left << std::setw(16) << e.name << std::right << std::setw(10) << detail::fixed(e.mean, 3)
            << std::setw(10) << detail::fixed(e.variance, 3) << std::setw(12)
            << detail::fixed(e.mean_variance_estimate, 3) << std::setw(10) << detail::fixed(e.rejection_rate, 3)
            << '\n';
      }
      out << "  (rate mc se ~ " << detail::fixed(r.rejection_mc_se, 4) << ")\n";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace missurv::io

// missurv: fit Cox models, estimate hazards and run simulations on survival
// data with missing failure indicators or causes of death.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "missurv/missurv.hpp"

namespace {

using missurv::Dataset;
using missurv::Error;
using missurv::ErrorCode;
using missurv::MissingType;
using missurv::io::json;

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

MissingType missing_type(const std::string& s) {
  if (s == "type1") return MissingType::TypeI;
  if (s == "type2") return MissingType::TypeII;
  throw Error(ErrorCode::InvalidArgument, "missing type must be type1 or type2");
}

struct FitArgs {
  std::string input;
  std::string method = "adaptive";
  std::string missing = "type1";
};

int cmd_fit(const FitArgs& a) {
  const auto type = missing_type(a.missing);
  const Dataset ds = missurv::io::read_csv(a.input, type);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.p()));

  std::optional<Eigen::MatrixXd> D;
  if (a.method.rfind("combined:", 0) == 0) D = missurv::io::read_matrix(a.method.substr(9), ds.p());

  json out;
  if (type == MissingType::TypeI) {
    missurv::FitResult fit;
    if (a.method == "full") fit = missurv::solve(ds, missurv::ScoreKind::full_data(), zero);
    else if (a.method == "complete-case") fit = missurv::solve(ds, missurv::ScoreKind::complete_case(), zero);
    else if (a.method == "s1") fit = missurv::solve(ds, missurv::ScoreKind::s1(), zero);
    else if (a.method == "adaptive") fit = missurv::adaptive_fit(ds);
    else if (D) fit = missurv::solve(ds, missurv::ScoreKind::combined(*D), zero);
    else throw Error(ErrorCode::InvalidArgument, "unknown method '" + a.method + "'");
    out = missurv::io::fit_json(fit);
    for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
  } else {
    std::optional<missurv::PhiKind> kind;
    if (a.method == "full") kind = missurv::PhiKind::full_data();
    else if (a.method == "complete-case") kind = missurv::PhiKind::complete_case();
    else if (a.method == "s1") kind = missurv::PhiKind::s1();
    else if (D) kind = missurv::PhiKind::combined(*D);
    else if (a.method != "adaptive") throw Error(ErrorCode::InvalidArgument, "unknown method '" + a.method + "'");
    const auto fit = missurv::fit_phi(ds, kind);
    out = missurv::io::fit_json(fit);
    for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
  }
  out["n"] = ds.n();
  out["p"] = ds.p();
  print_json(out);
  return 0;
}

struct HazardArgs {
  std::string input;
  std::string estimator = "nelson-aalen";
  std::string missing = "type1";
  std::optional<double> eval_time;
};

json point_json(const std::string& name, double t, double estimate, double variance) {
  return {{"estimator", name},
          {"time", t},
          {"estimate", missurv::io::number(estimate)},
          {"variance", missurv::io::number(variance)}};
}

// Lambda(alpha*(t), t) at every jump of the merged grid where alpha*(t) exists.
missurv::HazardCurve adaptive_curve(const Dataset& ds) {
  const auto c1 = missurv::lambda1(ds);
  const double rho = missurv::rho_hat(ds);
  const auto c2 = rho < 1.0 ? missurv::lambda2(ds) : missurv::HazardCurve{};
  std::vector<double> grid;
  std::merge(c1.jump_times.begin(), c1.jump_times.end(), c2.jump_times.begin(), c2.jump_times.end(),
             std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  missurv::HazardCurve c;
  c.estimator = "adaptive";
  c.reliable_until = c1.reliable_until;
  if (c1.jump_times.empty()) return c;
  for (double t : grid) {
    if (t < c1.jump_times.front()) continue;
    const double a = missurv::alpha_star_hat(ds, t);
    c.jump_times.push_back(t);
    c.values.push_back(a == 1.0 ? c1(t) : a * c1(t) + (1.0 - a) * c2(t));
    c.variances.push_back(missurv::gamma_alpha_hat(ds, a, t, t));
  }
  return c;
}

double parse_alpha(const std::string& e) {
  try {
    std::size_t pos = 0;
    const double a = std::stod(e.substr(6), &pos);
    if (pos != e.size() - 6) throw std::invalid_argument(e);
    return a;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad alpha in '" + e + "'");
  }
}

int emit_curve(const missurv::HazardCurve& c, const HazardArgs& a) {
  if (a.eval_time) {
    print_json(point_json(c.estimator, *a.eval_time, c(*a.eval_time), c.variance_at(*a.eval_time)));
  } else {
    missurv::io::write_curve_csv(std::cout, c);
  }
  return 0;
}

int emit_baseline(const Dataset& ds, const missurv::BaselineCurve& c, const HazardArgs& a, double variance_at_t) {
  if (!a.eval_time) return emit_curve(c, a);
  auto j = point_json(c.estimator, *a.eval_time, c(*a.eval_time), variance_at_t);
  j["at_risk"] = missurv::risk_set_size(ds, *a.eval_time);
  j["beta"] = missurv::io::vector_json(c.beta_used);
  print_json(j);
  return 0;
}

int hazard_type2(const Dataset& ds, const HazardArgs& a) {
  const auto& e = a.estimator;
  if (e == "baseline1" || e == "baseline2") {
    const int which = e == "baseline1" ? 1 : 2;
    const auto fit = missurv::fit_phi(ds, std::nullopt);
    const auto c = missurv::baseline_phi(ds, fit, which);
    const double v = a.eval_time ? missurv::baseline_phi_variance(ds, fit, which, *a.eval_time).variance : 0.0;
    return emit_baseline(ds, c, a, v);
  }
  if (e == "adaptive") {
    if (!a.eval_time) throw Error(ErrorCode::InvalidArgument, "adaptive Type II estimate needs --eval-time");
    const auto r = missurv::one_sample_phi(ds, std::nullopt, *a.eval_time);
    auto j = point_json("adaptive-phi", *a.eval_time, r.estimate, r.variance);
    j["alpha"] = r.alpha_used;
    j["tau_hat"] = missurv::tau_hat(ds);
    print_json(j);
    return 0;
  }
  double alpha = 0.0;
  if (e == "lambda1") alpha = 1.0;
  else if (e == "lambda2") alpha = 0.0;
  else if (e.rfind("alpha:", 0) == 0) alpha = parse_alpha(e);
  else throw Error(ErrorCode::InvalidArgument, "estimator '" + e + "' is not available for Type II data");
  return emit_curve(missurv::lambda_phi_curve(ds, alpha), a);
}

int cmd_hazard(const HazardArgs& a) {
  const auto type = missing_type(a.missing);
  const Dataset ds = missurv::io::read_csv(a.input, type);
  if (type == MissingType::TypeII) return hazard_type2(ds, a);
  const auto& e = a.estimator;

  if (e == "nelson-aalen") return emit_curve(missurv::nelson_aalen(ds), a);
  if (e == "lambda1") return emit_curve(missurv::lambda1(ds), a);
  if (e == "lambda2") return emit_curve(missurv::lambda2(ds), a);
  if (e.rfind("alpha:", 0) == 0) return emit_curve(missurv::lambda_alpha(ds, parse_alpha(e)), a);
  if (e == "kaplan-meier" || e == "lo") {
    const auto c = e == "lo" ? missurv::lo_estimator(ds) : missurv::kaplan_meier(ds);
    if (a.eval_time) {
      print_json(point_json(c.estimator, *a.eval_time, c(*a.eval_time), std::numeric_limits<double>::quiet_NaN()));
    } else {
      missurv::io::write_curve_csv(std::cout, c);
    }
    return 0;
  }
  if (e == "adaptive") {
    if (!a.eval_time) return emit_curve(adaptive_curve(ds), a);
    const auto r = missurv::adaptive_survival(ds, *a.eval_time);
    const auto aux_var = missurv::gamma_alpha_hat(ds, r.alpha_used, *a.eval_time, *a.eval_time);
    auto j = point_json("adaptive", *a.eval_time, r.cumulative_hazard, aux_var);
    j["alpha"] = r.alpha_used;
    j["distribution"] = r.estimate;
    j["distribution_variance"] = missurv::io::number(r.variance);
    j["rho_hat"] = missurv::rho_hat(ds);
    print_json(j);
    return 0;
  }
  if (e == "breslow") {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.p()));
    const auto fit = missurv::solve(ds, missurv::ScoreKind::full_data(), zero);
    const auto c = missurv::breslow(ds, fit.beta);
    return emit_baseline(ds, c, a, std::numeric_limits<double>::quiet_NaN());
  }
  if (e == "baseline1" || e == "baseline2") {
    const int which = e == "baseline1" ? 1 : 2;
    const auto fit = missurv::adaptive_fit(ds);
    const auto c = which == 1 ? missurv::baseline_lambda1(ds, fit) : missurv::baseline_lambda2(ds, fit);
    const double v = a.eval_time ? missurv::baseline_variance(ds, fit, which, *a.eval_time).variance : 0.0;
    return emit_baseline(ds, c, a, v);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + e + "'");
}

struct SimulateArgs {
  std::string table;
  std::string design;
  std::uint64_t seed = 42;
  std::optional<int> reps;
  unsigned threads = 1;
  std::string format = "json";
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.table.empty() == a.design.empty()) {
    throw Error(ErrorCode::InvalidArgument, "give exactly one of --table or --design");
  }
  if (a.format != "json" && a.format != "text") throw Error(ErrorCode::InvalidArgument, "format must be json or text");
  std::vector<missurv::SimDesign> designs;
  std::string name = a.table;
  if (!a.table.empty()) {
    designs = missurv::table_designs(a.table, a.reps, a.seed);
  } else {
    std::ifstream in(a.design);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + a.design);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::ParseError, std::string("design file: ") + ex.what());
    }
    auto d = missurv::io::design_from_json(j);
    if (a.reps) d.reps = *a.reps;
    if (!j.contains("master_seed")) d.master_seed = a.seed;
    designs.push_back(d);
    name = "design";
  }

  std::vector<missurv::SimReport> reports;
  for (const auto& d : designs) reports.push_back(missurv::run(d, a.threads));

  const auto text = missurv::io::report_text(reports);
  if (a.format == "text") {
    std::cout << text;
    return 0;
  }
  json out;
  out["table"] = name;
  out["blocks"] = json::array();
  for (const auto& r : reports) out["blocks"].push_back(missurv::io::report_json(r));
  print_json(out);
  std::cerr << text;
  return 0;
}

int report_error(const Error& e) {
  print_json(missurv::io::error_json(e));
  std::cerr << "missurv: " << e.what() << '\n';
  return missurv::is_solver_error(e.code()) ? 2 : 1;
}

unsigned default_threads() {
  if (const char* env = std::getenv("MISSURV_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cox regression and cumulative hazards with missing failure indicators"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a Cox model");
  fit_cmd->add_option("input", fit.input, "CSV file (time,status,z1..zp)")->required();
  fit_cmd->add_option("--method", fit.method, "full | complete-case | s1 | adaptive | combined:<D file>");
  fit_cmd->add_option("--missing-type", fit.missing, "type1 | type2");

  HazardArgs hz;
  double eval_time = 0.0;
  auto* hz_cmd = app.add_subcommand("hazard", "Estimate a cumulative hazard");
  hz_cmd->add_option("input", hz.input, "CSV file (time,status,z1..zp)")->required();
  hz_cmd->add_option("--estimator", hz.estimator,
                     "nelson-aalen | kaplan-meier | lambda1 | lambda2 | alpha:<value> | adaptive | lo | breslow | "
                     "baseline1 | baseline2");
  auto* eval_opt = hz_cmd->add_option("--eval-time", eval_time, "report a single time point as JSON");
  hz_cmd->add_option("--missing-type", hz.missing, "type1 | type2");

  SimulateArgs sim;
  sim.threads = default_threads();
  int reps = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study");
  sim_cmd->add_option("--table", sim.table, "table1 | table2 | table3 | type2");
  sim_cmd->add_option("--design", sim.design, "JSON design file");
  sim_cmd->add_option("--seed", sim.seed, "master seed");
  auto* reps_opt = sim_cmd->add_option("--reps", reps, "replications per block");
  sim_cmd->add_option("--threads", sim.threads, "worker threads (default: MISSURV_THREADS or 1)");
  sim_cmd->add_option("--format", sim.format, "json | text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(Error(ErrorCode::InvalidArgument, e.what()));
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*hz_cmd) {
      if (*eval_opt) hz.eval_time = eval_time;
      return cmd_hazard(hz);
    }
    if (*reps_opt) sim.reps = reps;
    return cmd_simulate(sim);
  } catch (const Error& e) {
    return report_error(e);
  }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "missurv/error.hpp"

namespace missurv {

// Type I observation state of the failure indicator.
enum class FailureStatus { Failure, Censored, Unknown };

// Type II (competing risks) state: the cause of death may be unknown, a
// censored subject never carries cause information.
enum class Type2Status { CauseOfInterest, OtherCause, UnknownCause, Censored };

using Status = std::variant<FailureStatus, Type2Status>;

enum class MissingType { TypeI, TypeII };

struct SurvivalRecord {
  double time = 0.0;
  Status status = FailureStatus::Censored;
  std::vector<double> covariates;
};

// Records with the same observed time, as a half-open range of positions in
// Dataset::event_order().
struct TieGroup {
  double time;
  std::size_t begin;
  std::size_t end;
};

/// Validated, immutable collection of survival records.
///
/// Records are kept in input order; event_order() sorts them by time with ties
/// broken by input index. Every estimator evaluates the risk set of a tied
/// group once, at the common time, and includes all members of the group.
class Dataset {
 public:
  static Dataset validate(std::vector<SurvivalRecord> records);

  std::size_t n() const noexcept { return records_.size(); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(z_.cols()); }
  MissingType missing_type() const noexcept { return type_; }

  const std::vector<SurvivalRecord>& records() const noexcept { return records_; }
  const SurvivalRecord& record(std::size_t i) const { return records_[i]; }
  double time(std::size_t i) const { return records_[i].time; }

  /// n x p covariate matrix, row i belongs to record i.
  const Eigen::MatrixXd& covariates() const noexcept { return z_; }

  std::span<const std::size_t> event_order() const noexcept { return order_; }
  const std::vector<TieGroup>& tie_groups() const noexcept { return groups_; }

  FailureStatus type1_status(std::size_t i) const;
  Type2Status type2_status(std::size_t i) const;

 private:
  Dataset() = default;

  std::vector<SurvivalRecord> records_;
  Eigen::MatrixXd z_;
  std::vector<std::size_t> order_;
  std::vector<TieGroup> groups_;
  MissingType type_ = MissingType::TypeI;
};

inline Dataset Dataset::validate(std::vector<SurvivalRecord> records) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no records");

  const std::size_t p = records.front().covariates.size();
  const bool type2 = std::holds_alternative<Type2Status>(records.front().status);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.covariates.size() != p) {
      throw Error(ErrorCode::DimensionMismatch,
                  "record " + std::to_string(i) + " has " + std::to_string(r.covariates.size()) +
                      " covariates, expected " + std::to_string(p));
    }
    if (!std::isfinite(r.time)) {
      throw Error(ErrorCode::NonFiniteValue, "record " + std::to_string(i) + " has non-finite time");
    }
    if (r.time < 0.0) throw Error(ErrorCode::NegativeTime, "record " + std::to_string(i) + " has negative time");
    for (double z : r.covariates) {
      if (!std::isfinite(z)) {
        throw Error(ErrorCode::NonFiniteValue, "record " + std::to_string(i) + " has a non-finite covariate");
      }
    }
    if (std::holds_alternative<Type2Status>(r.status) != type2) {
      throw Error(ErrorCode::StatusTypeMismatch, "records mix Type I and Type II status codes");
    }
  }

  Dataset ds;
  ds.type_ = type2 ? MissingType::TypeII : MissingType::TypeI;
  ds.z_.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      ds.z_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = records[i].covariates[k];
    }
  }

  ds.order_.resize(records.size());
  std::iota(ds.order_.begin(), ds.order_.end(), std::size_t{0});
  std::stable_sort(ds.order_.begin(), ds.order_.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

  for (std::size_t k = 0; k < ds.order_.size();) {
    const double t = records[ds.order_[k]].time;
    std::size_t e = k;
    while (e < ds.order_.size() && records[ds.order_[e]].time == t) ++e;
    ds.groups_.push_back({t, k, e});
    k = e;
  }

  ds.records_ = std::move(records);
  return ds;
}

inline FailureStatus Dataset::type1_status(std::size_t i) const {
  if (const auto* s = std::get_if<FailureStatus>(&records_[i].status)) return *s;
  throw Error(ErrorCode::StatusTypeMismatch, "operation requires Type I status codes");
}

inline Type2Status Dataset::type2_status(std::size_t i) const {
  if (const auto* s = std::get_if<Type2Status>(&records_[i].status)) return *s;
  throw Error(ErrorCode::StatusTypeMismatch, "operation requires Type II status codes");
}

inline void require_type1(const Dataset& ds) {
  if (ds.missing_type() != MissingType::TypeI) {
    throw Error(ErrorCode::StatusTypeMismatch, "operation requires Type I status codes");
  }
}

inline void require_type2(const Dataset& ds) {
  if (ds.missing_type() != MissingType::TypeII) {
    throw Error(ErrorCode::StatusTypeMismatch, "operation requires Type II status codes");
  }
}

/// Number of records with time >= t.
inline std::size_t risk_set_size(const Dataset& ds, double t) {
  const auto order = ds.event_order();
  auto it = std::lower_bound(order.begin(), order.end(), t,
                             [&](std::size_t i, double v) { return ds.time(i) < v; });
  return static_cast<std::size_t>(order.end() - it);
}

// Per-record jumps of N, xi*N^u, xi*N^c and (1-xi)*N at the record's time.
struct CountingIncrement {
  std::size_t record;
  double time;
  int dN;
  int known_uncensored;
  int known_censored;
  int unknown;
};

/// One entry per record, in event order. Type I datasets only.
inline std::vector<CountingIncrement> counting_increments(const Dataset& ds) {
  require_type1(ds);
  std::vector<CountingIncrement> out;
  out.reserve(ds.n());
  for (std::size_t i : ds.event_order()) {
    const FailureStatus s = ds.type1_status(i);
    out.push_back({i, ds.time(i), 1, s == FailureStatus::Failure ? 1 : 0,
                   s == FailureStatus::Censored ? 1 : 0, s == FailureStatus::Unknown ? 1 : 0});
  }
  return out;
}

/// Fraction of records whose failure indicator is observed.
inline double rho_hat(const Dataset& ds) {
  require_type1(ds);
  std::size_t known = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.type1_status(i) != FailureStatus::Unknown) ++known;
  }
  return static_cast<double>(known) / static_cast<double>(ds.n());
}

}  // namespace missurv

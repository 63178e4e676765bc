#pragma once

#include <Eigen/Dense>

#include "missurv/error.hpp"

namespace missurv::detail {

inline bool is_singular(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return false;
  if (!m.allFinite()) return true;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  return !lu.isInvertible();
}

inline Eigen::MatrixXd inverse_or_throw(const Eigen::MatrixXd& m, ErrorCode code, const char* what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!m.allFinite() || !lu.isInvertible()) throw Error(code, what);
  return lu.inverse();
}

inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(m);
  return cod.pseudoInverse();
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace missurv::detail

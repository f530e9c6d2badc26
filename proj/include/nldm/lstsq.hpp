#pragma once

// Minimum-norm least squares for Lambda * Upsilon ~= X.
//
// Lambda = X * pinv(Upsilon), with the pseudo-inverse taken from a thin SVD of
// Upsilon^T. Singular values at or below eps * sigma_max * max(L, M) are
// treated as zero.

#include <algorithm>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "nldm/core.hpp"

namespace nldm {

struct LstsqReport {
  Matrix solution;  // S x L
  double residual_frobenius = 0.0;
  int effective_rank = 0;
  int truncated_singular_values = 0;
  double rank_threshold = 0.0;
  Vector singular_values;
};

/// `rcond` overrides the relative truncation level; <= 0 selects
/// eps * max(L, M).
inline LstsqReport solve_min_frobenius(const Eigen::Ref<const Matrix>& features,
                                       const Eigen::Ref<const Matrix>& targets,
                                       double rcond = 0.0) {
  const auto l = features.rows();
  const auto m = features.cols();
  if (m < 1) throw ValidationError("lstsq: need at least one column");
  if (targets.cols() != m) {
    throw DimensionError("lstsq: features have " + std::to_string(m) + " columns, targets have " +
                         std::to_string(targets.cols()));
  }
  if (!features.allFinite()) throw ValidationError("lstsq: features contain non-finite entries");
  if (!targets.allFinite()) throw ValidationError("lstsq: targets contain non-finite entries");

  LstsqReport report;
  report.solution = Matrix::Zero(targets.rows(), l);

  if (l == 0 || features.isZero(0.0)) {
    report.residual_frobenius = targets.norm();
    report.truncated_singular_values = static_cast<int>(std::min(l, m));
    report.singular_values = Vector::Zero(std::min(l, m));
    return report;
  }

  const Matrix a = features.transpose();  // M x L
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double eps = std::numeric_limits<double>::epsilon();
  const double rel = rcond > 0.0 ? rcond : eps * static_cast<double>(std::max(l, m));
  const double threshold = rel * sv[0];

  int rank = 0;
  while (rank < sv.size() && sv[rank] > threshold) ++rank;

  // Lambda^T = V_r * diag(1/s_r) * U_r^T * X^T
  const Matrix ut_xt = svd.matrixU().leftCols(rank).transpose() * targets.transpose();
  const Matrix scaled = sv.head(rank).cwiseInverse().asDiagonal() * ut_xt;
  report.solution = (svd.matrixV().leftCols(rank) * scaled).transpose();

  report.residual_frobenius = (report.solution * features - targets).norm();
  report.effective_rank = rank;
  report.truncated_singular_values = static_cast<int>(sv.size()) - rank;
  report.rank_threshold = threshold;
  report.singular_values = sv;
  return report;
}

}  // namespace nldm

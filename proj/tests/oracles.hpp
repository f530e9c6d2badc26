#pragma once

// Reference computations used only by the tests. None of them call into the
// library; they are deliberately naive so they can be checked by eye.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Every exponent vector over `vars` variables with total degree 1..o, by
/// walking the full box [0, o]^vars and keeping the admissible points.
inline std::vector<std::vector<int>> monomials_brute_force(int vars, int o) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(vars, 0);
  std::function<void(int)> rec = [&](int v) {
    if (v == vars) {
      int sum = 0;
      for (int x : e) sum += x;
      if (sum >= 1 && sum <= o) out.push_back(e);
      return;
    }
    for (int p = 0; p <= o; ++p) {
      e[v] = p;
      rec(v + 1);
    }
    e[v] = 0;
  };
  rec(0);
  return out;
}

/// Graded-lex order written out independently: ascending degree, then the
/// exponent tuple compared in reverse lexicographic (x1 powers first).
inline std::vector<std::vector<int>> monomials_graded_lex(int vars, int o) {
  auto m = monomials_brute_force(vars, o);
  std::sort(m.begin(), m.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
    int da = 0, db = 0;
    for (int x : a) da += x;
    for (int x : b) db += x;
    if (da != db) return da < db;
    return a > b;  // more weight on earlier variables comes first
  });
  return m;
}

inline double eval_monomial(const std::vector<int>& e, const Vector& z) {
  double v = 1.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (int p = 0; p < e[i]; ++p) v *= z[static_cast<Eigen::Index>(i)];
  }
  return v;
}

/// One-sided Jacobi SVD of A (m x n): A = U diag(s) V^T, thin.
struct Svd {
  Matrix u;
  Vector s;
  Matrix v;
};

inline Svd jacobi_svd(const Matrix& a_in) {
  const bool tall = a_in.rows() >= a_in.cols();
  Matrix a = tall ? a_in : Matrix(a_in.transpose());
  const auto n = a.cols();
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (std::abs(gamma) <= 1e-300) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    if (off < 1e-15) break;
  }
  Vector s(n);
  Matrix u = Matrix::Zero(a.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    s[j] = a.col(j).norm();
    if (s[j] > 0) u.col(j) = a.col(j) / s[j];
  }
  if (tall) return {u, s, v};
  return {v, s, u};
}

/// Pseudo-inverse with the same relative cutoff convention as the library
/// default (eps * max(m, n) * sigma_max).
inline Matrix pinv(const Matrix& a) {
  const Svd svd = jacobi_svd(a);
  const double smax = svd.s.size() ? svd.s.maxCoeff() : 0.0;
  const double cut = std::numeric_limits<double>::epsilon() * std::max(a.rows(), a.cols()) * smax;
  Matrix out = Matrix::Zero(a.cols(), a.rows());
  for (Eigen::Index j = 0; j < svd.s.size(); ++j) {
    if (svd.s[j] > cut) out += svd.v.col(j) * svd.u.col(j).transpose() / svd.s[j];
  }
  return out;
}

/// exp(A) by scaling and squaring of a long Taylor series.
inline Matrix expm(const Matrix& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::pow(2.0, squarings) > 0.5) ++squarings;
  const Matrix b = a / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Damped linear oscillator x' = y, y' = -x - delta y.
inline Matrix lho_matrix(double delta) {
  Matrix a(2, 2);
  a << 0, 1, -1, -delta;
  return a;
}

/// Per-state RRMSE with plain loops: window [first, K), population std.
inline std::vector<double> rrmse(const Matrix& pred, const Matrix& ref, int first) {
  std::vector<double> out;
  const int k = static_cast<int>(ref.cols());
  const double n = k - first;
  for (Eigen::Index s = 0; s < ref.rows(); ++s) {
    double mean = 0, se = 0, var = 0;
    for (int i = first; i < k; ++i) mean += ref(s, i);
    mean /= n;
    for (int i = first; i < k; ++i) {
      se += (pred(s, i) - ref(s, i)) * (pred(s, i) - ref(s, i));
      var += (ref(s, i) - mean) * (ref(s, i) - mean);
    }
    out.push_back(std::sqrt(se / n) / std::sqrt(var / n));
  }
  return out;
}

}  // namespace oracle

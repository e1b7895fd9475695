#pragma once

#include <Eigen/Dense>
#include <cfloat>
#include <cmath>
#include <limits>

#include "crefit/errors.hpp"
#include "crefit/rng.hpp"
#include "crefit/table.hpp"

namespace crefit {

// Variance components (sigma2_a, sigma2_b, sigma2_e) of the two-factor model
// y = x'beta + a_row + b_col + e.  The shrinkage parameters are the noise-to-
// component ratios; a zero component maps to an infinite ratio (no effect).
struct VarianceComponents {
  double sigma2_a = 0.0;
  double sigma2_b = 0.0;
  double sigma2_e = 1.0;
  bool clamped = false;  // a negative raw estimate was clamped to zero
  bool floored = false;  // sigma2_e was raised to the floor

  double lambda_a() const {
    return sigma2_a > 0.0 ? sigma2_e / sigma2_a : std::numeric_limits<double>::infinity();
  }
  double lambda_b() const {
    return sigma2_b > 0.0 ? sigma2_e / sigma2_b : std::numeric_limits<double>::infinity();
  }
};

// Within-group sum-of-squares statistics of a residual vector:
//   u_a: sum over rows of squared deviations from the row mean,
//   u_b: the same over columns,
//   u_e: N times the squared deviations from the grand mean.
struct UStatistics {
  double u_a = 0.0;
  double u_b = 0.0;
  double u_e = 0.0;
  double sum_nrow_sq = 0.0;  // sum_i n_row[i]^2
  double sum_ncol_sq = 0.0;  // sum_j n_col[j]^2
};

inline UStatistics u_statistics(const ObservationTable& t,
                                const Eigen::Ref<const Eigen::VectorXd>& resid) {
  const std::int64_t n = t.n();
  if (resid.size() != n) throw ConfigError("u_statistics: residual length mismatch");
  const auto& row = t.row_level();
  const auto& col = t.col_level();
  const auto& cnt = t.counts();

  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(t.r());
  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(t.c());
  KahanSum grand;
  for (std::int64_t k = 0; k < n; ++k) {
    row_sum[row[k]] += resid[k];
    col_sum[col[k]] += resid[k];
    grand.add(resid[k]);
  }
  const double gmean = grand.value() / static_cast<double>(n);

  Eigen::VectorXd row_mean(t.r()), col_mean(t.c());
  for (int i = 0; i < t.r(); ++i) row_mean[i] = row_sum[i] / cnt.n_row[i];
  for (int j = 0; j < t.c(); ++j) col_mean[j] = col_sum[j] / cnt.n_col[j];

  KahanSum ua, ub, ue;
  for (std::int64_t k = 0; k < n; ++k) {
    const double ra = resid[k] - row_mean[row[k]];
    const double rb = resid[k] - col_mean[col[k]];
    const double rg = resid[k] - gmean;
    ua.add(ra * ra);
    ub.add(rb * rb);
    ue.add(rg * rg);
  }

  UStatistics u;
  u.u_a = ua.value();
  u.u_b = ub.value();
  u.u_e = static_cast<double>(n) * ue.value();
  u.sum_nrow_sq = cnt.n_row.cast<double>().squaredNorm();
  u.sum_ncol_sq = cnt.n_col.cast<double>().squaredNorm();
  return u;
}

struct MomentEstimate {
  Eigen::Vector3d raw = Eigen::Vector3d::Zero();  // solution before clamping/flooring
  VarianceComponents components;
};

// Solves the 3x3 moment system
//   E(u_a) = (sigma2_b + sigma2_e) (N - R)
//   E(u_b) = (sigma2_a + sigma2_e) (N - C)
//   E(u_e) = sigma2_a (N^2 - sum n_row^2) + sigma2_b (N^2 - sum n_col^2) + sigma2_e (N^2 - N)
// by direct elimination.  Negative solutions clamp to zero; sigma2_e is
// raised to sigma_e_floor when below it.
inline MomentEstimate solve_moments(const UStatistics& u, std::int64_t n, int r, int c,
                                    double sigma_e_floor = DBL_MIN) {
  const double dn = static_cast<double>(n);
  Eigen::Matrix3d m;
  m << 0.0, dn - r, dn - r,
       dn - c, 0.0, dn - c,
       dn * dn - u.sum_nrow_sq, dn * dn - u.sum_ncol_sq, dn * dn - dn;
  Eigen::Vector3d rhs(u.u_a, u.u_b, u.u_e);

  // Gaussian elimination with partial pivoting; the system is tiny and the
  // test suite checks exact back-substitution, so no least-squares fallback.
  Eigen::Matrix3d a = m;
  Eigen::Vector3d b = rhs;
  int perm[3] = {0, 1, 2};
  for (int k = 0; k < 3; ++k) {
    int piv = k;
    for (int i = k + 1; i < 3; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (std::abs(a(piv, k)) == 0.0)
      throw EstimationError(
          "moment equations are singular (degenerate design, e.g. one observation per row or "
          "column); use a design with replication in both factors");
    if (piv != k) {
      a.row(k).swap(a.row(piv));
      std::swap(b[k], b[piv]);
      std::swap(perm[k], perm[piv]);
    }
    for (int i = k + 1; i < 3; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i) -= f * a.row(k);
      b[i] -= f * b[k];
    }
  }
  Eigen::Vector3d sol;
  for (int k = 2; k >= 0; --k) {
    double s = b[k];
    for (int i = k + 1; i < 3; ++i) s -= a(k, i) * sol[i];
    sol[k] = s / a(k, k);
  }

  MomentEstimate est;
  est.raw = sol;
  VarianceComponents& vc = est.components;
  vc.sigma2_a = sol[0];
  vc.sigma2_b = sol[1];
  vc.sigma2_e = sol[2];
  if (vc.sigma2_a < 0.0) { vc.sigma2_a = 0.0; vc.clamped = true; }
  if (vc.sigma2_b < 0.0) { vc.sigma2_b = 0.0; vc.clamped = true; }
  if (vc.sigma2_e < 0.0) { vc.sigma2_e = 0.0; vc.clamped = true; }
  if (vc.sigma2_e < sigma_e_floor) { vc.sigma2_e = sigma_e_floor; vc.floored = true; }
  return est;
}

// Method-of-moments estimate from residuals y - x * beta_init.
// The noise floor keeps sigma2_e positive: 1e-12 of the residual variance
// (never below DBL_MIN).
inline MomentEstimate estimate(const ObservationTable& t,
                               const Eigen::Ref<const Eigen::VectorXd>& beta_init,
                               double evar_rel = 1e-12) {
  if (beta_init.size() != t.p()) throw ConfigError("estimate: beta length mismatch");
  const Eigen::VectorXd resid = t.y() - t.x() * beta_init;
  const UStatistics u = u_statistics(t, resid);
  KahanSum s1, s2;
  for (std::int64_t k = 0; k < t.n(); ++k) s1.add(resid[k]);
  const double mean = s1.value() / static_cast<double>(t.n());
  for (std::int64_t k = 0; k < t.n(); ++k) s2.add((resid[k] - mean) * (resid[k] - mean));
  const double rvar = s2.value() / static_cast<double>(t.n());
  const double floor = std::max(evar_rel * rvar, DBL_MIN);
  return solve_moments(u, t.n(), t.r(), t.c(), floor);
}

}  // namespace crefit

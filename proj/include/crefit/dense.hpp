#pragma once

// Dense reference implementations of everything the O(N) path computes.
// These materialize N x N matrices and solve the full linear systems, so
// they are capped at small N and exist to validate the fast path.

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "crefit/errors.hpp"
#include "crefit/moments.hpp"
#include "crefit/table.hpp"

namespace crefit::dense {

struct Problem {
  Eigen::MatrixXd za;  // N x R indicator matrix
  Eigen::MatrixXd zb;  // N x C indicator matrix
  Eigen::MatrixXd v;   // model covariance
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  double lambda_a = 0.0;
  double lambda_b = 0.0;
  VarianceComponents theta;

  static Problem build(const ObservationTable& t, const VarianceComponents& vc,
                       std::int64_t cap = 2000) {
    if (t.n() > cap) throw ConfigError("dense oracle: N exceeds cap " + std::to_string(cap));
    Problem pr;
    const std::int64_t n = t.n();
    pr.za.setZero(n, t.r());
    pr.zb.setZero(n, t.c());
    for (std::int64_t k = 0; k < n; ++k) {
      pr.za(k, t.row_level()[k]) = 1.0;
      pr.zb(k, t.col_level()[k]) = 1.0;
    }
    pr.x = t.x();
    pr.y = t.y();
    pr.theta = vc;
    pr.lambda_a = vc.lambda_a();
    pr.lambda_b = vc.lambda_b();
    pr.v = vc.sigma2_a * (pr.za * pr.za.transpose()) + vc.sigma2_b * (pr.zb * pr.zb.transpose()) +
           vc.sigma2_e * Eigen::MatrixXd::Identity(n, n);
    return pr;
  }
};

// Textbook GLS: beta = (X' V^-1 X)^-1 X' V^-1 Y with cov (X' V^-1 X)^-1.
struct GlsOracle {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
};

inline GlsOracle gls(const Problem& pr) {
  Eigen::LLT<Eigen::MatrixXd> llt(pr.v);
  if (llt.info() != Eigen::Success) throw SingularError("dense gls: V is not positive definite");
  const Eigen::MatrixXd vix = llt.solve(pr.x);
  Eigen::MatrixXd gram = pr.x.transpose() * vix;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::LDLT<Eigen::MatrixXd> g(gram);
  GlsOracle out;
  out.beta = g.solve(vix.transpose() * pr.y);
  out.cov = g.solve(Eigen::MatrixXd::Identity(pr.x.cols(), pr.x.cols()));
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

// Joint penalized least squares over (beta, a, b):
//   min |Y - X beta - Za a - Zb b|^2 + lambda_a |a|^2 + lambda_b |b|^2.
// Infinite penalties drop the factor (effects pinned to zero).
struct PenalizedFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  bool used_ridge = false;  // tiny ridge added on the beta block
};

inline PenalizedFit penalized(const Problem& pr) {
  const bool use_a = std::isfinite(pr.lambda_a);
  const bool use_b = std::isfinite(pr.lambda_b);
  const int p = static_cast<int>(pr.x.cols());
  const int ra = use_a ? static_cast<int>(pr.za.cols()) : 0;
  const int cb = use_b ? static_cast<int>(pr.zb.cols()) : 0;
  const int dim = p + ra + cb;
  Eigen::MatrixXd u(pr.x.rows(), dim);
  u.leftCols(p) = pr.x;
  if (use_a) u.middleCols(p, ra) = pr.za;
  if (use_b) u.rightCols(cb) = pr.zb;
  Eigen::MatrixXd sys = u.transpose() * u;
  for (int k = 0; k < ra; ++k) sys(p + k, p + k) += pr.lambda_a;
  for (int k = 0; k < cb; ++k) sys(p + ra + k, p + ra + k) += pr.lambda_b;
  const Eigen::VectorXd rhs = u.transpose() * pr.y;

  PenalizedFit fit;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
  Eigen::VectorXd sol;
  if (lu.isInvertible()) {
    sol = lu.solve(rhs);
  } else {
    // The beta block can collide with unpenalized level effects (e.g. an
    // intercept when a penalty is exactly zero); regularize just enough to
    // pick the conventional solution.
    Eigen::MatrixXd reg = sys;
    for (int k = 0; k < p; ++k) reg(k, k) += 1e-10;
    Eigen::FullPivLU<Eigen::MatrixXd> lu2(reg);
    if (!lu2.isInvertible()) throw SingularError("dense penalized: normal equations singular");
    sol = lu2.solve(rhs);
    fit.used_ridge = true;
  }
  fit.beta = sol.head(p);
  fit.a = use_a ? Eigen::VectorXd(sol.segment(p, ra)) : Eigen::VectorXd::Zero(pr.za.cols());
  fit.b = use_b ? Eigen::VectorXd(sol.tail(cb)) : Eigen::VectorXd::Zero(pr.zb.cols());
  return fit;
}

// Two-factor smoother matrix S = Zg (Zg' Zg + D)^-1 Zg' with D the penalty
// diagonal.  With both penalties zero the inner matrix is rank deficient
// (the row and column spaces overlap on constants), so the projection is
// taken via a pseudo-inverse.
inline Eigen::MatrixXd sg(const Problem& pr) {
  const int ra = static_cast<int>(pr.za.cols());
  const int cb = static_cast<int>(pr.zb.cols());
  const bool use_a = std::isfinite(pr.lambda_a);
  const bool use_b = std::isfinite(pr.lambda_b);
  const int dim = (use_a ? ra : 0) + (use_b ? cb : 0);
  if (dim == 0) return Eigen::MatrixXd::Zero(pr.x.rows(), pr.x.rows());
  Eigen::MatrixXd zg(pr.x.rows(), dim);
  int at = 0;
  if (use_a) { zg.middleCols(at, ra) = pr.za; at += ra; }
  if (use_b) { zg.middleCols(at, cb) = pr.zb; }
  Eigen::MatrixXd inner = zg.transpose() * zg;
  at = 0;
  if (use_a) { for (int k = 0; k < ra; ++k) inner(at + k, at + k) += pr.lambda_a; at += ra; }
  if (use_b) { for (int k = 0; k < cb; ++k) inner(at + k, at + k) += pr.lambda_b; }
  if (pr.lambda_a == 0.0 && pr.lambda_b == 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(inner);
    return zg * cod.pseudoInverse() * zg.transpose();
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
  if (ldlt.info() != Eigen::Success) throw SingularError("dense smoother: inner solve failed");
  return zg * ldlt.solve(zg.transpose());
}

// Ridge fit of one factor's effects under an optional sum-to-zero constraint,
// solved directly through the KKT system.  This is the oracle for the
// weighted-centering closed form.
inline Eigen::VectorXd constrained_ridge(const Eigen::MatrixXd& z, double lambda,
                                         const Eigen::VectorXd& resp, bool sum_to_zero) {
  const int l = static_cast<int>(z.cols());
  if (!sum_to_zero) {
    Eigen::MatrixXd sys = z.transpose() * z + lambda * Eigen::MatrixXd::Identity(l, l);
    return sys.ldlt().solve(z.transpose() * resp);
  }
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(l + 1, l + 1);
  kkt.topLeftCorner(l, l) = z.transpose() * z + lambda * Eigen::MatrixXd::Identity(l, l);
  kkt.topRightCorner(l, 1).setOnes();
  kkt.bottomLeftCorner(1, l).setOnes();
  Eigen::VectorXd rhs(l + 1);
  rhs.head(l) = z.transpose() * resp;
  rhs[l] = 0.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) throw SingularError("constrained ridge: KKT system singular");
  const Eigen::VectorXd sol = lu.solve(rhs);
  return sol.head(l);
}

// Joint two-factor penalized fit of a plain response under optional
// sum-to-zero constraints; the oracle for the centered alternating updates.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> constrained_effects(const Problem& pr,
                                                                       const Eigen::VectorXd& resp,
                                                                       bool center_a,
                                                                       bool center_b) {
  const int ra = static_cast<int>(pr.za.cols());
  const int cb = static_cast<int>(pr.zb.cols());
  const bool use_a = std::isfinite(pr.lambda_a);
  const bool use_b = std::isfinite(pr.lambda_b);
  const int dim = (use_a ? ra : 0) + (use_b ? cb : 0);
  if (dim == 0) return {Eigen::VectorXd::Zero(ra), Eigen::VectorXd::Zero(cb)};
  Eigen::MatrixXd u(pr.x.rows(), dim);
  int at = 0;
  if (use_a) { u.middleCols(at, ra) = pr.za; at += ra; }
  if (use_b) { u.middleCols(at, cb) = pr.zb; }

  int ncon = 0;
  if (use_a && center_a) ++ncon;
  if (use_b && center_b) ++ncon;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim + ncon, dim + ncon);
  kkt.topLeftCorner(dim, dim) = u.transpose() * u;
  at = 0;
  if (use_a) { for (int k = 0; k < ra; ++k) kkt(at + k, at + k) += pr.lambda_a; at += ra; }
  if (use_b) { for (int k = 0; k < cb; ++k) kkt(at + k, at + k) += pr.lambda_b; }
  int con = dim;
  if (use_a && center_a) {
    kkt.block(con, 0, 1, ra).setOnes();
    kkt.block(0, con, ra, 1).setOnes();
    ++con;
  }
  if (use_b && center_b) {
    const int off = use_a ? ra : 0;
    kkt.block(con, off, 1, cb).setOnes();
    kkt.block(off, con, cb, 1).setOnes();
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim + ncon);
  rhs.head(dim) = u.transpose() * resp;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) throw SingularError("constrained effects: KKT system singular");
  const Eigen::VectorXd sol = lu.solve(rhs);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(ra);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(cb);
  at = 0;
  if (use_a) { a = sol.segment(at, ra); at += ra; }
  if (use_b) { b = sol.segment(at, cb); }
  return {a, b};
}

// Centered two-factor smoother matrix, built column-by-column from the
// constrained joint fits.
inline Eigen::MatrixXd sg_centered(const Problem& pr, bool center_a, bool center_b) {
  const std::int64_t n = pr.x.rows();
  Eigen::MatrixXd s(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (std::int64_t k = 0; k < n; ++k) {
    e[k] = 1.0;
    const auto [a, b] = constrained_effects(pr, e, center_a, center_b);
    s.col(k) = pr.za * a + pr.zb * b;
    e[k] = 0.0;
  }
  return s;
}

}  // namespace crefit::dense

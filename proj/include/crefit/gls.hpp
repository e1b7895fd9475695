#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "crefit/backfit.hpp"
#include "crefit/errors.hpp"
#include "crefit/moments.hpp"
#include "crefit/smoother.hpp"
#include "crefit/table.hpp"

namespace crefit {

// V * m for the model covariance V = sigma2_a Za Za' + sigma2_b Zb Zb' + sigma2_e I,
// applied column-wise in O(N) per column via per-level partial sums.
inline Eigen::MatrixXd apply_v(const ObservationTable& t, const VarianceComponents& vc,
                               const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != t.n()) throw ConfigError("apply_v: column length mismatch");
  Eigen::MatrixXd out = vc.sigma2_e * m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (vc.sigma2_a > 0.0) {
      const Eigen::VectorXd ps = partial_sums(t, Factor::row, m.col(j));
      const auto& row = t.row_level();
      for (std::int64_t k = 0; k < t.n(); ++k) out(k, j) += vc.sigma2_a * ps[row[k]];
    }
    if (vc.sigma2_b > 0.0) {
      const Eigen::VectorXd ps = partial_sums(t, Factor::col, m.col(j));
      const auto& col = t.col_level();
      for (std::int64_t k = 0; k < t.n(); ++k) out(k, j) += vc.sigma2_b * ps[col[k]];
    }
  }
  return out;
}

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov_naive;   // sigma2_hat (X'X)^{-1}
  Eigen::MatrixXd cov_model;   // (X'X)^{-1} X'VX (X'X)^{-1}; empty until filled
  Eigen::MatrixXd xtx_inv;
  double sigma2_hat = 0.0;
};

inline OlsFit fit_ols(const ObservationTable& t) {
  const Eigen::MatrixXd& x = t.x();
  const std::int64_t n = t.n();
  const int p = t.p();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    std::string dep;
    const auto& perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < p; ++k) {
      if (!dep.empty()) dep += ", ";
      dep += t.covariate_names()[perm[k]];
    }
    throw SingularError("design matrix is rank deficient; dependent columns: " + dep);
  }
  OlsFit fit;
  fit.beta = qr.solve(t.y());
  Eigen::MatrixXd xtx = x.transpose() * x;
  fit.xtx_inv = xtx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::VectorXd resid = t.y() - x * fit.beta;
  fit.sigma2_hat = n > p ? resid.squaredNorm() / static_cast<double>(n - p) : 0.0;
  fit.cov_naive = fit.sigma2_hat * fit.xtx_inv;
  return fit;
}

// Covariance of the OLS coefficients under the two-factor model with the
// plugged-in variance components (the naive OLS covariance ignores the
// row/column correlation structure).
inline void ols_model_covariance(const ObservationTable& t, OlsFit& fit,
                                 const VarianceComponents& vc) {
  const Eigen::MatrixXd vx = apply_v(t, vc, t.x());
  Eigen::MatrixXd mid = t.x().transpose() * vx;
  mid = 0.5 * (mid + mid.transpose());
  fit.cov_model = fit.xtx_inv * mid * fit.xtx_inv;
  fit.cov_model = 0.5 * (fit.cov_model + fit.cov_model.transpose()).eval();
}

struct GlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;         // sandwich covariance; empty when not requested
  Eigen::VectorXd se;
  VarianceComponents theta;
  Variant variant = Variant::m3;
  int iterations_coef = 0;
  int iterations_blup = -1;    // -1 when no second pass ran
  bool has_cov = false;
  bool has_blups = false;
  Eigen::VectorXd blup_a;
  Eigen::VectorXd blup_b;
};

// Generalized least squares via backfitting: every column of X and Y is run
// through the residual smoother (I - S~) in one pooled pass, then
//   beta = (X' X~)^{-1} X~' Y,  cov = (X' X~)^{-1} X~' V X~ (X' X~)^{-1}.
// The covariance form needs a symmetric smoother, so variant m1 (naive
// centering) refuses it.  Optional second pass backfits Y - X beta for the
// level-effect predictions.
inline GlsFit fit_gls(const ObservationTable& t, const VarianceComponents& vc,
                      const BackfitConfig& cfg_in, bool want_blups = false,
                      bool want_cov = true) {
  BackfitConfig cfg = cfg_in;
  cfg.lambda_a = vc.lambda_a();
  cfg.lambda_b = vc.lambda_b();
  if (want_cov && cfg.variant == Variant::m1)
    throw ConfigError(
        "variant m1 has a non-symmetric smoother, so the sandwich covariance is unavailable; "
        "use m0, m2 or m3, or request coefficients only");

  const Eigen::MatrixXd& x = t.x();
  const int p = t.p();
  Eigen::MatrixXd responses(t.n(), p + 1);
  responses.leftCols(p) = x;
  responses.col(p) = t.y();

  GlsFit fit;
  fit.theta = vc;
  fit.variant = cfg.variant;

  const BackfitResult bf = backfit(t, responses, cfg);
  fit.iterations_coef = bf.iterations;
  const Eigen::MatrixXd xt = x - bf.fitted.leftCols(p);  // (I - S~) X

  Eigen::MatrixXd gram = x.transpose() * xt;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-14 * d.maxCoeff())
    throw SingularError("smoothed normal equations are singular (X' (I-S~) X)");
  fit.beta = ldlt.solve(xt.transpose() * t.y());

  if (want_cov) {
    const Eigen::MatrixXd g = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd vxt = apply_v(t, vc, xt);
    Eigen::MatrixXd mid = xt.transpose() * vxt;
    mid = 0.5 * (mid + mid.transpose()).eval();
    fit.cov = g * mid * g;
    fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();
    fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.has_cov = true;
  }

  if (want_blups) {
    const Eigen::VectorXd resid = t.y() - x * fit.beta;
    const BackfitResult blup = backfit(t, resid, cfg);
    fit.blup_a = blup.a.col(0);
    fit.blup_b = blup.b.col(0);
    fit.iterations_blup = blup.iterations;
    fit.has_blups = true;
  }
  return fit;
}

struct Diagnostics {
  Eigen::VectorXd naivete;       // model / naive OLS variance, per coefficient
  Eigen::VectorXd inefficiency;  // OLS / GLS model variance, per coefficient
  double max_naivete = 0.0;      // worst ratio over linear combinations
  double max_inefficiency = 0.0;
};

namespace detail {
// Largest generalized eigenvalue of (A, B) for symmetric A, positive
// definite B, via Cholesky whitening.
inline double generalized_eig_max(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success)
    throw SingularError("diagnostics: covariance matrix is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd w = l.triangularView<Eigen::Lower>().solve(a);
  w = l.triangularView<Eigen::Lower>().solve(w.transpose().eval());
  w = 0.5 * (w + w.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w);
  if (eig.info() != Eigen::Success) throw SingularError("diagnostics: eigensolve failed");
  return eig.eigenvalues().maxCoeff();
}
}  // namespace detail

// How wrong the naive OLS standard errors are (naivete) and how much
// precision OLS gives up against GLS (inefficiency), under the plugged-in
// variance components.  Requires ols.cov_model to be filled.
inline Diagnostics diagnose(const OlsFit& ols, const GlsFit& gls) {
  if (ols.cov_model.size() == 0)
    throw ConfigError("diagnose: OLS model covariance missing; call ols_model_covariance first");
  if (!gls.has_cov) throw ConfigError("diagnose: GLS covariance missing");
  const Eigen::Index p = ols.beta.size();
  Diagnostics d;
  d.naivete.resize(p);
  d.inefficiency.resize(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    d.naivete[k] = ols.cov_model(k, k) / ols.cov_naive(k, k);
    d.inefficiency[k] = ols.cov_model(k, k) / gls.cov(k, k);
  }
  d.max_naivete = detail::generalized_eig_max(ols.cov_model, ols.cov_naive);
  d.max_inefficiency = detail::generalized_eig_max(ols.cov_model, gls.cov);
  return d;
}

}  // namespace crefit

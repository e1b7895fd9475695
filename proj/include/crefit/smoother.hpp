#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "crefit/errors.hpp"
#include "crefit/table.hpp"

namespace crefit {

// How per-level effects are recentered after shrinkage:
//   none     - plain shrunken means
//   naive    - subtract the unweighted mean of the shrunken effects
//   weighted - closed-form solution of the ridge problem under a sum-to-zero
//              constraint; the resulting smoother matrix is symmetric
enum class Centering { none, naive, weighted };

using LevelEffects = Eigen::VectorXd;

// Precomputed description of one factor's shrinkage step.  lambda is the
// ridge penalty (noise-to-component variance ratio); +infinity collapses the
// factor entirely (all effects zero).
struct ShrinkagePlan {
  Factor factor = Factor::row;
  double lambda = 0.0;
  Centering centering = Centering::none;
  Eigen::VectorXd weights;  // weighted centering only: w_i ∝ 1/(n_i + lambda)

  static ShrinkagePlan make(Factor f, double lambda, Centering c, const FactorCounts& counts) {
    if (std::isnan(lambda) || lambda < 0.0)
      throw ConfigError("shrinkage penalty must be >= 0 (or +inf)");
    ShrinkagePlan plan;
    plan.factor = f;
    plan.lambda = lambda;
    plan.centering = c;
    if (c == Centering::weighted && std::isfinite(lambda)) {
      const Eigen::VectorXi& n = (f == Factor::row) ? counts.n_row : counts.n_col;
      plan.weights.resize(n.size());
      double total = 0.0;
      for (Eigen::Index i = 0; i < n.size(); ++i) {
        plan.weights[i] = 1.0 / (n[i] + lambda);
        total += plan.weights[i];
      }
      plan.weights /= total;
    }
    return plan;
  }
};

// Per-level sums of a residual vector: out[l] = sum of resid over the
// observations at level l of the factor.  Single O(N) pass.
inline Eigen::VectorXd partial_sums(const ObservationTable& t, Factor f,
                                    const Eigen::Ref<const Eigen::VectorXd>& resid) {
  if (resid.size() != t.n()) throw ConfigError("partial_sums: residual length mismatch");
  const auto& idx = (f == Factor::row) ? t.row_level() : t.col_level();
  const int levels = (f == Factor::row) ? t.r() : t.c();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(levels);
  for (std::int64_t k = 0; k < t.n(); ++k) out[idx[k]] += resid[k];
  return out;
}

// Shrunken (optionally recentered) effects from partial sums:
//   none:     e_l = psum_l / (n_l + lambda)
//   naive:    subtract mean of the plain effects
//   weighted: e_l = (psum_l - sum_r w_r psum_r) / (n_l + lambda)
inline LevelEffects shrunken_effects(const ShrinkagePlan& plan, const Eigen::VectorXd& psums,
                                     const Eigen::VectorXi& counts) {
  if (psums.size() != counts.size()) throw ConfigError("shrunken_effects: size mismatch");
  const Eigen::Index levels = psums.size();
  LevelEffects out(levels);
  if (!std::isfinite(plan.lambda)) {
    out.setZero();
    return out;
  }
  switch (plan.centering) {
    case Centering::none:
      for (Eigen::Index l = 0; l < levels; ++l) out[l] = psums[l] / (counts[l] + plan.lambda);
      break;
    case Centering::naive: {
      for (Eigen::Index l = 0; l < levels; ++l) out[l] = psums[l] / (counts[l] + plan.lambda);
      out.array() -= out.mean();
      break;
    }
    case Centering::weighted: {
      const double shift = plan.weights.dot(psums);
      for (Eigen::Index l = 0; l < levels; ++l)
        out[l] = (psums[l] - shift) / (counts[l] + plan.lambda);
      break;
    }
  }
  return out;
}

// Broadcast per-level effects back to observation length.
inline Eigen::VectorXd scatter(const ObservationTable& t, Factor f, const LevelEffects& effects) {
  const auto& idx = (f == Factor::row) ? t.row_level() : t.col_level();
  const int levels = (f == Factor::row) ? t.r() : t.c();
  if (effects.size() != levels) throw ConfigError("scatter: effects length mismatch");
  Eigen::VectorXd out(t.n());
  for (std::int64_t k = 0; k < t.n(); ++k) out[k] = effects[idx[k]];
  return out;
}

// One application of the single-factor smoother: fitted = scatter(effects(resid)).
inline Eigen::VectorXd smooth(const ObservationTable& t, const ShrinkagePlan& plan,
                              const Eigen::Ref<const Eigen::VectorXd>& resid) {
  const Eigen::VectorXi& n = (plan.factor == Factor::row) ? t.counts().n_row : t.counts().n_col;
  return scatter(t, plan.factor, shrunken_effects(plan, partial_sums(t, plan.factor, resid), n));
}

// Materializes the N x N smoother matrix by applying the smoother to basis
// vectors.  Diagnostic-scale only.
inline Eigen::MatrixXd dense_smoother_matrix(const ObservationTable& t, const ShrinkagePlan& plan,
                                             std::int64_t cap = 2000) {
  if (t.n() > cap)
    throw ConfigError("dense_smoother_matrix: N exceeds cap " + std::to_string(cap));
  const std::int64_t n = t.n();
  Eigen::MatrixXd s(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (std::int64_t k = 0; k < n; ++k) {
    e[k] = 1.0;
    s.col(k) = smooth(t, plan, e);
    e[k] = 0.0;
  }
  return s;
}

}  // namespace crefit

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "crefit/backfit.hpp"
#include "crefit/errors.hpp"
#include "crefit/rng.hpp"
#include "crefit/smoother.hpp"
#include "crefit/table.hpp"

namespace crefit {

// C x C update matrix of the alternating scheme together with its operator
// norms.  Entry (j, s) is the coefficient of column effect s in the update
// of column effect j; convergence is governed by these norms.
struct UpdateMatrix {
  Variant variant = Variant::m0;
  Eigen::MatrixXd entries;
  double norm1 = 0.0;            // max absolute column sum
  double norm2 = 0.0;            // top singular value
  double norm_inf = 0.0;         // max absolute row sum
  double spectral_radius = 0.0;  // clamped to min(norm1, norm_inf)
  bool norm2_converged = true;
  bool spectral_converged = true;
};

namespace detail {

// Weighted co-observation matrix T(j, s) = sum_i Z_ij Z_is / (n_row_i + lambda_a)
// plus the marginals q_s = sum_i Z_is / (n_row_i + lambda_a) and h = sum_i 1/(n_row_i + lambda_a).
// Cost is the sum of squared row counts; this is a desk-scale diagnostic.
struct WeightedCo {
  Eigen::MatrixXd t;
  Eigen::VectorXd q;
  double h = 0.0;
};

inline WeightedCo weighted_co(const ObservationTable& tab, double lambda_a) {
  WeightedCo wc;
  const int c = tab.c();
  wc.t.setZero(c, c);
  wc.q.setZero(c);
  const auto& cnt = tab.counts().n_row;
  const Groups g = group_by(tab, Factor::row);
  const auto& col = tab.col_level();
  for (int i = 0; i < tab.r(); ++i) {
    const double w = 1.0 / (cnt[i] + lambda_a);  // 0 when lambda_a = inf
    wc.h += w;
    for (std::int64_t u = g.offsets[i]; u < g.offsets[i + 1]; ++u) {
      const int ju = col[g.items[u]];
      wc.q[ju] += w;
      for (std::int64_t v = g.offsets[i]; v < g.offsets[i + 1]; ++v)
        wc.t(ju, col[g.items[v]]) += w;
    }
  }
  return wc;
}

struct PowerResult {
  double value = 0.0;
  bool converged = true;
};

// Top singular value by power iteration on M'M; the Rayleigh quotient of a
// symmetric PSD matrix approaches the top eigenvalue from below, so the
// estimate never overshoots.
inline PowerResult top_singular_value(const Eigen::MatrixXd& m, double rel_tol = 1e-6,
                                      int max_iter = 10000, int restarts = 2) {
  const Eigen::Index c = m.cols();
  if (c == 0 || m.cwiseAbs().maxCoeff() == 0.0) return {0.0, true};
  PowerResult best{0.0, false};
  for (int r = 0; r < restarts; ++r) {
    Rng rng(0x5eedULL + 7919ULL * static_cast<std::uint64_t>(r) + static_cast<std::uint64_t>(c));
    Eigen::VectorXd v(c);
    for (Eigen::Index k = 0; k < c; ++k) v[k] = rng.normal();
    v.normalize();
    double prev = 0.0;
    bool conv = false;
    double sigma = 0.0;
    for (int it = 0; it < max_iter; ++it) {
      Eigen::VectorXd w = m * v;
      sigma = w.norm();  // = sqrt(v' M'M v) for unit v
      if (sigma == 0.0) { conv = true; break; }
      Eigen::VectorXd u = m.transpose() * w;
      const double un = u.norm();
      if (un == 0.0) { conv = true; break; }
      v = u / un;
      if (it > 0 && std::abs(sigma - prev) <= rel_tol * std::max(sigma, 1e-300)) {
        conv = true;
        break;
      }
      prev = sigma;
    }
    if (sigma > best.value) best = {sigma, conv};
    if (best.converged && best.value >= sigma) best.converged = best.converged && conv;
  }
  return best;
}

// Spectral radius by power iteration with Rayleigh tracking; a shifted retry
// handles a dominant negative eigenvalue, and a growth-rate estimate is the
// flagged fallback when the iteration cycles (complex dominant pair).
inline PowerResult spectral_radius(const Eigen::MatrixXd& m, double rel_tol = 1e-4,
                                   int max_iter = 10000, int restarts = 2) {
  const Eigen::Index c = m.cols();
  if (c == 0 || m.cwiseAbs().maxCoeff() == 0.0) return {0.0, true};

  auto run = [&](const Eigen::MatrixXd& a, std::uint64_t salt) -> PowerResult {
    Rng rng(0xabcdULL + salt);
    Eigen::VectorXd v(c);
    for (Eigen::Index k = 0; k < c; ++k) v[k] = rng.normal();
    v.normalize();
    double ray = 0.0, prev = 0.0;
    int stable = 0;
    double log_growth = 0.0;
    int growth_steps = 0;
    for (int it = 0; it < max_iter; ++it) {
      Eigen::VectorXd w = a * v;
      ray = v.dot(w);
      const double nrm = w.norm();
      if (nrm == 0.0) return {0.0, true};
      if (it >= 16) {  // ignore the transient before tracking growth
        log_growth += std::log(nrm);
        ++growth_steps;
      }
      v = w / nrm;
      if (it > 0 && std::abs(ray - prev) <= rel_tol * std::max(std::abs(ray), 1e-300)) {
        if (++stable >= 3) return {std::abs(ray), true};
      } else {
        stable = 0;
      }
      prev = ray;
    }
    const double fallback =
        growth_steps > 0 ? std::exp(log_growth / growth_steps) : std::abs(ray);
    return {fallback, false};
  };

  PowerResult best{0.0, false};
  for (int r = 0; r < restarts; ++r) {
    const PowerResult got = run(m, static_cast<std::uint64_t>(r));
    if (got.converged && got.value >= best.value) best = got;
    if (!best.converged && got.value > best.value) best.value = got.value;
  }
  if (!best.converged) {
    // shift to split eigenvalues symmetric about zero
    const double shift = 0.5 * m.cwiseAbs().colwise().sum().maxCoeff();
    const Eigen::MatrixXd shifted = m + shift * Eigen::MatrixXd::Identity(c, c);
    const PowerResult got = run(shifted, 17);
    if (got.converged) {
      const double cand = std::abs(got.value - shift);
      if (cand >= best.value) best = {cand, true};
    }
  }
  return best;
}

}  // namespace detail

inline double matrix_norm1(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().colwise().sum().maxCoeff();
}

inline double matrix_norm_inf(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

// Materializes the update matrix for a variant.  m0/m1/m2 have closed forms
// through the weighted co-observation matrix; m3 (weighted centering on both
// factors) is built by applying the update map to basis vectors.
inline Eigen::MatrixXd update_matrix_entries(const ObservationTable& tab, double lambda_a,
                                             double lambda_b, Variant variant) {
  const int c = tab.c();
  const int r = tab.r();
  const auto& ncol = tab.counts().n_col;
  Eigen::MatrixXd m(c, c);
  if (variant == Variant::m3) {
    BackfitConfig cfg;
    cfg.variant = variant;
    cfg.lambda_a = lambda_a;
    cfg.lambda_b = lambda_b;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(c);
    for (int s = 0; s < c; ++s) {
      e[s] = 1.0;
      m.col(s) = update_row_action(tab, cfg, e);
      e[s] = 0.0;
    }
    return m;
  }
  const detail::WeightedCo wc = detail::weighted_co(tab, lambda_a);
  for (int j = 0; j < c; ++j) {
    const double dj = 1.0 / (ncol[j] + lambda_b);  // 0 when lambda_b = inf
    for (int s = 0; s < c; ++s) {
      double val = wc.t(j, s);
      if (variant == Variant::m1) val -= (static_cast<double>(ncol[j]) / r) * wc.q[s];
      if (variant == Variant::m2) val -= (wc.h > 0.0 ? wc.q[s] / wc.h : 0.0) * wc.q[j];
      m(j, s) = val * dj;
    }
  }
  return m;
}

inline UpdateMatrix build_update_matrix(const ObservationTable& tab, double lambda_a,
                                        double lambda_b, Variant variant,
                                        int c_cap = 20000) {
  if (tab.c() > c_cap)
    throw ConfigError("update matrix: C=" + std::to_string(tab.c()) + " exceeds cap " +
                      std::to_string(c_cap) + " (dense C x C storage)");
  UpdateMatrix um;
  um.variant = variant;
  um.entries = update_matrix_entries(tab, lambda_a, lambda_b, variant);
  um.norm1 = matrix_norm1(um.entries);
  um.norm_inf = matrix_norm_inf(um.entries);
  const auto n2 = detail::top_singular_value(um.entries);
  um.norm2 = n2.value;
  um.norm2_converged = n2.converged;
  const auto sr = detail::spectral_radius(um.entries);
  // Every induced norm bounds the spectral radius; clamping keeps the
  // iterative estimate inside the exact bounds.
  um.spectral_radius = std::min(sr.value, std::min(um.norm1, um.norm_inf));
  um.spectral_converged = sr.converged;
  return um;
}

// Asymptotic bound on the one-norm of the centered update matrices when
// sampling heterogeneity is at most upsilon.
inline double theoretical_bound(double upsilon) {
  return upsilon * upsilon - 1.0 / (upsilon * upsilon);
}

// Largest heterogeneity with bound <= 1: sqrt((1 + sqrt(5)) / 2).
inline double critical_upsilon() { return std::sqrt(0.5 * (1.0 + std::sqrt(5.0))); }

}  // namespace crefit

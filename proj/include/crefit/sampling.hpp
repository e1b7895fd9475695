#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "crefit/errors.hpp"
#include "crefit/moments.hpp"
#include "crefit/rng.hpp"
#include "crefit/table.hpp"

namespace crefit {

// Random sparse-design generator: R = ceil(S^rho) rows, C = ceil(S^kappa)
// columns, and cell (i, j) observed with probability
//   p_ij = min(1, U_ij * S^(1 - rho - kappa)),  U_ij ~ Uniform[1, upsilon],
// so E(N) lies in [S, upsilon * S] (before clipping).  fixed_prob pins
// U_ij = 1.  Empty rows/columns are dropped and levels reindexed.
struct SamplingModel {
  std::int64_t s = 4096;
  double rho = 0.5;
  double kappa = 0.5;
  double upsilon = 1.27;
  std::uint64_t seed = 1;
  bool fixed_prob = false;
};

struct SampledDesign {
  std::vector<std::int32_t> rows;
  std::vector<std::int32_t> cols;
  int r = 0;  // realized (post-drop) level counts
  int c = 0;
  int dropped_rows = 0;
  int dropped_cols = 0;
  double expected_n = 0.0;  // sum of cell probabilities
  double var_n = 0.0;       // sum of p (1 - p)
};

inline SampledDesign sample_design(const SamplingModel& model) {
  if (model.s < 2) throw ConfigError("sample_design: S must be >= 2");
  if (model.upsilon < 1.0) throw ConfigError("sample_design: upsilon must be >= 1");
  if (!(model.rho > 0.0) || !(model.kappa > 0.0))
    throw ConfigError("sample_design: rho and kappa must be > 0");
  const double s = static_cast<double>(model.s);
  const auto r0 = static_cast<std::int64_t>(std::ceil(std::pow(s, model.rho)));
  const auto c0 = static_cast<std::int64_t>(std::ceil(std::pow(s, model.kappa)));
  if (r0 * c0 > (std::int64_t{1} << 33))
    throw ConfigError("sample_design: R*C too large to enumerate");
  const double base = std::pow(s, 1.0 - model.rho - model.kappa);

  Rng rng(derive_seed(model.seed, 0xD351));
  SampledDesign d;
  std::vector<std::int32_t> raw_rows, raw_cols;
  for (std::int64_t i = 0; i < r0; ++i) {
    for (std::int64_t j = 0; j < c0; ++j) {
      const double u = model.fixed_prob ? 1.0 : rng.uniform(1.0, model.upsilon);
      const double p = std::min(1.0, u * base);
      d.expected_n += p;
      d.var_n += p * (1.0 - p);
      if (rng.uniform01() < p) {
        raw_rows.push_back(static_cast<std::int32_t>(i));
        raw_cols.push_back(static_cast<std::int32_t>(j));
      }
    }
  }
  if (raw_rows.empty())
    throw ConfigError("sample_design: no cells observed; increase S or change the seed");

  // drop empty levels, reindex densely in first-appearance (row-major) order
  std::vector<std::int32_t> row_map(r0, -1), col_map(c0, -1);
  int rr = 0, cc = 0;
  for (std::size_t k = 0; k < raw_rows.size(); ++k) {
    if (row_map[raw_rows[k]] < 0) row_map[raw_rows[k]] = rr++;
    if (col_map[raw_cols[k]] < 0) col_map[raw_cols[k]] = cc++;
  }
  d.r = rr;
  d.c = cc;
  d.dropped_rows = static_cast<int>(r0) - rr;
  d.dropped_cols = static_cast<int>(c0) - cc;
  d.rows.resize(raw_rows.size());
  d.cols.resize(raw_cols.size());
  for (std::size_t k = 0; k < raw_rows.size(); ++k) {
    d.rows[k] = row_map[raw_rows[k]];
    d.cols[k] = col_map[raw_cols[k]];
  }
  return d;
}

// Wraps a sampled design as a table with zero response and intercept-only
// covariates (enough for norm diagnostics on the incidence pattern).
inline ObservationTable design_table(const SampledDesign& d) {
  const auto n = static_cast<std::int64_t>(d.rows.size());
  return ObservationTable(d.rows, d.cols, Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Ones(n, 1));
}

// Synthetic dataset from the two-factor model: covariates N(0,1) with an
// intercept, effects a_i ~ N(0, sigma2_a), b_j ~ N(0, sigma2_b), noise
// N(0, sigma2_e), response y = x' beta + a + b + e.  Streams are derived per
// component, so the same seed gives the same design for any p or theta.
inline ObservationTable simulate_dataset(const SamplingModel& model, int p,
                                         const VarianceComponents& theta,
                                         const Eigen::VectorXd& beta) {
  if (p < 1) throw ConfigError("simulate_dataset: p must be >= 1");
  if (beta.size() != p) throw ConfigError("simulate_dataset: beta must have length p");
  const SampledDesign d = sample_design(model);
  const auto n = static_cast<std::int64_t>(d.rows.size());

  Rng xrng(derive_seed(model.seed, 0xC0F));
  Rng arng(derive_seed(model.seed, 0xA11));
  Rng brng(derive_seed(model.seed, 0xB22));
  Rng erng(derive_seed(model.seed, 0xE33));

  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  for (std::int64_t k = 0; k < n; ++k)
    for (int q = 1; q < p; ++q) x(k, q) = xrng.normal();

  const double sa = std::sqrt(theta.sigma2_a), sb = std::sqrt(theta.sigma2_b);
  const double se = std::sqrt(theta.sigma2_e);
  Eigen::VectorXd a(d.r), b(d.c);
  for (int i = 0; i < d.r; ++i) a[i] = sa * arng.normal();
  for (int j = 0; j < d.c; ++j) b[j] = sb * brng.normal();

  Eigen::VectorXd y(n);
  for (std::int64_t k = 0; k < n; ++k)
    y[k] = x.row(k).dot(beta) + a[d.rows[k]] + b[d.cols[k]] + se * erng.normal();

  return ObservationTable(d.rows, d.cols, std::move(y), std::move(x));
}

}  // namespace crefit

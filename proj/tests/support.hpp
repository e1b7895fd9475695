#pragma once

// Shared helpers for the unit tests: small random designs and error metrics.

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "crefit/rng.hpp"
#include "crefit/table.hpp"

namespace testsup {

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-30);
}

inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-30);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

// Random crossed design with every level occupied at least once and no
// duplicate (row, col) cells. Covariates standard normal, first column 1.
inline crefit::ObservationTable random_table(std::uint64_t seed, int r, int c, int extra,
                                             int p = 2, double sigma_a = 1.0,
                                             double sigma_b = 1.0, double sigma_e = 1.0) {
  crefit::Rng rng(seed);
  std::vector<std::int32_t> rows, cols;
  std::vector<std::pair<int, int>> used;
  auto taken = [&](int i, int j) {
    return std::find(used.begin(), used.end(), std::make_pair(i, j)) != used.end();
  };
  // one observation per row level and per column level to keep both occupied
  for (int i = 0; i < r; ++i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
    while (taken(i, j)) j = (j + 1) % c;
    rows.push_back(i);
    cols.push_back(j);
    used.emplace_back(i, j);
  }
  for (int j = 0; j < c; ++j) {
    bool seen = false;
    for (const auto& [ui, uj] : used) seen = seen || uj == j;
    if (seen) continue;
    int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(r)));
    while (taken(i, j)) i = (i + 1) % r;
    rows.push_back(i);
    cols.push_back(j);
    used.emplace_back(i, j);
  }
  for (int k = 0; k < extra; ++k) {
    const int cells = r * c;
    if (static_cast<int>(used.size()) >= cells) break;
    int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(r)));
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
    int tries = 0;
    while (taken(i, j) && tries++ < cells) {
      j = (j + 1) % c;
      if (j == 0) i = (i + 1) % r;
    }
    if (taken(i, j)) break;
    rows.push_back(i);
    cols.push_back(j);
    used.emplace_back(i, j);
  }
  const auto n = static_cast<std::int64_t>(rows.size());
  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  for (int q = 1; q < p; ++q)
    for (std::int64_t k = 0; k < n; ++k) x(k, q) = rng.normal();
  Eigen::VectorXd a(r), b(c);
  for (int i = 0; i < r; ++i) a[i] = sigma_a * rng.normal();
  for (int j = 0; j < c; ++j) b[j] = sigma_b * rng.normal();
  Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(p, 1.0, 0.25);
  Eigen::VectorXd y(n);
  for (std::int64_t k = 0; k < n; ++k)
    y[k] = x.row(k).dot(beta) + a[rows[k]] + b[cols[k]] + sigma_e * rng.normal();
  return crefit::ObservationTable(std::move(rows), std::move(cols), std::move(y), std::move(x));
}

}  // namespace testsup

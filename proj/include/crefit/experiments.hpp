#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "crefit/backfit.hpp"
#include "crefit/csv.hpp"
#include "crefit/errors.hpp"
#include "crefit/gls.hpp"
#include "crefit/moments.hpp"
#include "crefit/rng.hpp"
#include "crefit/sampling.hpp"
#include "crefit/table.hpp"
#include "crefit/update_matrix.hpp"

namespace crefit {

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Norm scaling study: how the update-matrix norms behave as the design grows.

struct NormExperimentConfig {
  std::vector<std::pair<double, double>> points;  // (rho, kappa) pairs
  std::vector<std::int64_t> s_grid;               // e.g. 256, 512, ..., 8192
  double upsilon = 1.27;
  int reps = 5;
  Variant variant = Variant::m2;
  double lambda_a = 0.0;
  double lambda_b = 0.0;
  std::uint64_t seed = 1;
  bool fixed_prob = false;
  int c_cap = 20000;
};

struct NormRow {
  double rho = 0.0;
  double kappa = 0.0;
  std::int64_t s = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  int r = 0;
  int c = 0;
  Variant variant = Variant::m2;
  double norm1 = 0.0;
  double norm2 = 0.0;
  double norm_inf = 0.0;
  double spectral_radius = 0.0;
  double seconds = 0.0;
};

inline std::vector<NormRow> norm_scaling_experiment(const NormExperimentConfig& cfg) {
  if (cfg.points.empty() || cfg.s_grid.empty() || cfg.reps < 1)
    throw ConfigError("norm experiment: need at least one point, one S, one rep");
  std::vector<NormRow> rows;
  std::uint64_t cell = 0;
  for (const auto& [rho, kappa] : cfg.points) {
    for (const auto s : cfg.s_grid) {
      for (int rep = 0; rep < cfg.reps; ++rep, ++cell) {
        SamplingModel model;
        model.s = s;
        model.rho = rho;
        model.kappa = kappa;
        model.upsilon = cfg.upsilon;
        model.fixed_prob = cfg.fixed_prob;
        model.seed = derive_seed(cfg.seed, cell);  // per-cell stream: order-independent
        const auto t0 = std::chrono::steady_clock::now();
        const SampledDesign d = sample_design(model);
        const ObservationTable tab = design_table(d);
        const UpdateMatrix um =
            build_update_matrix(tab, cfg.lambda_a, cfg.lambda_b, cfg.variant, cfg.c_cap);
        NormRow row;
        row.rho = rho;
        row.kappa = kappa;
        row.s = s;
        row.rep = rep;
        row.seed = model.seed;
        row.n = tab.n();
        row.r = tab.r();
        row.c = tab.c();
        row.variant = cfg.variant;
        row.norm1 = um.norm1;
        row.norm2 = um.norm2;
        row.norm_inf = um.norm_inf;
        row.spectral_radius = um.spectral_radius;
        row.seconds = detail::seconds_since(t0);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline void write_norm_csv(std::ostream& out, const std::vector<NormRow>& rows) {
  out << "rho,kappa,S,rep,seed,N,R,C,variant,norm1,norm2,norminf,spectral_radius,seconds\n";
  for (const auto& r : rows) {
    out << format_double(r.rho) << ',' << format_double(r.kappa) << ',' << r.s << ',' << r.rep
        << ',' << r.seed << ',' << r.n << ',' << r.r << ',' << r.c << ',' << variant_name(r.variant)
        << ',' << format_double(r.norm1) << ',' << format_double(r.norm2) << ','
        << format_double(r.norm_inf) << ',' << format_double(r.spectral_radius) << ','
        << format_double(r.seconds) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Cost benchmark: per-stage wall time of the fit as N grows.

struct BenchConfig {
  double rho = 0.52;
  double kappa = 0.52;
  std::vector<std::int64_t> s_grid;
  double upsilon = 1.27;
  int p = 8;
  VarianceComponents theta{1.0, 1.0, 1.0};
  Variant variant = Variant::m3;
  double tol = 1e-8;
  std::uint64_t seed = 1;
  double min_time = 0.05;  // repeat timed sections until this many seconds
};

struct BenchRow {
  std::int64_t s = 0;
  std::int64_t n = 0;
  int r = 0;
  int c = 0;
  std::uint64_t seed = 0;
  double seconds_ols = 0.0;
  double seconds_moments = 0.0;
  double seconds_per_iteration = 0.0;  // one backfit sweep over Y and all X columns
  double seconds_fit = 0.0;            // full coefficient + covariance + blup pass
  int iterations_coef = 0;
  int iterations_blup = 0;
};

inline std::vector<BenchRow> cost_benchmark(const BenchConfig& cfg) {
  if (cfg.s_grid.empty()) throw ConfigError("benchmark: empty S grid");
  std::vector<BenchRow> rows;
  std::uint64_t cell = 0;
  for (const auto s : cfg.s_grid) {
    SamplingModel model;
    model.s = s;
    model.rho = cfg.rho;
    model.kappa = cfg.kappa;
    model.upsilon = cfg.upsilon;
    model.seed = derive_seed(cfg.seed, cell++);
    const Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.p);
    const ObservationTable tab = simulate_dataset(model, cfg.p, cfg.theta, beta);

    BenchRow row;
    row.s = s;
    row.n = tab.n();
    row.r = tab.r();
    row.c = tab.c();
    row.seed = model.seed;

    // repeat each timed section until min_time to stabilize the clock
    auto timed = [&](auto&& fn) {
      int reps = 0;
      const auto t0 = std::chrono::steady_clock::now();
      double elapsed = 0.0;
      do {
        fn();
        ++reps;
        elapsed = detail::seconds_since(t0);
      } while (elapsed < cfg.min_time);
      return elapsed / reps;
    };

    OlsFit ols;
    row.seconds_ols = timed([&] { ols = fit_ols(tab); });
    MomentEstimate me;
    row.seconds_moments = timed([&] { me = estimate(tab, ols.beta); });

    BackfitConfig bcfg;
    bcfg.variant = cfg.variant;
    bcfg.tol = cfg.tol;
    bcfg.lambda_a = cfg.theta.lambda_a();
    bcfg.lambda_b = cfg.theta.lambda_b();
    Eigen::MatrixXd responses(tab.n(), cfg.p + 1);
    responses.leftCols(cfg.p) = tab.x();
    responses.col(cfg.p) = tab.y();
    BackfitEngine engine(tab, responses, bcfg);
    engine.sweep();  // warm the caches before timing
    row.seconds_per_iteration = timed([&] { engine.sweep(); });

    const auto t0 = std::chrono::steady_clock::now();
    const GlsFit fit = fit_gls(tab, cfg.theta, bcfg, /*want_blups=*/true);
    row.seconds_fit = detail::seconds_since(t0);
    row.iterations_coef = fit.iterations_coef;
    row.iterations_blup = fit.iterations_blup;
    rows.push_back(row);
  }
  return rows;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "S,N,R,C,seed,seconds_ols,seconds_moments,seconds_per_iteration,seconds_fit,"
         "iterations_coef,iterations_blup\n";
  for (const auto& r : rows) {
    out << r.s << ',' << r.n << ',' << r.r << ',' << r.c << ',' << r.seed << ','
        << format_double(r.seconds_ols) << ',' << format_double(r.seconds_moments) << ','
        << format_double(r.seconds_per_iteration) << ',' << format_double(r.seconds_fit) << ','
        << r.iterations_coef << ',' << r.iterations_blup << '\n';
  }
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw ConfigError("loglog_slope: need >= 2 points");
  const auto n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double lx = std::log(xs[k]);
    const double ly = std::log(ys[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// All-variant norm table for one design (rows m0..m3).

struct NormTable {
  std::vector<UpdateMatrix> variants;  // m0, m1, m2, m3
  double lambda_a = 0.0;
  double lambda_b = 0.0;
};

inline NormTable norms_from_table(const ObservationTable& tab, double lambda_a, double lambda_b,
                                  int c_cap = 20000) {
  NormTable out;
  out.lambda_a = lambda_a;
  out.lambda_b = lambda_b;
  for (const Variant v : {Variant::m0, Variant::m1, Variant::m2, Variant::m3})
    out.variants.push_back(build_update_matrix(tab, lambda_a, lambda_b, v, c_cap));
  return out;
}

inline std::string format_norm_table(const NormTable& nt) {
  char buf[160];
  std::string s = "variant      norm1      norm2   spectral_radius\n";
  for (const auto& um : nt.variants) {
    std::snprintf(buf, sizeof(buf), "%-7s %10.5f %10.5f %17.5f%s\n", variant_name(um.variant),
                  um.norm1, um.norm2, um.spectral_radius,
                  um.spectral_converged ? "" : "  (unconverged estimate)");
    s += buf;
  }
  return s;
}

}  // namespace crefit

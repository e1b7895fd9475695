// Acceptance gate: nine numbered end-to-end checks over the library and the
// command-line tool.  Each check prints exactly one line,
//
//   AC<k> PASS — <measured detail>
//   AC<k> FAIL — <measured detail>
//
// and the process exits with the number of failed checks.  Every tolerance
// and runtime budget is stated inline next to the check it guards.
//
// Usage: acceptance [--cli <path-to-crefit-binary>]
// The CLI path is required only by AC9 (tool parity); the other checks run
// the library in process.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crefit/crefit.hpp"
#include "support.hpp"

namespace {

using namespace crefit;

struct Outcome {
  bool ok = false;
  std::string detail;
};

double now_minus(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return std::string(buf);
}

// Random instance in the small-oracle regime: R <= 12, C <= 10, N <= 80,
// p <= 4, variance components in [0.1, 4].
struct SmallInstance {
  ObservationTable table;
  VarianceComponents theta;
  int p;
};

SmallInstance draw_instance(std::uint64_t seed) {
  Rng rng(seed);
  const int r = 3 + static_cast<int>(rng.below(10));  // 3..12
  const int c = 3 + static_cast<int>(rng.below(8));   // 3..10
  const int p = 1 + static_cast<int>(rng.below(4));   // 1..4
  const int room = 80 - (r + c);                      // N <= r + c + extra <= 80
  const int extra = static_cast<int>(rng.below(static_cast<std::uint64_t>(room + 1)));
  VarianceComponents vc;
  vc.sigma2_a = 0.1 + 3.9 * rng.uniform01();
  vc.sigma2_b = 0.1 + 3.9 * rng.uniform01();
  vc.sigma2_e = 0.1 + 3.9 * rng.uniform01();
  SmallInstance inst{testsup::random_table(seed * 13 + 7, r, c, extra, p,
                                           std::sqrt(vc.sigma2_a), std::sqrt(vc.sigma2_b),
                                           std::sqrt(vc.sigma2_e)),
                     vc, p};
  return inst;
}

// AC1 — oracle equivalence.  On 50 random instances the backfitted
// coefficients, sandwich covariance, and predicted level effects must match
// the dense textbook computations within 1e-6 relative.  Budget: 10 s.
Outcome ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_beta = 0.0, worst_cov = 0.0, worst_blup = 0.0;
  for (int i = 0; i < 50; ++i) {
    const SmallInstance inst = draw_instance(1000 + i);
    BackfitConfig cfg;
    cfg.variant = (i % 2 == 0) ? Variant::m3 : Variant::m2;
    cfg.tol = 1e-26;  // squared relative change: run the fixed point down to roundoff
    cfg.max_iter = 50000;
    const GlsFit fit = fit_gls(inst.table, inst.theta, cfg, /*want_blups=*/true);
    const dense::Problem pr = dense::Problem::build(inst.table, inst.theta);
    const dense::GlsOracle oracle = dense::gls(pr);
    const dense::PenalizedFit pen = dense::penalized(pr);
    worst_beta = std::max(worst_beta, testsup::rel_err(Eigen::MatrixXd(fit.beta),
                                                       Eigen::MatrixXd(oracle.beta)));
    worst_cov = std::max(worst_cov, testsup::rel_err(fit.cov, oracle.cov));
    worst_blup = std::max(worst_blup, testsup::rel_err(Eigen::MatrixXd(fit.blup_a),
                                                       Eigen::MatrixXd(pen.a)));
    worst_blup = std::max(worst_blup, testsup::rel_err(Eigen::MatrixXd(fit.blup_b),
                                                       Eigen::MatrixXd(pen.b)));
  }
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = worst_beta < 1e-6 && worst_cov < 1e-6 && worst_blup < 1e-6 && secs < 10.0;
  out.detail = fmt("50 instances: max rel err beta %.2e, cov %.2e, level effects %.2e "
                   "(gate 1e-6); %.2fs (budget 10s)",
                   worst_beta, worst_cov, worst_blup, secs);
  return out;
}

// AC2 — centered-operator optimality.  The weighted-centering closed form
// must reproduce the equality-constrained ridge solve to 1e-8 on 50 random
// instances, with the effects summing to zero within 1e-9.  Budget: 5 s.
Outcome ac2() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 50; ++i) {
    const SmallInstance inst = draw_instance(2000 + i);
    const ObservationTable& t = inst.table;
    const Factor f = (i % 2 == 0) ? Factor::row : Factor::col;
    const double lambda = (f == Factor::row) ? inst.theta.lambda_a() : inst.theta.lambda_b();
    Rng rng(3000 + i);
    Eigen::VectorXd resp(t.n());
    for (std::int64_t k = 0; k < t.n(); ++k) resp[k] = rng.normal();

    const ShrinkagePlan plan = ShrinkagePlan::make(f, lambda, Centering::weighted, t.counts());
    const Eigen::VectorXi& counts = (f == Factor::row) ? t.counts().n_row : t.counts().n_col;
    const Eigen::VectorXd effects =
        shrunken_effects(plan, partial_sums(t, f, resp), counts);

    const int levels = (f == Factor::row) ? t.r() : t.c();
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(t.n(), levels);
    const auto& idx = (f == Factor::row) ? t.row_level() : t.col_level();
    for (std::int64_t k = 0; k < t.n(); ++k) z(k, idx[k]) = 1.0;
    const Eigen::VectorXd oracle = dense::constrained_ridge(z, lambda, resp, true);

    worst = std::max(worst, testsup::rel_err(Eigen::MatrixXd(effects), Eigen::MatrixXd(oracle)));
    worst_sum = std::max(worst_sum, std::abs(effects.sum()));
  }
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = worst < 1e-8 && worst_sum < 1e-9 && secs < 5.0;
  out.detail = fmt("50 instances: max rel err vs constrained solve %.2e (gate 1e-8), "
                   "max |sum of effects| %.2e (gate 1e-9); %.2fs (budget 5s)",
                   worst, worst_sum, secs);
  return out;
}

// AC3 — covariance identity.  I - S_G must equal sigma2_e V^{-1} densely to
// 1e-8 max-abs on 20 instances.  Budget: 10 s.
Outcome ac3() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const SmallInstance inst = draw_instance(4000 + i);
    const dense::Problem pr = dense::Problem::build(inst.table, inst.theta);
    const std::int64_t n = inst.table.n();
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - dense::sg(pr);
    const Eigen::MatrixXd rhs =
        inst.theta.sigma2_e * pr.v.llt().solve(Eigen::MatrixXd::Identity(n, n));
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = worst < 1e-8 && secs < 10.0;
  out.detail = fmt("20 instances: max abs deviation of (I - S_G) from sigma2_e V^-1 is %.2e "
                   "(gate 1e-8); %.2fs (budget 10s)",
                   worst, secs);
  return out;
}

// AC4 — moment-system exactness.  The complete 2x2 example with
// U = (1, 4, 20) must solve to (2, 0.5, 0) exactly before flooring, and the
// solved components must reproduce the moment equations to 1e-12 relative on
// random residuals.  Budget: 1 s.
Outcome ac4() {
  const auto t0 = std::chrono::steady_clock::now();
  UStatistics u;
  u.u_a = 1.0;
  u.u_b = 4.0;
  u.u_e = 20.0;
  u.sum_nrow_sq = 8.0;  // complete 2x2: both row counts 2
  u.sum_ncol_sq = 8.0;
  const MomentEstimate hand = solve_moments(u, 4, 2, 2);
  const bool hand_exact = hand.raw[0] == 2.0 && hand.raw[1] == 0.5 && hand.raw[2] == 0.0;

  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const SmallInstance inst = draw_instance(4400 + i);
    const ObservationTable& t = inst.table;
    Rng rng(4500 + i);
    Eigen::VectorXd resid(t.n());
    for (std::int64_t k = 0; k < t.n(); ++k) resid[k] = rng.normal();
    const UStatistics us = u_statistics(t, resid);
    const MomentEstimate est = solve_moments(us, t.n(), t.r(), t.c());
    const double dn = static_cast<double>(t.n());
    Eigen::Matrix3d m;
    m << 0.0, dn - t.r(), dn - t.r(),
         dn - t.c(), 0.0, dn - t.c(),
         dn * dn - us.sum_nrow_sq, dn * dn - us.sum_ncol_sq, dn * dn - dn;
    const Eigen::Vector3d rhs(us.u_a, us.u_b, us.u_e);
    const double scale = std::max(rhs.cwiseAbs().maxCoeff(), 1.0);
    worst = std::max(worst, (m * est.raw - rhs).cwiseAbs().maxCoeff() / scale);
  }
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = hand_exact && worst < 1e-12 && secs < 1.0;
  out.detail = fmt("2x2 example solves to (2, 0.5, 0) %s; max back-substitution residual "
                   "%.2e (gate 1e-12); %.2fs (budget 1s)",
                   hand_exact ? "exactly" : "INEXACTLY", worst, secs);
  return out;
}

// AC5 — contraction in the friendly regime.  At upsilon 1.27,
// (rho, kappa) = (4/7, 4/7), S = 2^13, no shrinkage: the one-norm of the
// weighted-centering update matrix stays below 1 in at least 18 of 20 seeds
// and below the closed-form bound upsilon^2 - upsilon^-2 + 0.1 in at least
// 18 of 20.  Budget: 5 min.
Outcome ac5() {
  const auto t0 = std::chrono::steady_clock::now();
  NormExperimentConfig cfg;
  cfg.points = {{4.0 / 7.0, 4.0 / 7.0}};
  cfg.s_grid = {8192};
  cfg.reps = 20;
  cfg.upsilon = 1.27;
  cfg.variant = Variant::m2;
  cfg.lambda_a = 0.0;
  cfg.lambda_b = 0.0;
  cfg.seed = 5100;
  const std::vector<NormRow> rows = norm_scaling_experiment(cfg);
  const double bound = theoretical_bound(1.27) + 0.1;
  int below_one = 0, below_bound = 0;
  double max_norm1 = 0.0;
  for (const NormRow& r : rows) {
    if (r.norm1 < 1.0) ++below_one;
    if (r.norm1 <= bound) ++below_bound;
    max_norm1 = std::max(max_norm1, r.norm1);
  }
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = below_one >= 18 && below_bound >= 18 && secs < 300.0;
  out.detail = fmt("norm1 < 1 in %d/20 seeds (need 18), <= bound %.4f in %d/20 (need 18), "
                   "max norm1 %.4f; %.1fs (budget 300s)",
                   below_one, bound, below_bound, max_norm1, secs);
  return out;
}

// AC6 — the mixed regime.  At (0.7, 0.7), S = 2^13 the same update matrix
// must show a one-norm above 1 while its two-norm stays below 1 in at least
// 15 of 20 seeds.  Budget: 5 min.
Outcome ac6() {
  const auto t0 = std::chrono::steady_clock::now();
  NormExperimentConfig cfg;
  cfg.points = {{0.7, 0.7}};
  cfg.s_grid = {8192};
  cfg.reps = 20;
  cfg.upsilon = 1.27;
  cfg.variant = Variant::m2;
  cfg.lambda_a = 0.0;
  cfg.lambda_b = 0.0;
  cfg.seed = 6100;
  const std::vector<NormRow> rows = norm_scaling_experiment(cfg);
  int split = 0;
  double min_norm1 = 1e300, max_norm2 = 0.0;
  for (const NormRow& r : rows) {
    if (r.norm1 > 1.0 && r.norm2 < 1.0) ++split;
    min_norm1 = std::min(min_norm1, r.norm1);
    max_norm2 = std::max(max_norm2, r.norm2);
  }
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = split >= 15 && secs < 300.0;
  out.detail = fmt("norm1 > 1 and norm2 < 1 in %d/20 seeds (need 15); min norm1 %.4f, "
                   "max norm2 %.4f; %.1fs (budget 300s)",
                   split, min_norm1, max_norm2, secs);
  return out;
}

// AC7 — linear cost.  Per-sweep wall time against N over S = 2^14..2^20 at
// (0.52, 0.52) must fit a log-log slope of 1.0 +/- 0.15, and the iteration
// count to tolerance 1e-8 must stay at or below 8 everywhere.
// Budget: 10 min.
Outcome ac7() {
  const auto t0 = std::chrono::steady_clock::now();
  BenchConfig cfg;
  cfg.s_grid = {16384, 65536, 262144, 1048576};
  cfg.seed = 7100;
  cfg.tol = 1e-8;
  const std::vector<BenchRow> rows = cost_benchmark(cfg);
  std::vector<double> ns, secs_iter;
  int max_iters = 0;
  std::int64_t n_lo = rows.front().n, n_hi = rows.front().n;
  for (const BenchRow& r : rows) {
    ns.push_back(static_cast<double>(r.n));
    secs_iter.push_back(r.seconds_per_iteration);
    max_iters = std::max({max_iters, r.iterations_coef, r.iterations_blup});
    n_lo = std::min(n_lo, r.n);
    n_hi = std::max(n_hi, r.n);
  }
  const double slope = loglog_slope(ns, secs_iter);
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = std::abs(slope - 1.0) <= 0.15 && max_iters <= 8 && secs < 600.0;
  out.detail = fmt("per-sweep time vs N (N = %lld..%lld): log-log slope %.3f "
                   "(gate 1.0 +/- 0.15), max iterations %d (gate 8); %.1fs (budget 600s)",
                   static_cast<long long>(n_lo), static_cast<long long>(n_hi), slope,
                   max_iters, secs);
  return out;
}

// AC8 — calibration under the null.  Simulating S = 2^14 at (0.52, 0.52)
// with unit variance components, 8 coefficients all zero: the full pipeline
// (least squares start, moment estimate, backfitted refit with sandwich
// errors) must keep |beta_k| < 3 SE_k in at least 90% of the 160
// (seed, coefficient) pairs over 20 seeds.  Budget: 10 min.
Outcome ac8() {
  const auto t0 = std::chrono::steady_clock::now();
  const int seeds = 20, p = 8;
  int good = 0;
  VarianceComponents truth;
  truth.sigma2_a = 1.0;
  truth.sigma2_b = 1.0;
  truth.sigma2_e = 1.0;
  for (int i = 0; i < seeds; ++i) {
    SamplingModel model;
    model.s = 16384;
    model.rho = 0.52;
    model.kappa = 0.52;
    model.upsilon = 1.27;
    model.seed = derive_seed(8100, static_cast<std::uint64_t>(i));
    const ObservationTable tab =
        simulate_dataset(model, p, truth, Eigen::VectorXd::Zero(p));
    const OlsFit ols = fit_ols(tab);
    const MomentEstimate me = estimate(tab, ols.beta);
    BackfitConfig cfg;
    cfg.variant = Variant::m3;
    cfg.tol = 1e-8;
    const GlsFit fit = fit_gls(tab, me.components, cfg);
    for (int k = 0; k < p; ++k)
      if (std::abs(fit.beta[k]) < 3.0 * fit.se[k]) ++good;
  }
  const int total = seeds * p;
  const double secs = now_minus(t0);
  Outcome out;
  out.ok = good * 10 >= total * 9 && secs < 600.0;
  out.detail = fmt("|beta_k| < 3 SE_k in %d/%d (seed, coefficient) pairs (need %d); "
                   "%.1fs (budget 600s)",
                   good, total, (total * 9 + 9) / 10, secs);
  return out;
}

// AC9 — tool parity.  The CLI's `norms --from-data` must emit the
// four-variant norm table (one-norm, two-norm, spectral radius) and every
// variant must satisfy spectral radius <= min(norm1, norminf) + 1e-8.
Outcome ac9(const std::string& cli) {
  Outcome out;
  if (cli.empty()) {
    out.detail = "no --cli path given; cannot exercise the command-line tool";
    return out;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::string data = "acceptance_norms_input.csv";
  const std::string table_txt = "acceptance_norms_table.txt";
  const std::string table_csv = "acceptance_norms_table.csv";
  std::string cmd = "\"" + cli + "\" simulate --s 1024 --rho 0.55 --kappa 0.55 --p 2 "
                    "--seed 99 --output " + data + " 2> /dev/null";
  if (std::system(cmd.c_str()) != 0) {
    out.detail = "simulate subcommand failed";
    return out;
  }
  cmd = "\"" + cli + "\" norms --from-data " + data + " --output " + table_csv + " > " +
        table_txt + " 2> /dev/null";
  if (std::system(cmd.c_str()) != 0) {
    out.detail = "norms --from-data subcommand failed";
    return out;
  }

  // the human-readable table: header plus one row per variant
  std::ifstream txt(table_txt);
  std::stringstream buffer;
  buffer << txt.rdbuf();
  const std::string text = buffer.str();
  bool layout = text.find("variant") != std::string::npos &&
                text.find("norm1") != std::string::npos &&
                text.find("norm2") != std::string::npos &&
                text.find("spectral_radius") != std::string::npos;
  for (const char* v : {"m0", "m1", "m2", "m3"})
    layout = layout && text.find(std::string("\n") + v) != std::string::npos;

  // the machine-readable table: the norm inequality for every variant
  std::ifstream csv(table_csv);
  std::string line;
  std::getline(csv, line);  // header
  int rows = 0;
  double worst_gap = -1e300;
  bool parsed = true;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 5) {
      parsed = false;
      break;
    }
    const double norm1 = std::stod(fields[1]);
    const double norminf = std::stod(fields[3]);
    const double sr = std::stod(fields[4]);
    worst_gap = std::max(worst_gap, sr - std::min(norm1, norminf));
    ++rows;
  }
  const double secs = now_minus(t0);
  out.ok = layout && parsed && rows == 4 && worst_gap <= 1e-8 && secs < 60.0;
  out.detail = fmt("table layout %s, %d variant rows, max (radius - min(norm1, norminf)) "
                   "= %.2e (gate 1e-8); %.1fs",
                   layout ? "present" : "MISSING", rows, worst_gap, secs);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  for (int i = 1; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

  int failures = 0;
  const auto report = [&](int num, const Outcome& o) {
    std::printf("AC%d %s — %s\n", num, o.ok ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.ok) ++failures;
  };

  const auto guard = [](auto&& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, guard(ac1));
  report(2, guard(ac2));
  report(3, guard(ac3));
  report(4, guard(ac4));
  report(5, guard(ac5));
  report(6, guard(ac6));
  report(7, guard(ac7));
  report(8, guard(ac8));
  report(9, guard([&] { return ac9(cli); }));

  std::printf("acceptance: %d/9 passed\n", 9 - failures);
  return failures;
}

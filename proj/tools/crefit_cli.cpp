// Command-line front end: fit, diagnose, simulate, norms, bench.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "crefit/crefit.hpp"
#include "crefit/report.hpp"

namespace {

using namespace crefit;

Variant parse_variant(const std::string& s) {
  if (s == "m0") return Variant::m0;
  if (s == "m1") return Variant::m1;
  if (s == "m2") return Variant::m2;
  if (s == "m3") return Variant::m3;
  throw ConfigError("unknown variant '" + s + "' (expected m0, m1, m2 or m3)");
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

// "1024:16384" doubles from lo to hi inclusive; "a,b,c" is an explicit list.
std::vector<std::int64_t> parse_s_grid(const std::string& s) {
  std::vector<std::int64_t> out;
  const auto colon = s.find(':');
  if (colon != std::string::npos) {
    const std::int64_t lo = std::stoll(s.substr(0, colon));
    const std::int64_t hi = std::stoll(s.substr(colon + 1));
    if (lo < 2 || hi < lo) throw ConfigError("bad S range '" + s + "'");
    for (std::int64_t v = lo; v <= hi; v *= 2) out.push_back(v);
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  if (out.empty()) throw ConfigError("empty S grid");
  return out;
}

std::vector<std::pair<double, double>> parse_points(const std::string& s) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(s);
  std::string pair;
  while (std::getline(ss, pair, ';')) {
    const auto vals = parse_double_list(pair, "rho,kappa point");
    if (vals.size() != 2) throw ConfigError("each point needs exactly rho,kappa: '" + pair + "'");
    out.emplace_back(vals[0], vals[1]);
  }
  if (out.empty()) throw ConfigError("empty point list");
  return out;
}

VarianceComponents parse_theta(const std::string& s) {
  const auto vals = parse_double_list(s, "theta");
  if (vals.size() != 3) throw ConfigError("--theta needs sigma2_a,sigma2_b,sigma2_e");
  VarianceComponents vc;
  vc.sigma2_a = vals[0];
  vc.sigma2_b = vals[1];
  vc.sigma2_e = vals[2];
  if (vc.sigma2_a < 0 || vc.sigma2_b < 0 || vc.sigma2_e <= 0)
    throw ConfigError("--theta components must be >= 0 with sigma2_e > 0");
  return vc;
}

ObservationTable load_table(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  return ingest_csv(in, schema);
}

void write_text(const std::string& path, const std::string& content) {
  if (path == "-" || path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << content;
}

struct FitFlags {
  std::string input, row_col = "row", col_col = "col", response = "y";
  std::string covariates;  // comma list; empty = all remaining columns
  std::string variant = "m3";
  double tol = 1e-8;
  int max_iter = 1000;
  int threads = 0;
  bool blups = false;
  bool refine = false;
  bool verify = false;
  std::string output;       // json path; empty/- = stdout
  std::string table_path;   // optional text table
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--input", f.input, "input CSV file")->required();
  cmd->add_option("--row-col", f.row_col, "name of the row-factor id column");
  cmd->add_option("--col-col", f.col_col, "name of the column-factor id column");
  cmd->add_option("--response", f.response, "name of the response column");
  cmd->add_option("--covariates", f.covariates,
                  "comma-separated covariate columns (default: all remaining)");
  cmd->add_option("--variant", f.variant, "update variant: m0|m1|m2|m3 (default m3)");
  cmd->add_option("--tol", f.tol, "relative-change convergence tolerance");
  cmd->add_option("--max-iter", f.max_iter, "iteration cap");
  cmd->add_option("--threads", f.threads, "worker threads (0 = CREFIT_THREADS or hardware)");
}

struct FitOutput {
  OlsFit ols;
  GlsFit gls;
  std::optional<Diagnostics> diag;
};

// Full pipeline: OLS start, moment estimate on its residuals, backfitted GLS,
// optional refinement pass from GLS residuals, diagnostics where defined.
FitOutput run_pipeline(const ObservationTable& tab, const FitFlags& f) {
  if (!(f.tol > 0.0 && f.tol < 1.0)) throw ConfigError("--tol must be in (0, 1)");
  BackfitConfig cfg;
  cfg.variant = parse_variant(f.variant);
  cfg.tol = f.tol;
  cfg.max_iter = f.max_iter;
  cfg.threads = f.threads;
  if (f.verify) {
    // verification compares fixed points, so push truncation error below the gate
    cfg.tol = std::min(cfg.tol, 1e-12);
    cfg.max_iter = std::max(cfg.max_iter, 10000);
  }
  const bool want_cov = cfg.variant != Variant::m1;

  FitOutput out;
  out.ols = fit_ols(tab);
  MomentEstimate me = estimate(tab, out.ols.beta);
  out.gls = fit_gls(tab, me.components, cfg, f.blups, want_cov);
  if (f.refine) {
    me = estimate(tab, out.gls.beta);
    out.gls = fit_gls(tab, me.components, cfg, f.blups, want_cov);
  }
  if (want_cov) {
    ols_model_covariance(tab, out.ols, out.gls.theta);
    out.diag = diagnose(out.ols, out.gls);
  }
  return out;
}

double rel_diff(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-30);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

int cmd_fit(const FitFlags& f, bool diagnostics_only) {
  CsvSchema schema;
  schema.row_col = f.row_col;
  schema.col_col = f.col_col;
  schema.response = f.response;
  if (!f.covariates.empty()) {
    std::stringstream ss(f.covariates);
    std::string item;
    while (std::getline(ss, item, ',')) schema.covariates.push_back(item);
  }
  const ObservationTable tab = load_table(f.input, schema);
  const FitOutput res = run_pipeline(tab, f);

  int exit_code = 0;
  OrderedJson j;
  if (diagnostics_only) {
    if (!res.diag) throw ConfigError("diagnostics unavailable for variant m1");
    j["schema_version"] = 1;
    j["naivete"] = crefit::detail::json_vector(res.diag->naivete);
    j["inefficiency"] = crefit::detail::json_vector(res.diag->inefficiency);
    j["max_naivete"] = res.diag->max_naivete;
    j["max_inefficiency"] = res.diag->max_inefficiency;
  } else {
    j = fit_report(tab, res.ols, res.gls, res.diag ? &*res.diag : nullptr);
  }

  if (f.verify) {
    const dense::Problem pr = dense::Problem::build(tab, res.gls.theta);
    const dense::GlsOracle oracle = dense::gls(pr);
    OrderedJson v;
    const double beta_err = rel_diff(res.gls.beta, oracle.beta);
    v["beta_rel_err"] = beta_err;
    double worst = beta_err;
    if (res.gls.has_cov) {
      const double cov_err = rel_diff(res.gls.cov, oracle.cov);
      v["cov_rel_err"] = cov_err;
      worst = std::max(worst, cov_err);
    }
    if (res.gls.has_blups) {
      const dense::PenalizedFit pen = dense::penalized(pr);
      const double a_err = rel_diff(res.gls.blup_a, pen.a);
      const double b_err = rel_diff(res.gls.blup_b, pen.b);
      v["blup_a_rel_err"] = a_err;
      v["blup_b_rel_err"] = b_err;
      worst = std::max(worst, std::max(a_err, b_err));
    }
    v["tolerance"] = 1e-6;
    v["ok"] = worst < 1e-6;
    j["verify"] = v;
    if (worst >= 1e-6) exit_code = 5;
  }

  write_text(f.output, j.dump(2) + "\n");
  if (!f.table_path.empty() && !diagnostics_only)
    write_text(f.table_path, regression_table(tab, res.ols, res.gls));
  return exit_code;
}

int cmd_simulate(std::int64_t s, double rho, double kappa, double upsilon, int p,
                 const std::string& theta_str, const std::string& beta_str, std::uint64_t seed,
                 bool fixed_prob, const std::string& output) {
  SamplingModel model;
  model.s = s;
  model.rho = rho;
  model.kappa = kappa;
  model.upsilon = upsilon;
  model.seed = seed;
  model.fixed_prob = fixed_prob;
  const VarianceComponents theta = parse_theta(theta_str);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (!beta_str.empty()) {
    const auto vals = parse_double_list(beta_str, "beta");
    if (static_cast<int>(vals.size()) != p) throw ConfigError("--beta needs exactly p entries");
    for (int k = 0; k < p; ++k) beta[k] = vals[k];
  }
  const ObservationTable tab = simulate_dataset(model, p, theta, beta);

  std::ostringstream out;
  out << "row,col,y";
  for (int q = 1; q < p; ++q) out << ",x" << q;
  out << "\n";
  for (std::int64_t k = 0; k < tab.n(); ++k) {
    out << tab.row_level()[k] << ',' << tab.col_level()[k] << ',' << format_double(tab.y()[k]);
    for (int q = 1; q < p; ++q) out << ',' << format_double(tab.x()(k, q));
    out << "\n";
  }
  write_text(output, out.str());
  std::cerr << "simulated N=" << tab.n() << " R=" << tab.r() << " C=" << tab.c() << "\n";
  return 0;
}

int cmd_norms_from_data(const FitFlags& f, double lambda_a, double lambda_b, bool lambdas_given,
                        int c_cap, const std::string& csv_out) {
  CsvSchema schema;
  schema.row_col = f.row_col;
  schema.col_col = f.col_col;
  schema.response = f.response;
  const ObservationTable tab = load_table(f.input, schema);
  if (!lambdas_given) {
    // default shrinkage from the data's own variance components
    const OlsFit ols = fit_ols(tab);
    const MomentEstimate me = estimate(tab, ols.beta);
    lambda_a = me.components.lambda_a();
    lambda_b = me.components.lambda_b();
  }
  const NormTable nt = norms_from_table(tab, lambda_a, lambda_b, c_cap);
  std::ostringstream head;
  head << "lambda_a=" << format_double(lambda_a) << " lambda_b=" << format_double(lambda_b)
       << " N=" << tab.n() << " R=" << tab.r() << " C=" << tab.c() << "\n";
  std::cout << head.str() << format_norm_table(nt);
  if (!csv_out.empty()) {
    std::ostringstream out;
    out << "variant,norm1,norm2,norminf,spectral_radius,norm2_converged,spectral_converged\n";
    for (const auto& um : nt.variants)
      out << variant_name(um.variant) << ',' << format_double(um.norm1) << ','
          << format_double(um.norm2) << ',' << format_double(um.norm_inf) << ','
          << format_double(um.spectral_radius) << ',' << (um.norm2_converged ? 1 : 0) << ','
          << (um.spectral_converged ? 1 : 0) << '\n';
    write_text(csv_out, out.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crefit: linear regression with two crossed random effects in O(N)"};
  app.require_subcommand(1);

  // fit / diagnose share flags
  FitFlags fit_flags, diag_flags;
  CLI::App* fit = app.add_subcommand("fit", "fit the model to a CSV dataset");
  add_fit_flags(fit, fit_flags);
  fit->add_flag("--blups", fit_flags.blups, "predict per-level effects");
  fit->add_flag("--refine", fit_flags.refine, "re-estimate variance components from GLS residuals");
  fit->add_flag("--verify", fit_flags.verify, "check against the dense oracle (small N only)");
  fit->add_option("--output", fit_flags.output, "JSON report path (default stdout)");
  fit->add_option("--table", fit_flags.table_path, "also write a coefficient table ('-' = stdout)");

  CLI::App* diag = app.add_subcommand("diagnose", "report naivete/inefficiency diagnostics only");
  add_fit_flags(diag, diag_flags);
  diag->add_option("--output", diag_flags.output, "JSON path (default stdout)");

  // simulate
  std::int64_t sim_s = 4096;
  double sim_rho = 0.57, sim_kappa = 0.57, sim_upsilon = 1.27;
  int sim_p = 8;
  std::string sim_theta = "1,1,1", sim_beta, sim_output;
  std::uint64_t sim_seed = 1;
  bool sim_fixed = false;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset CSV");
  sim->add_option("--s", sim_s, "target sample size index S");
  sim->add_option("--rho", sim_rho, "row exponent (R = ceil(S^rho))");
  sim->add_option("--kappa", sim_kappa, "column exponent (C = ceil(S^kappa))");
  sim->add_option("--upsilon", sim_upsilon, "cell-probability heterogeneity in [1, upsilon]");
  sim->add_option("--p", sim_p, "number of coefficients including intercept");
  sim->add_option("--theta", sim_theta, "sigma2_a,sigma2_b,sigma2_e");
  sim->add_option("--beta", sim_beta, "true coefficients (default all zero)");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_flag("--fixed-prob", sim_fixed, "constant cell probability S^(1-rho-kappa)");
  sim->add_option("--output", sim_output, "CSV path (default stdout)");

  // norms
  FitFlags norm_flags;
  std::string norm_points = "0.571,0.571", norm_sgrid = "256:8192", norm_variant = "m2";
  std::string norm_output;
  double norm_upsilon = 1.27, norm_la = 0.0, norm_lb = 0.0;
  int norm_reps = 5, norm_cap = 20000;
  std::uint64_t norm_seed = 1;
  bool norm_fixed = false;
  bool norm_grid = false;
  CLI::App* norms = app.add_subcommand("norms", "update-matrix norms: from data or over a grid");
  norms->add_option("--from-data", norm_flags.input, "dataset CSV: norm table for all variants");
  norms->add_flag("--grid", norm_grid, "sampling-model grid mode (default when no --from-data)");
  norms->add_option("--row-col", norm_flags.row_col, "row id column (with --from-data)");
  norms->add_option("--col-col", norm_flags.col_col, "column id column (with --from-data)");
  norms->add_option("--response", norm_flags.response, "response column (with --from-data)");
  auto* opt_la = norms->add_option("--lambda-a", norm_la, "row shrinkage (default: estimated)");
  auto* opt_lb = norms->add_option("--lambda-b", norm_lb, "column shrinkage (default: estimated)");
  norms->add_option("--points", norm_points, "grid mode: rho,kappa pairs 'r,k;r,k;...'");
  norms->add_option("--s-grid", norm_sgrid, "grid mode: 'lo:hi' (doubling) or comma list");
  norms->add_option("--reps", norm_reps, "grid mode: replicates per cell");
  norms->add_option("--upsilon", norm_upsilon, "grid mode: heterogeneity");
  norms->add_option("--variant", norm_variant, "grid mode: update variant");
  norms->add_option("--seed", norm_seed, "grid mode: master seed");
  norms->add_flag("--fixed-prob", norm_fixed, "grid mode: constant cell probability");
  norms->add_option("--c-cap", norm_cap, "refuse designs with more than this many columns");
  norms->add_option("--output", norm_output, "CSV output path (default stdout for grid mode)");

  // bench
  double bench_rho = 0.52, bench_kappa = 0.52, bench_tol = 1e-8;
  std::string bench_sgrid = "1024:16384", bench_theta = "1,1,1", bench_output;
  int bench_p = 8;
  std::uint64_t bench_seed = 1;
  CLI::App* bench = app.add_subcommand("bench", "cost scaling of the fit pipeline");
  bench->add_option("--rho", bench_rho, "row exponent");
  bench->add_option("--kappa", bench_kappa, "column exponent");
  bench->add_option("--s-grid", bench_sgrid, "'lo:hi' (doubling) or comma list");
  bench->add_option("--p", bench_p, "number of coefficients");
  bench->add_option("--theta", bench_theta, "sigma2_a,sigma2_b,sigma2_e");
  bench->add_option("--tol", bench_tol, "backfit tolerance");
  bench->add_option("--seed", bench_seed, "random seed");
  bench->add_option("--output", bench_output, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);

    if (fit->parsed()) return cmd_fit(fit_flags, /*diagnostics_only=*/false);
    if (diag->parsed()) return cmd_fit(diag_flags, /*diagnostics_only=*/true);
    if (sim->parsed())
      return cmd_simulate(sim_s, sim_rho, sim_kappa, sim_upsilon, sim_p, sim_theta, sim_beta,
                          sim_seed, sim_fixed, sim_output);
    if (norms->parsed()) {
      if (norm_grid && !norm_flags.input.empty())
        throw ConfigError("--grid and --from-data are mutually exclusive");
      if (!norm_flags.input.empty())
        return cmd_norms_from_data(norm_flags, norm_la, norm_lb,
                                   opt_la->count() > 0 || opt_lb->count() > 0, norm_cap,
                                   norm_output);
      NormExperimentConfig cfg;
      cfg.points = parse_points(norm_points);
      cfg.s_grid = parse_s_grid(norm_sgrid);
      cfg.upsilon = norm_upsilon;
      cfg.reps = norm_reps;
      cfg.variant = parse_variant(norm_variant);
      cfg.lambda_a = norm_la;
      cfg.lambda_b = norm_lb;
      cfg.seed = norm_seed;
      cfg.fixed_prob = norm_fixed;
      cfg.c_cap = norm_cap;
      const auto rows = norm_scaling_experiment(cfg);
      std::ostringstream out;
      write_norm_csv(out, rows);
      write_text(norm_output, out.str());
      return 0;
    }
    if (bench->parsed()) {
      BenchConfig cfg;
      cfg.rho = bench_rho;
      cfg.kappa = bench_kappa;
      cfg.s_grid = parse_s_grid(bench_sgrid);
      cfg.p = bench_p;
      cfg.theta = parse_theta(bench_theta);
      cfg.tol = bench_tol;
      cfg.seed = bench_seed;
      const auto rows = cost_benchmark(cfg);
      std::ostringstream out;
      write_bench_csv(out, rows);
      write_text(bench_output, out.str());
      if (rows.size() >= 2) {
        std::vector<double> ns, secs;
        for (const auto& r : rows) {
          ns.push_back(static_cast<double>(r.n));
          secs.push_back(r.seconds_per_iteration);
        }
        std::cerr << "log-log slope of seconds-per-iteration vs N: "
                  << loglog_slope(ns, secs) << "\n";
      }
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return static_cast<int>(crefit::ErrorCode::config);
  } catch (const crefit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(crefit::ErrorCode::config);
  }
  return 0;
}

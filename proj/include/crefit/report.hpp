#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "json.hpp"

#include "crefit/gls.hpp"
#include "crefit/moments.hpp"
#include "crefit/table.hpp"

namespace crefit {

using OrderedJson = nlohmann::ordered_json;

namespace detail {
inline OrderedJson json_number(double x) {
  // JSON has no inf/nan literals; encode them as strings for round-tripping
  if (std::isfinite(x)) return x;
  return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
}

template <typename Vec>
OrderedJson json_vector(const Vec& v) {
  OrderedJson arr = OrderedJson::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(json_number(v[k]));
  return arr;
}
}  // namespace detail

inline OrderedJson level_dictionary(const ObservationTable& t) {
  OrderedJson levels;
  OrderedJson rows = OrderedJson::array(), cols = OrderedJson::array();
  for (int i = 0; i < t.r(); ++i) rows.push_back(t.row_name(i));
  for (int j = 0; j < t.c(); ++j) cols.push_back(t.col_name(j));
  levels["rows"] = std::move(rows);
  levels["cols"] = std::move(cols);
  return levels;
}

// Fit report with a stable key order; identical inputs produce identical
// bytes.  Level effects are included only when the second backfit pass ran.
inline OrderedJson fit_report(const ObservationTable& t, const OlsFit& ols, const GlsFit& gls,
                              const Diagnostics* diag) {
  OrderedJson j;
  j["schema_version"] = 1;
  j["n"] = t.n();
  j["r"] = t.r();
  j["c"] = t.c();
  j["p"] = t.p();
  j["variant"] = variant_name(gls.variant);
  j["terms"] = t.covariate_names();

  OrderedJson theta;
  theta["sigma2_a"] = detail::json_number(gls.theta.sigma2_a);
  theta["sigma2_b"] = detail::json_number(gls.theta.sigma2_b);
  theta["sigma2_e"] = detail::json_number(gls.theta.sigma2_e);
  theta["lambda_a"] = detail::json_number(gls.theta.lambda_a());
  theta["lambda_b"] = detail::json_number(gls.theta.lambda_b());
  theta["clamped"] = gls.theta.clamped;
  theta["floored"] = gls.theta.floored;
  j["theta"] = std::move(theta);

  OrderedJson jols;
  jols["beta"] = detail::json_vector(ols.beta);
  jols["se_naive"] = detail::json_vector(Eigen::VectorXd(ols.cov_naive.diagonal().cwiseMax(0.0).cwiseSqrt()));
  if (ols.cov_model.size() > 0)
    jols["se_model"] = detail::json_vector(Eigen::VectorXd(ols.cov_model.diagonal().cwiseMax(0.0).cwiseSqrt()));
  j["ols"] = std::move(jols);

  OrderedJson jgls;
  jgls["beta"] = detail::json_vector(gls.beta);
  if (gls.has_cov) {
    jgls["se"] = detail::json_vector(gls.se);
  } else {
    jgls["note"] = "covariance not available for variant m1 (non-symmetric smoother)";
  }
  j["gls"] = std::move(jgls);

  OrderedJson iters;
  iters["coefficients"] = gls.iterations_coef;
  if (gls.iterations_blup >= 0) {
    iters["blups"] = gls.iterations_blup;
  } else {
    iters["blups"] = nullptr;
  }
  j["iterations"] = std::move(iters);

  if (diag != nullptr) {
    OrderedJson d;
    d["naivete"] = detail::json_vector(diag->naivete);
    d["inefficiency"] = detail::json_vector(diag->inefficiency);
    d["max_naivete"] = detail::json_number(diag->max_naivete);
    d["max_inefficiency"] = detail::json_number(diag->max_inefficiency);
    j["diagnostics"] = std::move(d);
  }

  if (gls.has_blups) {
    OrderedJson levels = level_dictionary(t);
    levels["a"] = detail::json_vector(gls.blup_a);
    levels["b"] = detail::json_vector(gls.blup_b);
    j["levels"] = std::move(levels);
  }
  return j;
}

// Plain-text coefficient table: OLS estimate, its naive and model-based
// standard errors, then the GLS estimate with its standard error.  Estimates
// larger than twice their standard error are starred.
inline std::string regression_table(const ObservationTable& t, const OlsFit& ols,
                                    const GlsFit& gls) {
  auto cell = [](double x) {
    char b[32];
    std::snprintf(b, sizeof(b), "%12.5g", x);
    return std::string(b);
  };
  auto starred = [&cell](double est, double se) {
    return cell(est) + ((se > 0.0 && std::abs(est) > 2.0 * se) ? "*" : " ");
  };
  const std::string blank(12, ' ');
  std::size_t width = 4;
  for (const auto& name : t.covariate_names()) width = std::max(width, name.size());
  auto pad = [&width](const std::string& s) {
    return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
  };

  const bool have_model = ols.cov_model.size() > 0;
  std::string s = pad("term") + " " + "    beta_ols " + "      se_ols " + "    se_model " +
                  "    beta_gls " + "      se_gls\n";
  for (int k = 0; k < t.p(); ++k) {
    const double se_naive = std::sqrt(std::max(0.0, ols.cov_naive(k, k)));
    const double se_model = have_model ? std::sqrt(std::max(0.0, ols.cov_model(k, k))) : 0.0;
    const double se_gls = gls.has_cov ? gls.se[k] : 0.0;
    s += pad(t.covariate_names()[k]) + " ";
    s += starred(ols.beta[k], have_model ? se_model : se_naive) + " ";
    s += cell(se_naive) + " ";
    s += (have_model ? cell(se_model) : blank) + " ";
    s += starred(gls.beta[k], se_gls) + " ";
    s += (gls.has_cov ? cell(se_gls) : blank) + "\n";
  }
  return s;
}

}  // namespace crefit

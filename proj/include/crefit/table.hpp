#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <istream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crefit/csv.hpp"
#include "crefit/errors.hpp"

namespace crefit {

enum class Factor { row, col };

// Occupancy counts per level: n_row[i] = #observations with row level i,
// n_col[j] likewise.  Every level is occupied by construction, so all
// entries are >= 1.
struct FactorCounts {
  Eigen::VectorXi n_row;
  Eigen::VectorXi n_col;
};

// One observation per record: (row level, column level, response, covariates).
// Levels are dense 0-based indices in first-appearance order; the original
// string identifiers are kept for reporting.  The covariate matrix always has
// an all-ones first column.  Cells are unique: each (i, j) appears at most once.
class ObservationTable {
 public:
  ObservationTable(std::vector<std::int32_t> rows, std::vector<std::int32_t> cols,
                   Eigen::VectorXd y, Eigen::MatrixXd x,
                   std::vector<std::string> row_labels = {},
                   std::vector<std::string> col_labels = {},
                   std::vector<std::string> covariate_names = {})
      : row_(std::move(rows)),
        col_(std::move(cols)),
        y_(std::move(y)),
        x_(std::move(x)),
        row_labels_(std::move(row_labels)),
        col_labels_(std::move(col_labels)),
        covariate_names_(std::move(covariate_names)) {
    const std::int64_t n = static_cast<std::int64_t>(row_.size());
    if (n == 0) throw IntegrityError("table: no observations");
    if (static_cast<std::int64_t>(col_.size()) != n || y_.size() != n || x_.rows() != n)
      throw IntegrityError("table: row/col/response/covariate lengths disagree");
    if (x_.cols() < 1) throw IntegrityError("table: covariate matrix needs at least the intercept column");
    std::int32_t rmax = -1, cmax = -1;
    for (std::int64_t k = 0; k < n; ++k) {
      if (row_[k] < 0 || col_[k] < 0) throw IntegrityError("table: negative level index");
      rmax = std::max(rmax, row_[k]);
      cmax = std::max(cmax, col_[k]);
    }
    r_ = rmax + 1;
    c_ = cmax + 1;
    counts_.n_row = Eigen::VectorXi::Zero(r_);
    counts_.n_col = Eigen::VectorXi::Zero(c_);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(static_cast<std::size_t>(n) * 2);
    for (std::int64_t k = 0; k < n; ++k) {
      counts_.n_row[row_[k]] += 1;
      counts_.n_col[col_[k]] += 1;
      const std::uint64_t key =
          (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row_[k])) << 32) |
          static_cast<std::uint32_t>(col_[k]);
      if (!seen.insert(key).second)
        throw IntegrityError("table: duplicate cell (" + row_name(row_[k]) + ", " +
                             col_name(col_[k]) + ")");
    }
    for (int i = 0; i < r_; ++i)
      if (counts_.n_row[i] == 0) throw IntegrityError("table: row level " + std::to_string(i) + " is empty");
    for (int j = 0; j < c_; ++j)
      if (counts_.n_col[j] == 0) throw IntegrityError("table: column level " + std::to_string(j) + " is empty");
    if (covariate_names_.empty()) {
      covariate_names_.emplace_back("(intercept)");
      for (Eigen::Index k = 1; k < x_.cols(); ++k) covariate_names_.push_back("x" + std::to_string(k));
    }
  }

  std::int64_t n() const { return static_cast<std::int64_t>(row_.size()); }
  int r() const { return r_; }
  int c() const { return c_; }
  int p() const { return static_cast<int>(x_.cols()); }

  const std::vector<std::int32_t>& row_level() const { return row_; }
  const std::vector<std::int32_t>& col_level() const { return col_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const FactorCounts& counts() const { return counts_; }

  const std::vector<std::string>& row_labels() const { return row_labels_; }
  const std::vector<std::string>& col_labels() const { return col_labels_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  std::string row_name(int i) const {
    return i < static_cast<int>(row_labels_.size()) ? row_labels_[i] : std::to_string(i);
  }
  std::string col_name(int j) const {
    return j < static_cast<int>(col_labels_.size()) ? col_labels_[j] : std::to_string(j);
  }

 private:
  std::vector<std::int32_t> row_;
  std::vector<std::int32_t> col_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  std::vector<std::string> row_labels_;
  std::vector<std::string> col_labels_;
  std::vector<std::string> covariate_names_;
  FactorCounts counts_;
  int r_ = 0;
  int c_ = 0;
};

inline const FactorCounts& counts(const ObservationTable& t) { return t.counts(); }

// Column selection for ingest.  Unlisted numeric columns become covariates
// when `covariates` is empty.
struct CsvSchema {
  std::string row_col;
  std::string col_col;
  std::string response;
  std::vector<std::string> covariates;  // empty = all remaining columns
};

inline ObservationTable ingest_csv(std::istream& in, const CsvSchema& schema) {
  CsvReader reader(in);
  const auto& header = reader.header();
  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return static_cast<int>(k);
    return -1;
  };
  const int ri = find_col(schema.row_col);
  const int ci = find_col(schema.col_col);
  const int yi = find_col(schema.response);
  if (ri < 0) throw SchemaError("csv: missing row identifier column '" + schema.row_col + "'");
  if (ci < 0) throw SchemaError("csv: missing column identifier column '" + schema.col_col + "'");
  if (yi < 0) throw SchemaError("csv: missing response column '" + schema.response + "'");

  std::vector<int> xcols;
  std::vector<std::string> names{"(intercept)"};
  if (schema.covariates.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k) {
      const int kk = static_cast<int>(k);
      if (kk != ri && kk != ci && kk != yi) {
        xcols.push_back(kk);
        names.push_back(header[k]);
      }
    }
  } else {
    for (const auto& name : schema.covariates) {
      const int kk = find_col(name);
      if (kk < 0) throw SchemaError("csv: missing covariate column '" + name + "'");
      if (kk == ri || kk == ci || kk == yi)
        throw SchemaError("csv: column '" + name + "' already used as identifier/response");
      xcols.push_back(kk);
      names.push_back(name);
    }
  }

  std::vector<std::int32_t> rows, cols;
  std::vector<double> yv;
  std::vector<double> xv;  // row-major staging
  std::vector<std::string> row_labels, col_labels;
  std::unordered_map<std::string, std::int32_t> row_ids, col_ids;
  auto intern = [](std::unordered_map<std::string, std::int32_t>& ids,
                   std::vector<std::string>& labels, const std::string& s) {
    const auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    const auto id = static_cast<std::int32_t>(labels.size());
    ids.emplace(s, id);
    labels.push_back(s);
    return id;
  };

  std::vector<std::string> fields;
  while (reader.next(fields)) {
    rows.push_back(intern(row_ids, row_labels, fields[ri]));
    cols.push_back(intern(col_ids, col_labels, fields[ci]));
    yv.push_back(parse_double(fields[yi], reader.line(), schema.response));
    for (const int kk : xcols) xv.push_back(parse_double(fields[kk], reader.line(), header[kk]));
  }
  if (rows.empty()) throw IntegrityError("csv: no data rows");

  const std::int64_t n = static_cast<std::int64_t>(rows.size());
  const int p = static_cast<int>(xcols.size()) + 1;
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(yv.data(), n);
  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  for (std::int64_t k = 0; k < n; ++k)
    for (int q = 1; q < p; ++q) x(k, q) = xv[static_cast<std::size_t>(k) * (p - 1) + (q - 1)];

  return ObservationTable(std::move(rows), std::move(cols), std::move(y), std::move(x),
                          std::move(row_labels), std::move(col_labels), std::move(names));
}

// CSR-style grouping of observation indices by level of one factor.
struct Groups {
  std::vector<std::int64_t> offsets;  // size L+1
  std::vector<std::int32_t> items;    // observation indices, grouped by level
};

inline Groups group_by(const ObservationTable& t, Factor f) {
  const auto& idx = (f == Factor::row) ? t.row_level() : t.col_level();
  const int levels = (f == Factor::row) ? t.r() : t.c();
  Groups g;
  g.offsets.assign(static_cast<std::size_t>(levels) + 1, 0);
  for (const auto v : idx) g.offsets[static_cast<std::size_t>(v) + 1] += 1;
  for (int l = 0; l < levels; ++l) g.offsets[l + 1] += g.offsets[l];
  g.items.resize(idx.size());
  std::vector<std::int64_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(idx.size()); ++k)
    g.items[cursor[idx[k]]++] = static_cast<std::int32_t>(k);
  return g;
}

enum class Axis { row_pairs, column_pairs };

// Co-observation counts: for column_pairs, entry (j, s) counts the rows in
// which column levels j and s are both observed (diagonal = occupancy).
// Cost is sum of squared level counts, so this is for desk-scale designs.
struct CoObservation {
  Axis axis;
  Eigen::SparseMatrix<std::int64_t> entries;
};

inline CoObservation co_observation(const ObservationTable& t, Axis axis) {
  const Factor group_factor = (axis == Axis::column_pairs) ? Factor::row : Factor::col;
  const auto& other_idx = (axis == Axis::column_pairs) ? t.col_level() : t.row_level();
  const int dim = (axis == Axis::column_pairs) ? t.c() : t.r();
  const Groups g = group_by(t, group_factor);

  std::vector<Eigen::Triplet<std::int64_t>> trips;
  std::size_t budget = 0;
  for (std::size_t l = 0; l + 1 < g.offsets.size(); ++l) {
    const auto len = static_cast<std::size_t>(g.offsets[l + 1] - g.offsets[l]);
    budget += len * len;
  }
  trips.reserve(budget);
  for (std::size_t l = 0; l + 1 < g.offsets.size(); ++l) {
    for (std::int64_t u = g.offsets[l]; u < g.offsets[l + 1]; ++u)
      for (std::int64_t v = g.offsets[l]; v < g.offsets[l + 1]; ++v)
        trips.emplace_back(other_idx[g.items[u]], other_idx[g.items[v]], 1);
  }
  CoObservation co;
  co.axis = axis;
  co.entries.resize(dim, dim);
  co.entries.setFromTriplets(trips.begin(), trips.end());
  return co;
}

}  // namespace crefit

#include <sstream>

#include "catch2/catch_amalgamated.hpp"
#include "crefit/crefit.hpp"
#include "support.hpp"

using namespace crefit;

namespace {

ObservationTable tiny_table() {
  // Z rows: (0,0), (0,1), (1,1) — the running 3-observation example
  std::vector<std::int32_t> rows{0, 0, 1};
  std::vector<std::int32_t> cols{0, 1, 1};
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  return ObservationTable(std::move(rows), std::move(cols), std::move(y), std::move(x));
}

}  // namespace

TEST_CASE("counts per level", "[data_model]") {
  const ObservationTable t = tiny_table();
  REQUIRE(t.n() == 3);
  REQUIRE(t.r() == 2);
  REQUIRE(t.c() == 2);
  const FactorCounts& fc = t.counts();
  REQUIRE(fc.n_row[0] == 2);
  REQUIRE(fc.n_row[1] == 1);
  REQUIRE(fc.n_col[0] == 1);
  REQUIRE(fc.n_col[1] == 2);
  REQUIRE(fc.n_row.sum() == t.n());
  REQUIRE(fc.n_col.sum() == t.n());
}

TEST_CASE("duplicate cell rejected with both labels", "[data_model]") {
  std::vector<std::int32_t> rows{0, 1, 0};
  std::vector<std::int32_t> cols{0, 1, 0};
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  try {
    ObservationTable t(std::move(rows), std::move(cols), std::move(y), std::move(x));
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    REQUIRE(e.code() == ErrorCode::parse);
    const std::string msg = e.what();
    REQUIRE(msg.find("0") != std::string::npos);
  }
}

TEST_CASE("empty level index rejected", "[data_model]") {
  // level 1 of the row factor never appears: indices {0, 2}
  std::vector<std::int32_t> rows{0, 2};
  std::vector<std::int32_t> cols{0, 1};
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 1);
  REQUIRE_THROWS_AS(ObservationTable(std::move(rows), std::move(cols), std::move(y), std::move(x)),
                    IntegrityError);
}

TEST_CASE("csv ingest maps labels and builds intercept", "[data_model]") {
  std::istringstream in(
      "user,item,y,x1\n"
      "u1,i1,1.5,0.25\n"
      "u1,i2,2.5,-1\n"
      "u2,i2,3.5,0\n");
  CsvSchema schema;
  schema.row_col = "user";
  schema.col_col = "item";
  schema.response = "y";
  const ObservationTable t = ingest_csv(in, schema);
  REQUIRE(t.n() == 3);
  REQUIRE(t.r() == 2);
  REQUIRE(t.c() == 2);
  REQUIRE(t.p() == 2);  // intercept + x1
  REQUIRE(t.x().col(0).isOnes());
  REQUIRE(t.x()(1, 1) == -1.0);
  REQUIRE(t.row_name(0) == "u1");
  REQUIRE(t.row_name(1) == "u2");
  REQUIRE(t.y()[2] == 3.5);
  REQUIRE(t.covariate_names().size() == 2);
  REQUIRE(t.covariate_names()[1] == "x1");
}

TEST_CASE("csv ingest errors carry position", "[data_model]") {
  CsvSchema schema;
  schema.row_col = "user";
  schema.col_col = "item";
  schema.response = "y";

  SECTION("missing required column") {
    std::istringstream in("user,thing,y\nu,i,1\n");
    REQUIRE_THROWS_AS(ingest_csv(in, schema), SchemaError);
  }
  SECTION("bad numeric field names the line") {
    std::istringstream in("user,item,y\nu,i,1\nv,j,oops\n");
    try {
      ingest_csv(in, schema);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("3") != std::string::npos);
    }
  }
  SECTION("ragged row names the line") {
    std::istringstream in("user,item,y\nu,i,1\nv,j\n");
    try {
      ingest_csv(in, schema);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("3") != std::string::npos);
    }
  }
  SECTION("empty table") {
    std::istringstream in("user,item,y\n");
    REQUIRE_THROWS_AS(ingest_csv(in, schema), IntegrityError);
  }
}

TEST_CASE("quoted csv fields", "[data_model]") {
  std::istringstream in(
      "user,item,y\n"
      "\"u,1\",i1,1\n"
      "\"u\"\"2\",i1,2\n");
  CsvSchema schema;
  schema.row_col = "user";
  schema.col_col = "item";
  schema.response = "y";
  const ObservationTable t = ingest_csv(in, schema);
  REQUIRE(t.r() == 2);
  REQUIRE(t.row_name(0) == "u,1");
  REQUIRE(t.row_name(1) == "u\"2");
}

TEST_CASE("group_by is a permutation consistent with counts", "[data_model]") {
  const ObservationTable t = testsup::random_table(11, 5, 4, 10);
  for (const Factor f : {Factor::row, Factor::col}) {
    const Groups g = group_by(t, f);
    const Eigen::VectorXi& counts = f == Factor::row ? t.counts().n_row : t.counts().n_col;
    REQUIRE(static_cast<std::int64_t>(g.items.size()) == t.n());
    std::vector<bool> seen(t.n(), false);
    for (int lev = 0; lev < counts.size(); ++lev) {
      REQUIRE(g.offsets[lev + 1] - g.offsets[lev] == counts[lev]);
      for (auto k = g.offsets[lev]; k < g.offsets[lev + 1]; ++k) {
        const auto obs = g.items[k];
        REQUIRE(!seen[obs]);
        seen[obs] = true;
        const int actual = f == Factor::row ? t.row_level()[obs] : t.col_level()[obs];
        REQUIRE(actual == lev);
      }
    }
  }
}

TEST_CASE("co-observation of the complete 2x2 design", "[data_model]") {
  std::vector<std::int32_t> rows{0, 0, 1, 1};
  std::vector<std::int32_t> cols{0, 1, 0, 1};
  Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1);
  const ObservationTable t(std::move(rows), std::move(cols), std::move(y), std::move(x));
  const CoObservation co = co_observation(t, Axis::column_pairs);
  const Eigen::MatrixXd dense = Eigen::MatrixXd(co.entries.cast<double>());
  REQUIRE(dense.rows() == 2);
  for (int j = 0; j < 2; ++j)
    for (int s = 0; s < 2; ++s) REQUIRE(dense(j, s) == 2.0);
}

TEST_CASE("co-observation of the triangular design", "[data_model]") {
  // Z = [[1,1],[0,1]]: row 0 observes cols {0,1}, row 1 observes col {1}
  const ObservationTable t = tiny_table();
  const Eigen::MatrixXd colpairs =
      Eigen::MatrixXd(co_observation(t, Axis::column_pairs).entries.cast<double>());
  Eigen::MatrixXd expect_cols(2, 2);
  expect_cols << 1, 1, 1, 2;
  REQUIRE(colpairs == expect_cols);
  const Eigen::MatrixXd rowpairs =
      Eigen::MatrixXd(co_observation(t, Axis::row_pairs).entries.cast<double>());
  Eigen::MatrixXd expect_rows(2, 2);
  expect_rows << 2, 1, 1, 1;
  REQUIRE(rowpairs == expect_rows);
}

TEST_CASE("co-observation matches dense Z products", "[data_model]") {
  const ObservationTable t = testsup::random_table(23, 6, 5, 12);
  Eigen::MatrixXd za = Eigen::MatrixXd::Zero(t.n(), t.r());
  Eigen::MatrixXd zb = Eigen::MatrixXd::Zero(t.n(), t.c());
  for (std::int64_t k = 0; k < t.n(); ++k) {
    za(k, t.row_level()[k]) = 1.0;
    zb(k, t.col_level()[k]) = 1.0;
  }
  const Eigen::MatrixXd ztz_cols = zb.transpose() * zb;  // diagonal N·j
  const Eigen::MatrixXd cross = zb.transpose() * za * za.transpose() * zb;
  (void)ztz_cols;
  const Eigen::MatrixXd got =
      Eigen::MatrixXd(co_observation(t, Axis::column_pairs).entries.cast<double>());
  REQUIRE(testsup::rel_err(got, cross) < 1e-12);
}

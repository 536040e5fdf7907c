#include "macromfg/engine.hpp"
#include "macromfg/io.hpp"

#include <catch_amalgamated.hpp>

#include <limits>
#include <sstream>

using Catch::Matchers::ContainsSubstring;

namespace {

const mfg::CsvSchema kSchema{"example", 2, {"t", "x", "y"}, {"years", "capital", "wealth"}};

}  // namespace

TEST_CASE("schema header line") {
  CHECK(kSchema.header() == "# schema=example;version=2;units=years,capital,wealth");
  CHECK(kSchema.label_line() == "t,x,y");
}

TEST_CASE("CSV round trip is exact") {
  mfg::Matrix m(4, 3);
  m << 0.0, 0.1 + 0.2, -1e-300, 1.0 / 3.0, 5e-324, 1e308, -0.0, 123456789.125, std::exp(1.0), 2,
      -7.5, std::numeric_limits<double>::min();
  std::stringstream s;
  mfg::write_csv(s, m, kSchema);
  const auto back = mfg::read_csv(s, kSchema);
  REQUIRE(back.rows() == 4);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) CHECK(back(i, j) == m(i, j));
  }
  CHECK(mfg::max_table_difference(m, back) == 0.0);
}

TEST_CASE("shortest double formatting") {
  CHECK(mfg::format_double(0.5) == "0.5");
  CHECK(mfg::format_double(0.1 + 0.2) == "0.30000000000000004");
  CHECK(mfg::format_double(1e-7) == "1e-07");
  CHECK(mfg::parse_double("0.30000000000000004", 1) == 0.1 + 0.2);
  CHECK_THROWS_AS(mfg::parse_double("1.5x", 3), mfg::IoError);
}

TEST_CASE("wrong arity names the row") {
  std::stringstream s;
  s << kSchema.header() << "\n" << kSchema.label_line() << "\n0,1,2\n0,1\n";
  try {
    mfg::read_csv(s, kSchema);
    FAIL("expected IoError");
  } catch (const mfg::IoError& e) {
    CHECK(e.row() == 4);
    CHECK_THAT(e.what(), ContainsSubstring("row 4"));
  }
}

TEST_CASE("malformed number names the row") {
  std::stringstream s;
  s << kSchema.header() << "\n" << kSchema.label_line() << "\n0,abc,2\n";
  try {
    mfg::read_csv(s, kSchema);
    FAIL("expected IoError");
  } catch (const mfg::IoError& e) {
    CHECK(e.row() == 3);
  }
}

TEST_CASE("schema name, version and labels are checked") {
  auto old = kSchema;
  old.version = 1;
  std::stringstream a;
  mfg::write_csv(a, mfg::Matrix::Zero(1, 3), old);
  CHECK_THROWS_AS(mfg::read_csv(a, kSchema), mfg::IoError);

  auto renamed = kSchema;
  renamed.columns[2] = "z";
  std::stringstream b;
  mfg::write_csv(b, mfg::Matrix::Zero(1, 3), renamed);
  CHECK_THROWS_AS(mfg::read_csv(b, kSchema), mfg::IoError);

  std::stringstream c("t,x,y\n1,2,3\n");
  CHECK_THROWS_AS(mfg::read_csv(c, kSchema), mfg::IoError);

  std::stringstream d;
  CHECK_THROWS_AS(mfg::write_csv(d, mfg::Matrix::Zero(1, 2), kSchema), mfg::IoError);
}

TEST_CASE("noise dump round trip") {
  const auto c = mfg::default_two_group(mfg::Variant::AggregateShock);
  const auto b = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 3);
  std::stringstream s(std::ios::in | std::ios::out | std::ios::binary);
  mfg::write_noise(s, b);
  CHECK(s.str().size() == 8 + 4 + 8 + 8 + 3 * b.steps() * 8);
  const auto dump = mfg::read_noise(s);
  REQUIRE(dump.series.size() == 3);
  CHECK(dump.steps() == b.steps());
  CHECK(dump.series[0] == b.dW);
  CHECK(dump.series[1] == b.dB[0]);
  CHECK(dump.series[2] == b.dB[1]);
}

TEST_CASE("noise dump rejects bad input") {
  std::stringstream bad("NOTNOISE1234");
  CHECK_THROWS_AS(mfg::read_noise(bad), mfg::IoError);

  const auto c = mfg::default_two_group();
  std::stringstream s;
  mfg::write_noise(s, mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0));
  std::string bytes = s.str();
  bytes.resize(bytes.size() - 5);
  std::stringstream cut(bytes);
  CHECK_THROWS_AS(mfg::read_noise(cut), mfg::IoError);

  std::string versioned = s.str();
  versioned[8] = 9;
  std::stringstream v(versioned);
  CHECK_THROWS_WITH(mfg::read_noise(v), ContainsSubstring("version 9"));
}

TEST_CASE("mean-field table round trips through CSV") {
  const auto c = mfg::default_four_group();
  const auto noise = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0);
  const auto mf = mfg::solve_meanfield(c, noise, mfg::simulate_price(c.price, noise.dW, c.dt));
  const auto schema = mfg::meanfield_schema(mfg::group_labels(c));
  std::stringstream s;
  mfg::write_csv(s, mfg::meanfield_table(mf), schema);
  const auto back = mfg::meanfield_from_table(c, mfg::read_csv(s, schema));
  CHECK(back.m == mf.m);
  CHECK(back.M_rel == mf.M_rel);
}

TEST_CASE("golden mean-field files are reproduced") {
  struct Case {
    const char* scenario;
    const char* golden;
  };
  for (const auto& k : {Case{"two_group_no_shock.json", "noshock_meanfield.csv"},
                        Case{"two_group_aggregate.json", "aggregate_meanfield.csv"}}) {
    INFO(k.golden);
    auto c = mfg::load(std::string(MACROMFG_SCENARIO_DIR) + "/" + k.scenario);
    const auto schema = mfg::meanfield_schema(mfg::group_labels(c));
    const auto golden = mfg::read_csv(std::string(MACROMFG_GOLDEN_DIR) + "/" + k.golden, schema);
    const auto noise = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0);
    const auto mf = mfg::solve_meanfield(c, noise, mfg::simulate_price(c.price, noise.dW, c.dt));
    CHECK(mfg::max_table_difference(mfg::meanfield_table(mf), golden) <= 1e-12);
  }
}

#include <doctest.h>

#include <json.hpp>

#include "arbproj/error.hpp"
#include "arbproj/io.hpp"

using namespace arbproj;

TEST_CASE("number formatting") {
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(1e-20) == "1e-20");
}

TEST_CASE("surface CSV round trip") {
  const std::string text =
      "maturity_years,k,c,vol\n"
      "0.5,0.9,,0.2\n"
      "0.5,1.0,0.06,\n"
      "1.0,1.0,0.08,\n";
  const auto s = parse_surface_csv(text);
  REQUIRE(s.maturities() == 2);
  CHECK(s.smiles[0].prices[0] == doctest::Approx(bs_call_price(0.9, 0.2, 0.5)).epsilon(1e-15));
  CHECK(s.smiles[0].prices[1] == 0.06);
  CHECK(s.smiles[1].strikes == std::vector<double>{1.0});
  const auto again = parse_surface_csv(surface_csv(s));
  CHECK(again.smiles[0].strikes == s.smiles[0].strikes);
  CHECK(again.smiles[0].prices[1] == s.smiles[0].prices[1]);
}

TEST_CASE("surface CSV errors") {
  CHECK_THROWS_AS(parse_surface_csv("maturity,k,c,vol\n0.5,1,0.1,\n"), Error);
  CHECK_THROWS_AS(parse_surface_csv("maturity_years,k,c,vol\n0.5,1,,\n"), Error);
  CHECK_THROWS_AS(parse_surface_csv("maturity_years,k,c,vol\n0.5,1,abc,\n"), Error);
  CHECK_THROWS_AS(parse_surface_csv("maturity_years,k,c,vol\n0.5,1,0.1,\n0.5,0.9,0.15,\n"), Error);
  try {
    load_surface("/nonexistent/surface.csv");
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
}

TEST_CASE("quote files are recognized by header") {
  const auto s = load_surface(std::string(ARBPROJ_FIXTURES_DIR) + "/quotes.csv");
  REQUIRE(s.maturities() == 2);
  CHECK(s.smiles[0].forward == doctest::Approx(102.0).epsilon(1e-6));
  CHECK(s.smiles[1].discount == doctest::Approx(0.97).epsilon(1e-6));
}

TEST_CASE("scenario JSON") {
  const auto sc = parse_scenario_json(
      R"({"bands":[{"k_lo":0.9,"k_hi":1.1,"vol_multiplier":1.2},
                   {"maturity_index":1,"k_lo":0,"k_hi":0.5,"vol_multiplier":0.9}],
          "calibration_marks":[[0,2],[1,0]]})",
      2);
  REQUIRE(sc.bands.size() == 2);
  CHECK(sc.bands[0].size() == 1);
  CHECK(sc.bands[1].size() == 2);
  CHECK(sc.bands[1][1].vol_multiplier == 0.9);
  CHECK(sc.calibration_marks == std::vector<NodeIndex>{{0, 2}, {1, 0}});
  CHECK_THROWS_AS(parse_scenario_json("{", 1), Error);
  CHECK_THROWS_AS(parse_scenario_json(R"({"bands":[{"k_lo":1}]})", 1), Error);
  CHECK_THROWS_AS(parse_scenario_json(R"({"bands":[{"maturity_index":3,"k_lo":0,"k_hi":1,"vol_multiplier":1}]})", 2),
                  Error);
}

TEST_CASE("marks list") {
  CHECK(parse_marks("0:3,1:2") == std::vector<NodeIndex>{{0, 3}, {1, 2}});
  CHECK(parse_marks("").empty());
  CHECK_THROWS_AS(parse_marks("0-3"), Error);
  CHECK_THROWS_AS(parse_marks("a:1"), Error);
}

TEST_CASE("measure and sweep tables") {
  const Theta th{{0.0, 1.0, 2.0}};
  Eigen::VectorXd mu(9);
  mu.setZero();
  mu[4] = 1.0;
  const auto csv = measure_csv(mu, th, 2);
  CHECK(csv.rfind("path_index,k_1,k_2,weight\n", 0) == 0);
  CHECK(csv.find("5,1,1,1\n") != std::string::npos);

  std::vector<SweepRow> rows{{1.0, 0.5, 1e-5, 10, true, ""}, {0.1, 0.4, 1e-3, 5, false, "instability: a, b"}};
  const auto sw = sweep_csv(rows, 0.39);
  CHECK(sw.find("a; b") != std::string::npos);
  CHECK(sw.find("\nlp,0.39,0,,1,\n") != std::string::npos);
}

TEST_CASE("arbitrage report JSON") {
  NormalizedSurface s{{Smile{0.5, 100.0, 0.99, {0.5, 1.0}, {0.3, 0.6}}}};
  const auto rep = detect_arbitrage(s);
  const auto j = nlohmann::json::parse(report_json(rep, s));
  CHECK(j["feasible"] == false);
  REQUIRE(j["violations"].size() >= 1);
  bool found = false;
  for (const auto& v : j["violations"]) {
    if (v["kind"] == "monotonicity" && v["strike_index"] == 1) {
      found = true;
      CHECK(v["strike"].get<double>() == doctest::Approx(100.0));
      CHECK(v["magnitude_currency"].get<double>() == doctest::Approx(0.3 * 100.0 * 0.99));
    }
  }
  CHECK(found);
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dab/error.hpp"
#include "dab/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dab;

TEST_CASE("rmse") {
  auto g = test::two_var_grid(6, 10);
  auto a = test::random_state(g, 1);
  std::vector<StateField> one = {a};
  CHECK(rmse_latweighted(one, one, "z", "500") == 0.0);

  auto cell = make_grid(GridSpec({0.0}, 1, {"surface"}, {{"x", "", VariableKind::Surface, 1.0}}));
  std::vector<StateField> c = {StateField(cell, Vector::Constant(1, -2.5), 0)};
  std::vector<StateField> t = {StateField(cell, Vector::Zero(1), 0)};
  CHECK(rmse_latweighted(c, t, "x", "surface") == 2.5);

  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<StateField> xs, ys;
    for (int k = 0; k < 3; ++k) {
      xs.push_back(test::random_state(g, 10 * s + std::uint64_t(k), 3 * k));
      ys.push_back(test::random_state(g, 500 + 10 * s + std::uint64_t(k), 3 * k));
    }
    CHECK(std::abs(rmse_latweighted(xs, ys, "t", "850") - oracle::rmse(xs, ys, 1, 1)) < 1e-12);
  }

  std::vector<StateField> late = {test::random_state(g, 1, 3)};
  CHECK_THROWS_AS(rmse_latweighted(one, late, "z", "500"), AlignmentError);
  CHECK_THROWS_AS(rmse_latweighted(one, one, "w", "500"), AlignmentError);
}

TEST_CASE("acc") {
  auto g = test::two_var_grid(6, 10);
  Climatology clim{g, test::randn(g->size(), 3)};
  auto truth = test::random_state(g, 4);
  std::vector<StateField> ts = {truth};
  CHECK(acc_latweighted(ts, ts, clim, "z", "500") == doctest::Approx(1.0).epsilon(1e-14));
  std::vector<StateField> cl = {clim.as_state()};
  CHECK(acc_latweighted(cl, ts, clim, "z", "500") == 0.0);
  std::vector<StateField> anti = {StateField(g, 2.0 * clim.mean - truth.values(), 0)};
  CHECK(acc_latweighted(anti, ts, clim, "z", "500") == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK_THROWS_AS(acc_latweighted(ts, cl, clim, "z", "500"), UndefinedAccError);

  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<StateField> xs = {test::random_state(g, s, 0), test::random_state(g, s + 20, 3)};
    std::vector<StateField> ys = {test::random_state(g, s + 40, 0), test::random_state(g, s + 60, 3)};
    CHECK(std::abs(acc_latweighted(xs, ys, clim, "z", "850") -
                   oracle::acc(xs, ys, clim.as_state(), 0, 1)) < 1e-12);
  }
}

TEST_CASE("l1") {
  auto g = test::two_var_grid(6, 10);
  auto a = test::random_state(g, 1), b = test::random_state(g, 2);
  CHECK(l1_latweighted(a, a) == 0.0);
  CHECK(std::abs(l1_latweighted(a, b) - oracle::l1(a, b)) < 1e-12);
  auto flat = make_grid(GridSpec({-30.0, 30.0}, 5, {"surface"}, {{"x", "", VariableKind::Surface, 1.0}}));
  StateField z(flat, Vector::Zero(10), 0), e(flat, Vector::Constant(10, -0.75), 0);
  CHECK(l1_latweighted(e, z) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("skill horizon") {
  MetricSeries s{"acc", "z", "500", {{6, 0.9}, {12, 0.7}, {18, 0.5}, {24, 0.65}}};
  CHECK(skill_horizon(s) == 12);
  MetricSeries above{"acc", "z", "500", {{6, 0.9}, {12, 0.8}}};
  CHECK(skill_horizon(above) == 12);
  MetricSeries below{"acc", "z", "500", {{6, 0.5}, {12, 0.4}}};
  CHECK(skill_horizon(below) == 0);
}

TEST_CASE("summaries") {
  std::vector<FieldScore> a = {{"z", "500", 1.0, 0.5}}, b = {{"z", "500", 3.0, 0.9}};
  auto one = summarize({a});
  CHECK(one.rows[0].rmse == 1.0);
  auto two = summarize({a, b});
  CHECK(two.rows[0].rmse == 2.0);
  CHECK(two.rows[0].acc == doctest::Approx(0.7));
  CHECK(two.rows[0].samples == 2);
  std::vector<FieldScore> nan = {{"z", "500", 5.0, std::nan("")}};
  CHECK(summarize({a, nan}).rows[0].acc == 0.5);

  auto g = test::two_var_grid();
  auto x = test::random_state(g, 1), y = test::random_state(g, 2);
  auto scores = score_state(x, y, Climatology{g, Vector::Zero(Eigen::Index(g->size()))});
  CHECK(scores.size() == 4);
  CHECK(scores[3].variable == "t");
  CHECK(scores[3].level == "850");
}

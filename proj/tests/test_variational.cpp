#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dab/assimilation.hpp"
#include "dab/error.hpp"
#include "support.hpp"

using namespace dab;

namespace {

struct L96Case {
  Lorenz96Model model{Lorenz96Params{}};
  StateField xb{model.grid(), 0};
  std::vector<ObsRecord> records;
  ObsWindow window_obs() const {
    ObsWindow w;
    for (auto &r : records) w.push_back(&r);
    return w;
  }
};

L96Case l96_case(std::uint64_t seed, double ratio = 0.5) {
  L96Case c;
  StateField x(c.model.grid(), Vector::Constant(40, 8.0) + test::randn(40, seed), 0);
  for (int i = 0; i < 10; ++i) x = c.model.step(x, 24);
  x = StateField(c.model.grid(), x.values(), 0);
  c.xb = StateField(c.model.grid(), x.values() + test::randn(40, seed + 1), 0);
  for (Hours t = 0; t < 12; t += 3) {
    auto mask = generate_mask(*c.model.grid(), {ratio, seed, true}, t);
    Vector y = x.values() + 0.5 * test::randn(40, seed + 10 + std::uint64_t(t));
    c.records.push_back(test::make_obs(y, mask, t));
    x = c.model.step(x, 3);
  }
  return c;
}

// J computed straight from the formula, stepping the model 3 h at a time
double cost_oracle(const StateField &x0, const StateField &xb, const Vector &binv,
                   const std::vector<ObsRecord> &recs, double sigma, const DynamicsModel &m) {
  double j = 0;
  for (Eigen::Index i = 0; i < x0.values().size(); ++i) {
    double d = x0.values()[i] - xb.values()[i];
    j += 0.5 * d * d * binv[i];
  }
  StateField x = x0;
  for (auto &r : recs) {
    while (x.time() < r.time) x = m.step(x, 3);
    for (std::size_t i = 0; i < r.observed.size(); ++i)
      if (r.observed[i]) {
        double d = r.values[Eigen::Index(i)] - x.values()[Eigen::Index(i)];
        j += 0.5 * d * d / (sigma * sigma);
      }
  }
  return j;
}

}  // namespace

TEST_CASE("4DVar cost") {
  auto c = l96_case(1);
  auto b = BackgroundCov::uniform(c.model.grid(), 2.0);
  ObsCov r(c.model.grid(), {0.5});
  Window w{0, 12};
  const double j = cost_4dvar(c.xb, c.xb, b, c.window_obs(), r, c.model, w);
  const double jo = cost_oracle(c.xb, c.xb, b.inverse_diagonal(), c.records, 0.5, c.model);
  CHECK(std::abs(j - jo) <= 1e-10 * jo);

  StateField x0(c.model.grid(), c.xb.values() + test::randn(40, 77), 0);
  const double j2 = cost_4dvar(x0, c.xb, b, c.window_obs(), r, c.model, w);
  CHECK(std::abs(j2 - cost_oracle(x0, c.xb, b.inverse_diagonal(), c.records, 0.5, c.model)) <= 1e-10 * j2);

  // perfect observations of the background trajectory
  std::vector<ObsRecord> perfect;
  StateField x = c.xb;
  for (auto &rec : c.records) {
    while (x.time() < rec.time) x = c.model.step(x, 3);
    perfect.push_back(test::make_obs(x.values(), rec.observed, rec.time));
  }
  ObsWindow pw;
  for (auto &p : perfect) pw.push_back(&p);
  CHECK(cost_4dvar(c.xb, c.xb, b, pw, r, c.model, w) == 0.0);
  CHECK(grad_4dvar(c.xb, c.xb, b, pw, r, c.model, w).cwiseAbs().maxCoeff() == 0.0);

  Vector delta = test::randn(40, 5);
  StateField moved(c.model.grid(), c.xb.values() + delta, 0);
  auto unit = BackgroundCov::uniform(c.model.grid(), 1.0);
  CHECK(cost_4dvar(moved, c.xb, unit, {}, r, c.model, w) ==
        doctest::Approx(0.5 * delta.squaredNorm()).epsilon(1e-14));

  ObsRecord late = c.records[0];
  late.time = 12;
  CHECK_THROWS_AS(cost_4dvar(c.xb, c.xb, b, {&late}, r, c.model, w), WindowError);
}

TEST_CASE("4DVar gradient") {
  auto c = l96_case(2);
  auto b = BackgroundCov::uniform(c.model.grid(), 1.5);
  ObsCov r(c.model.grid(), {0.7});
  Window w{0, 12};
  StateField x0(c.model.grid(), c.xb.values() + 0.3 * test::randn(40, 8), 0);
  Vector g = grad_4dvar(x0, c.xb, b, c.window_obs(), r, c.model, w);
  for (int k = 0; k < 5; ++k) {
    Vector d = test::randn(40, 200 + std::uint64_t(k));
    const double h = 1e-5;
    StateField p(c.model.grid(), x0.values() + h * d, 0), m(c.model.grid(), x0.values() - h * d, 0);
    const double fd = (cost_4dvar(p, c.xb, b, c.window_obs(), r, c.model, w) -
                       cost_4dvar(m, c.xb, b, c.window_obs(), r, c.model, w)) / (2 * h);
    CHECK(std::abs(fd - g.dot(d)) / std::abs(g.dot(d)) < 1e-5);
  }

  // single obs at t0, background term dropped: -R^-1 (y - x0)
  auto inf = BackgroundCov::uniform(c.model.grid(), std::numeric_limits<double>::infinity());
  ObsMask one(40, 0);
  one[7] = 1;
  Vector y = Vector::Zero(40);
  y[7] = 3.0;
  auto rec = test::make_obs(y, one, 0);
  Vector g1 = grad_4dvar(x0, c.xb, inf, {&rec}, r, c.model, w);
  CHECK(g1[7] == doctest::Approx(-(3.0 - x0.values()[7]) / 0.49).epsilon(1e-14));
  g1[7] = 0;
  CHECK(g1.cwiseAbs().maxCoeff() == 0.0);

  Vector feat = obs_term_gradient(c.xb, {&rec}, r, c.model, w);
  CHECK(feat[7] == doctest::Approx(-(3.0 - c.xb.values()[7]) / 0.49).epsilon(1e-14));
}

TEST_CASE("4DVar minimization") {
  auto c = l96_case(3);
  auto b = BackgroundCov::uniform(c.model.grid(), 1.0);
  ObsCov r(c.model.grid(), {0.5});
  Window w{0, 12};
  auto none = minimize_4dvar(c.xb, b, {}, r, c.model, w);
  CHECK(none.analysis.values() == c.xb.values());

  auto res = minimize_4dvar(c.xb, b, c.window_obs(), r, c.model, w, {200, 1e-8});
  CHECK(res.cost.back() < res.cost.front());
  for (std::size_t i = 1; i < res.cost.size(); ++i) CHECK(res.cost[i] <= res.cost[i - 1]);
  CHECK(res.cost.front() == doctest::Approx(cost_4dvar(c.xb, c.xb, b, c.window_obs(), r, c.model, w)));
  Vector g = grad_4dvar(res.analysis, c.xb, b, c.window_obs(), r, c.model, w);
  Vector g0 = grad_4dvar(c.xb, c.xb, b, c.window_obs(), r, c.model, w);
  CHECK(g.norm() < 1e-6 * g0.norm());
}

TEST_CASE("3DVar closed forms") {
  auto g = make_grid(GridSpec({0.0}, 1, {"surface"}, {{"x", "", VariableKind::Surface, 1.0}}));
  StateField xb(g, Vector::Zero(1), 0);
  auto rec = test::make_obs(Vector::Constant(1, 2.0), ObsMask{1}, 0);
  CHECK(threedvar(xb, BackgroundCov::uniform(g, 1.0), rec, ObsCov(g, {1.0})).analysis.values()[0] == 1.0);
  CHECK(threedvar(xb, BackgroundCov::uniform(g, 1.0), rec, ObsCov(g, {1e12})).analysis.values()[0] ==
        doctest::Approx(0.0));
  CHECK(threedvar(xb, BackgroundCov::uniform(g, std::numeric_limits<double>::infinity()), rec,
                  ObsCov(g, {1.0}))
            .analysis.values()[0] == 2.0);
  auto wrong_time = rec;
  wrong_time.time = 3;
  CHECK_THROWS_AS(threedvar(xb, BackgroundCov::uniform(g, 1.0), wrong_time, ObsCov(g, {1.0})), WindowError);
}

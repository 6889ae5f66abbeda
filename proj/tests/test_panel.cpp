#include "helpers.hpp"

#include "dptr/errors.hpp"

#include <doctest.h>

#include <sstream>

using namespace dptr;
using namespace dptr::testing;

TEST_SUITE("panel") {

TEST_CASE("load_panel reads a complete 2x3 panel") {
  std::istringstream in(
      "unit,time,y,q,x\n"
      "b,2,5,0.5,1\n"
      "a,1,1,0.1,2\n"
      "a,2,2,0.2,3\n"
      "a,3,3,0.3,4\n"
      "b,1,4,0.4,5\n"
      "b,3,6,0.6,6\n");
  const PanelDataset p = load_panel(in, PanelSchema{"unit", "time", "y", "q"});
  CHECK(p.n() == 2);
  CHECK(p.T() == 3);
  CHECK(p.p() == 2);
  CHECK(p.x_names == std::vector<std::string>{"x", "q"});
  CHECK(p.unit_ids == std::vector<std::string>{"a", "b"});
  CHECK(p.y(0, 2) == 3.0);
  CHECK(p.y(1, 1) == 5.0);
  CHECK(p.q()(1, 2) == 0.6);
  CHECK(p.x[0](0, 0) == 2.0);
}

TEST_CASE("unbalanced panel lists the missing cell") {
  std::istringstream in(
      "unit,time,y,q\n"
      "1,1,1,0\n1,2,1,0\n1,3,1,0\n"
      "2,1,1,0\n2,2,1,0\n");
  try {
    load_panel(in, PanelSchema{"unit", "time", "y", "q"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("(2, 3)") != std::string::npos);
  }
}

TEST_CASE("parse errors name the row; duplicates are rejected") {
  std::istringstream bad("unit,time,y,q\n1,1,1,0\n1,2,abc,0\n");
  try {
    load_panel(bad, PanelSchema{"unit", "time", "y", "q"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  std::istringstream dup("unit,time,y,q\n1,1,1,0\n1,1,2,0\n");
  CHECK_THROWS_AS(load_panel(dup, PanelSchema{"unit", "time", "y", "q"}), DataError);
  std::istringstream nocol("unit,time,y,q\n1,1,1,0\n");
  CHECK_THROWS_AS(load_panel(nocol, PanelSchema{"unit", "time", "y", "z"}), DataError);
}

TEST_CASE("simulated panel round-trips through the CSV writer") {
  const PanelDataset& p = seed1_panel();
  std::stringstream buf;
  write_panel_csv(buf, p);
  const PanelDataset back = load_panel(buf, PanelSchema{"unit", "time", "y", "q"});
  CHECK(back.n() == 400);
  CHECK(back.T() == 6);
  CHECK(back.p() == 2);
  CHECK(back.y == p.y);
  CHECK(back.x[0] == p.x[0]);
  CHECK(back.x[1] == p.x[1]);
}

TEST_CASE("first differences") {
  PanelDataset p;
  p.y = MatrixXd::Constant(3, 4, 2.5);
  p.x = {MatrixXd::Random(3, 4)};
  p.x_names = {"q"};
  p.unit_ids = {"1", "2", "3"};
  p.times = {1, 2, 3, 4};
  SUBCASE("constant y gives zero dy") {
    const DiffPanel d = first_difference(p);
    CHECK(d.dy().isZero(0.0));
  }
  SUBCASE("unit effects plus a trend difference to one") {
    for (int i = 0; i < 3; ++i)
      for (int t = 0; t < 4; ++t) p.y(i, t) = 10.0 * i + (t + 1);
    const DiffPanel d = first_difference(p);
    CHECK(d.dy().isApproxToConstant(1.0, 0.0));
  }
  SUBCASE("T < 2 is a dimension error") {
    p.y = MatrixXd::Zero(3, 1);
    p.x = {MatrixXd::Zero(3, 1)};
    p.times = {1};
    CHECK_THROWS_AS(first_difference(p), DimensionError);
  }
}

TEST_CASE("noise-free data satisfy the differenced equation exactly") {
  DgpConfig c = design(50, 1.0, 0.0);
  const PanelDataset p = simulate_panel(c, 7);
  const DiffPanel d = first_difference(p);
  const ThresholdParams th = c.theta();
  for (int t = 2; t <= p.T(); ++t) {
    const auto& per = d.at(t);
    for (int i = 0; i < p.n(); ++i) {
      const double up = per.q_cur()(i) > th.gamma ? 1.0 : 0.0;
      const double up_prev = per.q_prev()(i) > th.gamma ? 1.0 : 0.0;
      const double fitted = per.dx.row(i).dot(th.beta) + up * per.lev_cur.row(i).dot(th.delta) -
                            up_prev * per.lev_prev.row(i).dot(th.delta);
      CHECK(std::abs(per.dy(i) - fitted) <= 1e-12);
    }
  }
}

TEST_CASE("instrument counts") {
  for (int T = 3; T <= 8; ++T) {
    DgpConfig c = design(5, 1.0);
    c.T = T;
    const PanelDataset p = simulate_panel(c, 1);
    const InstrumentSet iv = build_instruments(p, InstrumentSpec::y_lags_only());
    CHECK(iv.k == y_lag_instrument_count(T));
  }
  const PanelDataset& p = seed1_panel();
  CHECK(build_instruments(p, InstrumentSpec::y_lags_only()).k == 10);
  const InstrumentSet iv = build_instruments(p, InstrumentSpec::standard());
  CHECK(iv.k == 24);
  // period t0 = 3: y_1, then q_2, q_1
  CHECK(iv.labels[0] == "y[1]@t3");
  CHECK(iv.z[0].col(0) == p.y.col(0));
  CHECK(iv.z[0].col(1) == p.q().col(1));
  CHECK(iv.z[0].col(2) == p.q().col(0));
}

TEST_CASE("T = 3 with y lags only has a single instrument") {
  DgpConfig c = design(5, 1.0);
  c.T = 3;
  const InstrumentSet iv = build_instruments(simulate_panel(c, 1), InstrumentSpec::y_lags_only());
  CHECK(iv.k == 1);
  CHECK_FALSE(iv.satisfies_order_condition(2));
}

TEST_CASE("infeasible lags are spec errors naming t and the lag") {
  InstrumentSpec spec;
  spec.t0 = 3;
  spec.rules = {LagRule{"y", 3, std::nullopt}};
  try {
    build_instruments(seed1_panel(), spec);
    FAIL("expected SpecError");
  } catch (const SpecError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("t = 3") != std::string::npos);
    CHECK(msg.find("lag 3") != std::string::npos);
  }
}

TEST_CASE("moment evaluation") {
  const PanelDataset& p = seed1_panel();
  const DiffPanel d = first_difference(p);
  const InstrumentSet iv = build_instruments(p, InstrumentSpec::standard());

  SUBCASE("zero moments at the truth without noise") {
    DgpConfig c = design(60, 1.0, 0.0);
    const PanelDataset p0 = simulate_panel(c, 3);
    const auto ev = moment_eval(first_difference(p0), build_instruments(p0, InstrumentSpec::standard()), c.theta());
    CHECK(ev.g_bar.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("saturated indicators with delta = 0") {
    ThresholdParams th = design(1, 1.0).theta();
    th.delta.setZero();
    th.gamma = p.q().minCoeff() - 1.0;
    const auto lo = moment_eval(d, iv, th);
    th.gamma = p.q().maxCoeff() + 1.0;
    const auto hi = moment_eval(d, iv, th);
    CHECK(lo.g_bar == hi.g_bar);
  }
  SUBCASE("linearity identity for random parameters") {
    std::mt19937_64 rng(11);
    for (int r = 0; r < 100; ++r) {
      const ThresholdParams th = random_params(rng, 2);
      const auto ev = moment_eval(d, iv, th);
      const VectorXd lin = ev.v_n + ev.M_bar * th.alpha();
      CHECK(max_rel_diff(ev.g_bar, lin) <= 1e-12);
      CHECK(max_rel_diff(ev.g_units.colwise().mean().transpose(), ev.g_bar) <= 1e-12);
    }
  }
  SUBCASE("piecewise constant in gamma between sample values") {
    std::vector<double> qs = pooled_threshold_sample(p, 3);
    std::sort(qs.begin(), qs.end());
    ThresholdParams th = design(1, 1.0).theta();
    for (std::size_t j : {10UL, 500UL, 1200UL}) {
      const double a = qs[j];
      const double b = qs[j + 1];
      if (!(b > a)) continue;
      th.gamma = a + 0.25 * (b - a);
      const auto e1 = moment_eval(d, iv, th);
      th.gamma = a + 0.75 * (b - a);
      const auto e2 = moment_eval(d, iv, th);
      CHECK(e1.g_bar == e2.g_bar);
    }
  }
  SUBCASE("moment system agrees with the direct evaluation") {
    const MomentSystem sys = MomentSystem::build(d, iv);
    std::mt19937_64 rng(5);
    for (int r = 0; r < 20; ++r) {
      const ThresholdParams th = random_params(rng, 2);
      const auto ev = moment_eval(d, iv, th);
      CHECK(max_rel_diff(sys.m_bar(th.gamma), ev.M_bar) <= 1e-12);
      CHECK(max_rel_diff(sys.v_bar(), ev.v_n) <= 1e-12);
      CHECK(max_rel_diff(sys.unit_moments(th.alpha(), th.gamma), ev.g_units) <= 1e-12);
    }
  }
  SUBCASE("grid moments match per-point evaluation") {
    const MomentSystem sys = MomentSystem::build(d, iv);
    const GammaGrid grid = default_grid(sys, 41);
    const GridMoments gm = grid_moments(sys, grid.points);
    for (std::size_t l = 0; l < grid.size(); ++l) CHECK(max_rel_diff(gm.m(l), sys.m_bar(grid.points[l])) <= 1e-12);
  }
  SUBCASE("ties at the threshold fall in the lower regime") {
    const double q0 = p.q()(0, 3);
    const auto [up, up_prev] = d.indicator(0, 4, q0);
    CHECK_FALSE(up);
    (void)up_prev;
  }
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bwshare/fluid.hpp"

using namespace bwshare;

namespace {

NetworkModel dps(double l1, double l2, double l3) {
  NetworkModel m;
  m.classes = {{l1, 1.0, 1.0, true}, {l2, 1.0, 1.0, false}, {l3, 1.0, 1.0, false}};
  m.allocation = DpsSpec{1.0};
  return m;
}

NetworkModel tree_model(double lambda1) {
  NetworkModel m;
  m.classes = {{lambda1, 1.0, 1.0, true}, {0.5, 1.0, 1.0, false}};
  m.allocation = TreeSpec{0.4, 0.8};
  return m;
}

void check_nonnegative(const FluidSolution& s) {
  for (const auto& u : s.u) {
    for (double v : u) CHECK(v >= 0.0);
  }
}

}  // namespace

TEST_CASE("work-conserving line hits zero at t = 10") {
  const auto m = dps(0.5, 0.3, 0.1);
  const auto fast = work_conserving_fast_path(m, {1.0}, 12.0);
  for (std::size_t k = 0; k < fast.t.size(); ++k) {
    CHECK(fast.u[k][0] == doctest::Approx(std::max(0.0, 1.0 - 0.1 * fast.t[k])).epsilon(1e-12));
  }
  FluidOptions opt;
  const auto slow = solve_fluid(m, {}, {1.0}, 12.0, opt);
  for (std::size_t k = 0; k < slow.t.size(); ++k) {
    CHECK(std::abs(slow.u[k][0] - fast.at(slow.t[k])[0]) <= 5 * opt.tol + 1e-12);
  }
  REQUIRE(slow.hit_times.size() == 1);
  // phibar carries the stationary tolerance, so the hit time is good to ~1e-7.
  CHECK(std::abs(slow.hit_times[0] - 10.0) <= 1e-6);
  check_nonnegative(slow);
}

TEST_CASE("fast path slopes") {
  // Balanced: lambda1 equals the capacity left by classes 2 and 3.
  auto s = work_conserving_fast_path(dps(0.6, 0.3, 0.1), {1.0}, 5.0);
  CHECK(s.final_state()[0] == doctest::Approx(1.0));
  s = work_conserving_fast_path(dps(0.7, 0.3, 0.1), {1.0}, 5.0);
  CHECK(s.final_state()[0] == doctest::Approx(1.5));
  const auto slow = solve_fluid(dps(0.7, 0.3, 0.1), {}, {1.0}, 5.0);
  CHECK(std::abs(slow.final_state()[0] - 1.5) <= 5e-8);
}

TEST_CASE("balanced drift keeps the state constant") {
  const auto s = solve_fluid(dps(0.6, 0.3, 0.1), {}, {0.7}, 4.0);
  for (const auto& u : s.u) CHECK(u[0] == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("piecewise arrivals follow the profile") {
  // a(t) has slope 1 on [0, 2] then 0.2: drift 0.4 then -0.4 with phibar = 0.6.
  TrafficProfile p({{{0.0, 0.0}, {2.0, 2.0}, {3.0, 2.2}}});
  const auto s = solve_fluid(dps(0.5, 0.3, 0.1), p, {0.5}, 6.0);
  auto exact = [](double t) {
    if (t <= 2.0) return 0.5 + 0.4 * t;
    return std::max(0.0, 1.3 - 0.4 * (t - 2.0));
  };
  for (std::size_t k = 0; k < s.t.size(); k += 7) {
    CHECK(std::abs(s.u[k][0] - exact(s.t[k])) <= 1e-6);
  }
  check_nonnegative(s);
}

TEST_CASE("tree threshold decides the limit") {
  const auto low = solve_fluid(tree_model(0.2), {}, {1.0}, 60.0);
  CHECK(low.final_state()[0] == 0.0);
  check_nonnegative(low);
  const auto high = solve_fluid(tree_model(0.3), {}, {1.0}, 60.0);
  CHECK(high.final_state()[0] > 0.1);
  check_nonnegative(high);
}

TEST_CASE("monotone drift bound along the path") {
  const auto m = tree_model(0.2);
  const double d0 = drift(m, std::vector<double>{0.0})[0];
  REQUIRE(d0 < 0.0);
  const auto s = solve_fluid(m, {}, {2.0}, 40.0);
  for (std::size_t k = 0; k < s.t.size(); ++k) {
    if (s.u[k][0] <= 0.0) continue;
    const double udot = m.classes[0].arrival_rate - m.classes[0].service_rate * s.phibar[k][0];
    CHECK(udot <= d0 + 1e-9);
  }
}

TEST_CASE("equilibria") {
  SUBCASE("work-conserving: none, absorbed in finite time") {
    const auto r = find_equilibria(dps(0.5, 0.3, 0.1));
    CHECK(r.equilibria.empty());
    CHECK(r.regime == Regime::AbsorbedFiniteTime);
  }
  SUBCASE("tree above the threshold: one stable interior point") {
    const auto m = tree_model(0.3);
    const auto r = find_equilibria(m);
    REQUIRE(r.equilibria.size() == 1);
    const auto& e = r.equilibria[0];
    CHECK(e.stable);
    CHECK(e.residual <= 1e-8);
    CHECK(r.regime == Regime::InteriorStable);
    // Started at the equilibrium, the path stays there.
    const auto s = solve_fluid(m, {}, e.z, 10.0);
    for (const auto& u : s.u) CHECK(std::abs(u[0] - e.z[0]) <= 1e-7);
  }
  SUBCASE("overloaded: unstable") {
    const auto r = find_equilibria(dps(0.7, 0.3, 0.1));
    CHECK(r.regime == Regime::Unstable);
  }
}

TEST_CASE("robust stability") {
  auto r = robust_stability(dps(0.5, 0.3, 0.1));
  CHECK(r.verdict == Verdict::Yes);
  CHECK(r.criterion == "work-conserving");
  CHECK(r.margin == doctest::Approx(0.1));

  r = robust_stability(tree_model(0.2));
  CHECK(r.verdict == Verdict::Yes);
  CHECK(r.criterion == "monotone");
  CHECK(r.margin == doctest::Approx(0.075).epsilon(1e-6));

  r = robust_stability(tree_model(0.3));
  CHECK(r.verdict == Verdict::No);
  CHECK(r.margin == doctest::Approx(-0.025).epsilon(1e-6));

  // On the frontier the margin is zero and nothing can be concluded.
  r = robust_stability(dps(0.6, 0.3, 0.1));
  CHECK(r.verdict == Verdict::Inconclusive);
}

TEST_CASE("non-ergodic frozen chain gives a partial solution") {
  const auto s = solve_fluid(dps(0.5, 0.7, 0.5), {}, {1.0}, 5.0);
  CHECK(s.diverged);
  CHECK_FALSE(s.message.empty());
}

TEST_CASE("streaming limit sits on the right side of pi2(0)") {
  const double c = 0.01;
  const double rho2 = 20.0;
  // phibar_1(0+) for rho2 = 20: tiny, so almost any rho1 gives a positive limit.
  const double p0 = stream_phibar(0.0, rho2, c, StreamMode::Exact);
  const auto pos = stream_fluid(0.6, 1.0, rho2, c, 0.0, 40.0, StreamMode::Exact);
  CHECK(pos.final_state()[0] > 0.1);
  CHECK(std::abs(stream_phibar(pos.final_state()[0], rho2, c, StreamMode::Exact) - 0.6) < 1e-6);
  // Monotone approach from 0.
  for (std::size_t k = 1; k < pos.u.size(); ++k) CHECK(pos.u[k][0] >= pos.u[k - 1][0] - 1e-12);

  const double small = 0.5;  // pi2(0) = e^-0.5 is about 0.61
  const double p_small = stream_phibar(0.0, small, c, StreamMode::Exact);
  CHECK(p_small > 0.6);
  const auto zero = stream_fluid(0.55, 1.0, small, c, 0.5, 40.0, StreamMode::Exact);
  CHECK(zero.final_state()[0] == 0.0);
  CHECK(p0 < 0.6);

  const auto none = stream_fluid(0.0, 1.0, rho2, c, 0.0, 5.0, StreamMode::Exact);
  for (const auto& u : none.u) CHECK(u[0] == 0.0);
}

TEST_CASE("csv and report") {
  const auto s = work_conserving_fast_path(dps(0.5, 0.3, 0.1), {1.0}, 1.0);
  std::ostringstream os;
  write_csv(os, s);
  CHECK(os.str().rfind("t,u1,phibar_1,boundary_flags\n", 0) == 0);
  std::ostringstream rep;
  write_report(rep, find_equilibria(tree_model(0.3)));
  CHECK(rep.str().find("regime 1") != std::string::npos);
}

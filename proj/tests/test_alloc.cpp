#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "bwshare/alloc.hpp"
#include "bwshare/errors.hpp"

using namespace bwshare;

namespace {

PfSpec line_network(bool closed_form = true) {
  PfSpec pf;
  pf.incidence = {{1, 1, 0}, {1, 0, 1}};
  pf.capacity = {1, 1};
  pf.closed_form = closed_form;
  return pf;
}

double pf_objective(const std::vector<double>& w, const std::vector<double>& x,
                    const std::vector<double>& rates) {
  double f = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (x[i] > 0.0) f += w[i] * x[i] * std::log(rates[i]);
  }
  return f;
}

bool pf_feasible(const PfSpec& pf, const std::vector<double>& rates) {
  for (std::size_t l = 0; l < pf.capacity.size(); ++l) {
    double load = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) load += pf.incidence[l][i] * rates[i];
    if (load > pf.capacity[l] + 1e-12) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("dps shares") {
  const std::vector<double> w{1, 1, 1};
  auto r = dps(w, std::vector<double>{2, 3, 5}, 1.0);
  CHECK(r[0] == doctest::Approx(0.2));
  CHECK(r[1] == doctest::Approx(0.3));
  CHECK(r[2] == doctest::Approx(0.5));

  r = dps(std::vector<double>{0.3, 2, 7}, std::vector<double>{0, 0, 0}, 1.0);
  for (double v : r) CHECK(v == 0.0);

  // Frozen surge z1 = 1 with omega1 = 1 next to one flow of each stable class.
  r = dps(w, std::vector<double>{1.0, 1, 1}, 1.0);
  for (double v : r) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("pf on the two-link line") {
  const std::vector<double> w{1, 1, 1};
  const std::vector<double> x{1, 1, 1};
  for (bool closed : {true, false}) {
    const auto res = proportional_fair(w, x, line_network(closed));
    CHECK(res.rates[0] == doctest::Approx(1.0 / 3).epsilon(1e-8));
    CHECK(res.rates[1] == doctest::Approx(2.0 / 3).epsilon(1e-8));
    CHECK(res.rates[2] == doctest::Approx(2.0 / 3).epsilon(1e-8));
  }
  const auto zero = proportional_fair(w, std::vector<double>{0, 0, 0}, line_network());
  for (double v : zero.rates) CHECK(v == 0.0);
}

TEST_CASE("pf equals dps on a single link") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 5.0);
  PfSpec link;
  link.incidence = {{1, 1, 1}};
  link.capacity = {1.0};
  PfSpec iterative = link;
  iterative.closed_form = false;
  for (int k = 0; k < 200; ++k) {
    const std::vector<double> w{U(rng) + 0.1, U(rng) + 0.1, U(rng) + 0.1};
    const std::vector<double> x{U(rng), std::floor(U(rng)), std::floor(U(rng))};
    const auto d = dps(w, x, 1.0);
    const auto a = proportional_fair(w, x, link).rates;
    const auto b = proportional_fair(w, x, iterative).rates;
    for (int i = 0; i < 3; ++i) {
      CHECK(a[i] == doctest::Approx(d[i]).epsilon(1e-8));
      CHECK(std::abs(b[i] - d[i]) <= 1e-7);
    }
  }
}

TEST_CASE("pf optimum beats feasible perturbations") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.2, 3.0);
  std::normal_distribution<double> N(0.0, 1.0);
  for (bool closed : {true, false}) {
    const auto pf = line_network(closed);
    for (int k = 0; k < 50; ++k) {
      const std::vector<double> w{U(rng), U(rng), U(rng)};
      const std::vector<double> x{U(rng), U(rng), U(rng)};
      const auto r = proportional_fair(w, x, pf).rates;
      CHECK(pf_feasible(pf, r));
      const double f = pf_objective(w, x, r);
      for (int p = 0; p < 30; ++p) {
        std::vector<double> q = r;
        for (double& v : q) v = std::max(1e-9, v * (1.0 + 0.05 * N(rng)));
        if (!pf_feasible(pf, q)) continue;
        CHECK(pf_objective(w, x, q) <= f + 1e-7);
      }
    }
  }
}

TEST_CASE("pf rate totals invariant under joint weight scaling") {
  const std::vector<double> x{2, 1, 3};
  const auto base = proportional_fair(std::vector<double>{1, 2, 0.5}, x, line_network(false));
  const auto scaled = proportional_fair(std::vector<double>{7, 14, 3.5}, x, line_network(false));
  for (int i = 0; i < 3; ++i) CHECK(scaled.rates[i] == doctest::Approx(base.rates[i]).epsilon(1e-7));
}

TEST_CASE("tree allocation") {
  // Equal weights, unit counts: (1 + 1) * 0.4 < 1, so class 1 sits at c1.
  auto t = tree(1, 1, 1, 1, 0.4, 0.8);
  CHECK(t[0] == doctest::Approx(0.4));
  CHECK(t[1] == doctest::Approx(0.6));
  // Outside that set the ratio applies: r = (1, 2) gives 3 * 0.4 >= 1.
  t = tree(1, 2, 1, 1, 0.4, 0.8);
  CHECK(t[0] == doctest::Approx(1.0 / 3));
  t = tree(1, 9, 1, 1, 0.4, 0.8);
  CHECK(t[0] == doctest::Approx(0.2));
  // r1 = 0 is strict priority for class 2.
  t = tree(0, 1, 3, 2, 0.4, 0.8);
  CHECK(t[0] == doctest::Approx(0.2));
  t = tree(1, 1, 2, 0, 0.4, 0.8);
  CHECK(t[0] == doctest::Approx(0.4));
  CHECK(t[1] == 0.0);
  t = tree(1, 1, 0, 2, 0.4, 0.8);
  CHECK(t[0] == 0.0);
  CHECK(t[1] == doctest::Approx(0.8));
  t = tree(1, 1, 0, 0, 0.4, 0.8);
  CHECK(t[0] == 0.0);
  CHECK(t[1] == 0.0);
  // Class 1 limited by its own link.
  t = tree(10, 1, 1, 1, 0.4, 0.8);
  CHECK(t[0] == doctest::Approx(0.4));
  CHECK(t[1] == doctest::Approx(0.6));
}

TEST_CASE("stream elastic allocation and admission") {
  auto s = stream_elastic(1.0, 3.0, 0.0, 0.01);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == 0.0);
  s = stream_elastic(1.0, 0.0, 10.0, 0.01);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == doctest::Approx(0.1));
  s = stream_elastic(1.0, 0.5, 50.0, 0.01);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(stream_elastic(1.0, 1.0, 120.0, 0.01), InfeasibleState);

  CHECK(stream_admits(1.0, 0.5, 49, 0.01));
  CHECK_FALSE(stream_admits(1.0, 0.5, 50, 0.01));
  CHECK(streaming_capacity(0.5, 0.01) == 50);
  CHECK(streaming_capacity(0.0, 0.25) == 4);
  CHECK(streaming_capacity(0.99, 0.01) == 1);
  CHECK(streaming_capacity(1.0, 0.01) == 0);

  // Admitted states never exceed the link.
  for (double z : {0.05, 0.3, 0.77}) {
    const auto cap = streaming_capacity(z, 0.01);
    const auto r = stream_elastic(1.0, z, static_cast<double>(cap), 0.01);
    CHECK(r[0] + r[1] <= 1.0 + 1e-12);
  }
}

TEST_CASE("priority wrap zeroes the surge classes") {
  const auto inner = AllocationSpec{DpsSpec{1.0}};
  const auto psi = priority_wrap(inner, 1);
  const std::vector<double> w{1, 1, 1};
  auto r = allocate(psi, w, std::vector<double>{5, 1, 1});
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(0.5));
  CHECK(r[2] == doctest::Approx(0.5));
  r = allocate(psi, w, std::vector<double>{5, 0, 0});
  CHECK(r[0] == doctest::Approx(1.0));

  const auto tpsi = priority_wrap(AllocationSpec{TreeSpec{0.4, 0.8}}, 1);
  r = allocate(tpsi, std::vector<double>{1, 1}, std::vector<double>{3, 2});
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(0.8));
}

TEST_CASE("structural properties") {
  const std::vector<double> w3{1, 1, 1};
  const std::vector<double> w2{1, 1};
  CHECK(is_work_conserving(DpsSpec{1.0}, w3, sample_states(3, 1)));
  CHECK_FALSE(is_work_conserving(TreeSpec{0.4, 0.8}, w2, sample_states(2, 1)));
  CHECK_FALSE(is_work_conserving(StreamElasticSpec{0.01}, w2, sample_states(2, 1)));

  CHECK(is_monotone(DpsSpec{1.0}, w3, sample_states(3, 1, 6)));
  CHECK(is_monotone(TreeSpec{0.4, 0.8}, w2, sample_states(2, 1, 6)));
  CHECK(is_monotone(StreamElasticSpec{0.01}, w2, sample_states(2, 1, 6)));

  const std::vector<AllocationSpec> specs{DpsSpec{1.0}, AllocationSpec{line_network()},
                                          TreeSpec{0.4, 0.8}};
  for (const auto& spec : specs) {
    const std::size_t n = spec.dimension().value_or(3);
    const std::vector<double> w(n, 1.0);
    for (const auto& x : sample_states(n, 1, 5)) {
      CHECK(is_feasible(spec, allocate(spec, w, x)));
    }
  }
}

TEST_CASE("real surge coordinates extend the integer definition") {
  const std::vector<double> w{0.5, 1, 2};
  // Integer points agree with the hand formula, and nearby reals stay close.
  const auto a = allocate(DpsSpec{1.0}, w, std::vector<double>{2.0, 1, 1});
  CHECK(a[0] == doctest::Approx(1.0 / 4));
  const auto b = allocate(DpsSpec{1.0}, w, std::vector<double>{2.0 + 1e-6, 1, 1});
  CHECK(std::abs(a[0] - b[0]) < 1e-6);
  const auto t1 = tree(1, 1, 1.0, 1.0, 0.4, 0.8);
  const auto t2 = tree(1, 1, 1.0 + 1e-7, 1.0, 0.4, 0.8);
  CHECK(std::abs(t1[0] - t2[0]) < 1e-6);
}

TEST_CASE("admission only for the streaming class") {
  const std::vector<double> w{1, 1};
  const AllocationSpec se = StreamElasticSpec{0.01};
  CHECK(has_admission_control(se));
  CHECK_FALSE(has_admission_control(DpsSpec{}));
  CHECK(admits(se, w, std::vector<double>{0.5, 49}, 1));
  CHECK_FALSE(admits(se, w, std::vector<double>{0.5, 50}, 1));
  CHECK(admits(se, w, std::vector<double>{0.5, 50}, 0));
}

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bwshare/errors.hpp"
#include "bwshare/fluid.hpp"
#include "bwshare/stationary.hpp"

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

NetworkModel stream_model(double lambda2, double c) {
  NetworkModel m;
  m.classes = {{0.6, 1.0, 1.0, true}, {lambda2, 1.0, 1.0, false}};
  m.allocation = StreamElasticSpec{c};
  return m;
}

// Unnormalized detailed-balance weights prod lambda / death(k).
std::vector<double> birth_death_by_hand(double lambda, const std::vector<double>& deaths) {
  std::vector<double> w{1.0};
  for (double d : deaths) w.push_back(w.back() * lambda / d);
  double s = 0.0;
  for (double v : w) s += v;
  for (double& v : w) v /= s;
  return w;
}

}  // namespace

TEST_CASE("one-dimensional examples") {
  auto pi = stationary_1d(1.0, [](std::int64_t) { return 1.0; }, 1);
  REQUIRE(pi.size() == 2);
  CHECK(pi.prob[0] == doctest::Approx(0.5));
  CHECK(pi.prob[1] == doctest::Approx(0.5));

  pi = stationary_1d(1.0, [](std::int64_t k) { return k == 1 ? 1.0 : 2.0; }, 2);
  CHECK(pi.prob[0] == doctest::Approx(0.4));
  CHECK(pi.prob[1] == doctest::Approx(0.4));
  CHECK(pi.prob[2] == doctest::Approx(0.2));

  // Unbounded support: geometric law of an M/M/1 queue.
  pi = stationary_1d(0.3, [](std::int64_t) { return 1.0; });
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(pi.prob[k] == doctest::Approx(0.7 * std::pow(0.3, k)).epsilon(1e-9));
  }
  CHECK(pi.tail_mass <= 1e-10);
}

TEST_CASE("one-dimensional against hand detailed balance") {
  auto death = [](std::int64_t k) { return 0.5 + 0.25 * static_cast<double>(k); };
  const auto pi = stationary_1d(0.9, death, 12);
  std::vector<double> d;
  for (int k = 1; k <= 12; ++k) d.push_back(death(k));
  const auto hand = birth_death_by_hand(0.9, d);
  for (std::size_t k = 0; k < hand.size(); ++k) CHECK(pi.prob[k] == doctest::Approx(hand[k]).epsilon(1e-12));
}

TEST_CASE("truncated Poisson for the streaming class") {
  const double c = 0.01;
  const double rho2 = 20.0;
  const auto m = stream_model(rho2 * c, c);
  for (double z : {0.05, 0.4, 0.8}) {
    const auto pi = stationary(m, std::vector<double>{z});
    const auto cap = streaming_capacity(z, c);
    REQUIRE(pi.box[0] == cap);
    double norm = 0.0;
    for (std::int64_t k = 0; k <= cap; ++k) norm += std::exp(k * std::log(rho2) - std::lgamma(k + 1.0));
    for (std::int64_t k = 0; k <= cap; k += 7) {
      const double oracle = std::exp(k * std::log(rho2) - std::lgamma(k + 1.0)) / norm;
      CHECK(pi.prob[static_cast<std::size_t>(k)] == doctest::Approx(oracle).epsilon(1e-10));
    }
    // phibar agrees with the dedicated streaming formula.
    CHECK(averaged_rate(m, std::vector<double>{z})[0] ==
          doctest::Approx(stream_phibar(z, rho2, c, StreamMode::Exact)).epsilon(1e-10));
  }
}

TEST_CASE("decoupled chain is a product of one-dimensional laws") {
  FrozenChain chain;
  chain.z = {1.0};
  chain.arrival = {0.4, 0.7};
  chain.death = [](std::span<const std::int64_t> y) {
    return std::vector<double>{y[0] > 0 ? 1.0 : 0.0, 1.5 * static_cast<double>(y[1])};
  };
  chain.load_hint = {0.4, 0.5};
  const auto pi = stationary_multi(chain, 1e-10);
  const auto a = stationary_1d(0.4, [](std::int64_t) { return 1.0; });
  const auto b = stationary_1d(0.7, [](std::int64_t k) { return 1.5 * static_cast<double>(k); });
  for (std::int64_t i = 0; i < 5; ++i) {
    for (std::int64_t j = 0; j < 5; ++j) {
      const std::vector<std::int64_t> y{i, j};
      CHECK(pi.at(y) == doctest::Approx(a.prob[i] * b.prob[j]).epsilon(1e-7));
    }
  }
  CHECK(pi.residual <= 1e-10);
}

TEST_CASE("DPS with one stable class reduces to a birth-death chain") {
  NetworkModel m;
  m.classes = {{0.5, 1.0, 1.0, true}, {0.4, 1.0, 1.0, false}};
  m.allocation = DpsSpec{1.0};
  const double z = 0.7;
  const auto pi = stationary(m, std::vector<double>{z});
  std::vector<double> d;
  for (int k = 1; k <= 30; ++k) d.push_back(k / (z + k));
  const auto hand = birth_death_by_hand(0.4, d);
  for (std::size_t k = 0; k < 10; ++k) CHECK(pi.prob[k] == doctest::Approx(hand[k]).epsilon(1e-8));
}

TEST_CASE("rate conservation for stable classes") {
  const double tol = 1e-9;
  std::vector<NetworkModel> models{dps(0.5, 0.3, 0.1), tree_model(0.3), stream_model(0.2, 0.05)};
  for (const auto& m : models) {
    for (double z : {0.05, 0.3, 1.0, 2.5}) {
      const auto phi = averaged_rate(m, std::vector<double>{z}, tol);
      for (std::size_t j = 1; j < m.size(); ++j) {
        const auto& cl = m.classes[j];
        if (has_admission_control(m.allocation)) {
          // Blocking removes the lost part of the arrivals.
          CHECK(cl.service_rate * phi[j] <= cl.arrival_rate + 10 * tol);
        } else {
          CHECK(std::abs(cl.service_rate * phi[j] - cl.arrival_rate) <= 10 * tol);
        }
      }
    }
  }
}

TEST_CASE("work-conserving identity for random DPS") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double tol = 1e-9;
  for (int draw = 0; draw < 20; ++draw) {
    const double r2 = 0.6 * U(rng);
    const double r3 = (0.9 - r2) * U(rng);
    const auto m = dps(0.5, r2, r3);
    const double z = 0.05 + 3.0 * U(rng);
    const auto phi = averaged_rate(m, std::vector<double>{z}, tol);
    CHECK(std::abs(phi[0] - (1.0 - r2 - r3)) <= 10 * tol);
  }
}

TEST_CASE("averaged rates are monotone in z") {
  const std::vector<NetworkModel> models{dps(0.5, 0.3, 0.1), tree_model(0.3),
                                         stream_model(0.2, 0.01)};
  for (const auto& m : models) {
    const auto base = averaged_rate(m, std::vector<double>{0.0});
    auto prev = base;
    for (double z = 0.05; z <= 0.95; z += 0.05) {
      const auto cur = averaged_rate(m, std::vector<double>{z});
      CHECK(cur[0] >= base[0] - 1e-9);
      for (std::size_t j = 1; j < m.size(); ++j) CHECK(cur[j] <= prev[j] + 1e-9);
      prev = cur;
    }
  }
}

TEST_CASE("streaming phibar at 0+ tends to e^-rho2 for small c") {
  const double rho2 = 0.2;
  const double c = 1e-4;
  const auto m = stream_model(rho2 * c, c);
  CHECK(averaged_rate(m, std::vector<double>{0.0})[0] == doctest::Approx(std::exp(-rho2)).epsilon(1e-6));
}

TEST_CASE("drift vanishes where arrivals match phibar") {
  const auto m = tree_model(0.3);
  const auto rep = find_equilibria(m);
  REQUIRE_FALSE(rep.equilibria.empty());
  for (const auto& e : rep.equilibria) {
    CHECK(std::abs(drift(m, e.z)[0]) <= 1e-8);
  }
}

TEST_CASE("a non-ergodic frozen chain is reported") {
  // The stable classes alone overload the link.
  const auto m = dps(0.5, 0.7, 0.5);
  CHECK_THROWS_AS(stationary(m, std::vector<double>{1.0}), StationaryDivergence);
}

TEST_CASE("residual and normalization") {
  const auto pi = stationary(dps(0.5, 0.3, 0.1), std::vector<double>{0.8}, 1e-10);
  double s = 0.0;
  for (double p : pi.prob) s += p;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pi.residual <= 1e-10);
  CHECK(pi.tail_mass <= 1e-10);
}

TEST_CASE("cache snaps to its grid") {
  const auto m = dps(0.5, 0.3, 0.1);
  AveragedRateCache cache(1e-3);
  const auto a = cache.get(m, std::vector<double>{0.5001}, 1e-9);
  const auto b = cache.get(m, std::vector<double>{0.5002}, 1e-9);
  CHECK(a == b);
  CHECK(cache.size() == 1);
}

TEST_CASE("csv header") {
  const auto pi = stationary(dps(0.5, 0.3, 0.1), std::vector<double>{0.8});
  std::ostringstream os;
  write_csv(os, pi, 1);
  CHECK(os.str().rfind("x2,x3,probability\n", 0) == 0);
}

#include <doctest.h>

#include <cmath>

#include "bwshare/model.hpp"
#include "bwshare/scenario.hpp"

using namespace bwshare;

namespace {

NetworkModel dps3() {
  NetworkModel m;
  m.classes = {{0.5, 1.0, 1.0, true}, {0.3, 1.0, 1.0, false}, {0.1, 1.0, 1.0, false}};
  m.allocation = DpsSpec{1.0};
  return m;
}

bool mentions(const std::vector<Violation>& v, const std::string& field) {
  for (const auto& x : v) {
    if (x.field.find(field) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("validate") {
  CHECK(validate(dps3()).empty());

  auto m = dps3();
  m.classes[1].service_rate = 0.0;
  const auto v = validate(m);
  REQUIRE_FALSE(v.empty());
  CHECK(mentions(v, "classes[2].mu"));

  m = dps3();
  for (auto& c : m.classes) c.is_surge = true;
  CHECK_FALSE(validate(m).empty());

  m = dps3();
  m.classes[0].is_surge = false;
  m.classes[2].is_surge = true;  // surge classes must come first
  CHECK_FALSE(validate(m).empty());

  m = dps3();
  m.classes[2].arrival_rate = -0.1;
  CHECK_FALSE(validate(m).empty());
}

TEST_CASE("tree shape checks") {
  NetworkModel m;
  m.classes = {{0.3, 1.0, 1.0, true}, {0.5, 1.0, 1.0, false}};
  m.allocation = TreeSpec{0.4, 0.8};
  CHECK(validate(m).empty());
  m.allocation = TreeSpec{0.1, 0.2};  // c1 + c2 < 1
  CHECK_FALSE(validate(m).empty());
  m.classes.push_back({0.1, 1.0, 1.0, false});
  m.allocation = TreeSpec{0.4, 0.8};
  CHECK_FALSE(validate(m).empty());
}

TEST_CASE("total load is the sum of class loads") {
  const auto m = dps3();
  double rho = 0.0;
  for (const auto& c : m.classes) rho += c.arrival_rate / c.service_rate;
  CHECK(m.total_load() == rho);
  CHECK(m.surge_count() == 1);
}

TEST_CASE("profile") {
  TrafficProfile p({{{0.0, 0.0}, {1.0, 2.0}, {3.0, 3.0}}});
  CHECK(p.cumulative(0, 0.5, 0.0) == doctest::Approx(1.0));
  CHECK(p.slope(0, 0.5, 0.0) == doctest::Approx(2.0));
  CHECK(p.slope(0, 1.0, 0.0) == doctest::Approx(0.5));
  CHECK(p.slope(0, 10.0, 0.0) == doctest::Approx(0.5));
  CHECK(p.cumulative(0, 5.0, 0.0) == doctest::Approx(4.0));
  CHECK(p.next_change(0.5) == 1.0);
  CHECK(std::isinf(p.next_change(3.0)));
  // No curve: the constant arrival rate.
  CHECK(p.slope(1, 2.0, 0.7) == 0.7);

  auto m = dps3();
  TrafficProfile decreasing({{{0.0, 1.0}, {1.0, 0.5}}});
  CHECK_FALSE(validate(m, decreasing).empty());
}

TEST_CASE("model round-trips through the config format") {
  Scenario s;
  s.model = dps3();
  s.model.classes[0].weight = 2.5;
  CHECK(parse_scenario(to_json_string(s)).model == s.model);

  PfSpec pf;
  pf.incidence = {{1, 1, 0}, {1, 0, 1}};
  pf.capacity = {1, 0.75};
  s.model.allocation = pf;
  CHECK(parse_scenario(to_json_string(s)).model == s.model);

  s.model.allocation = priority_wrap(TreeSpec{0.4, 0.8}, 1);
  s.model.classes.pop_back();
  CHECK(parse_scenario(to_json_string(s)).model == s.model);
}

TEST_CASE("state flattening") {
  State st{{0.25}, {3, 4}};
  const auto f = st.flat();
  CHECK(f == std::vector<double>{0.25, 3.0, 4.0});
}

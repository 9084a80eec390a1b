#include "bwshare/alloc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bwshare/errors.hpp"

namespace bwshare {

namespace {

constexpr double kCheckTol = 1e-9;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_line_incidence(const PfSpec& spec) {
  const std::vector<std::vector<double>> line{{1, 1, 0}, {1, 0, 1}};
  return spec.incidence == line;
}

// Two links, route 1 over both, route 2 on link 1, route 3 on link 2.
// The optimum in phi_1 is the root of
//   v1/p - v2/(c1-p) - v3/(c2-p) = 0
// on (0, U] where U = min over the links that bind phi_1 alone.
std::vector<double> pf_line(std::span<const double> v, double c1, double c2) {
  std::vector<double> rates(3, 0.0);
  if (v[0] <= 0.0) {
    rates[1] = v[1] > 0.0 ? c1 : 0.0;
    rates[2] = v[2] > 0.0 ? c2 : 0.0;
    return rates;
  }
  const double upper = std::min(c1, c2);
  auto slope = [&](double p) {
    double s = v[0] / p;
    if (v[1] > 0.0) s -= v[1] / (c1 - p);
    if (v[2] > 0.0) s -= v[2] / (c2 - p);
    return s;
  };
  double p1;
  const bool open_top = (v[1] > 0.0 && c1 <= upper) || (v[2] > 0.0 && c2 <= upper);
  if (!open_top && slope(upper) >= 0.0) {
    p1 = upper;
  } else {
    double lo = 0.0;
    double hi = upper;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * upper; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (slope(mid) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    p1 = 0.5 * (lo + hi);
  }
  rates[0] = p1;
  rates[1] = v[1] > 0.0 ? c1 - p1 : 0.0;
  rates[2] = v[2] > 0.0 ? c2 - p1 : 0.0;
  return rates;
}

std::vector<double> link_loads(const PfSpec& spec, std::span<const double> rates) {
  std::vector<double> load(spec.capacity.size(), 0.0);
  for (std::size_t l = 0; l < load.size(); ++l) {
    for (std::size_t i = 0; i < rates.size(); ++i) {
      load[l] += spec.incidence[l][i] * rates[i];
    }
  }
  return load;
}

std::vector<double> zero_surge(std::span<const double> x, std::size_t surge_count) {
  std::vector<double> out(x.begin(), x.end());
  const bool stable_busy =
      std::any_of(x.begin() + static_cast<std::ptrdiff_t>(std::min(surge_count, x.size())),
                  x.end(), [](double v) { return v > 0.0; });
  if (stable_busy) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(surge_count), 0.0);
  }
  return out;
}

}  // namespace

bool PrioritySpec::operator==(const PrioritySpec& o) const {
  if (surge_count != o.surge_count) return false;
  if (!inner || !o.inner) return inner == o.inner;
  return *inner == *o.inner;
}

std::string AllocationSpec::kind() const {
  return std::visit(overloaded{[](const DpsSpec&) { return std::string("dps"); },
                               [](const PfSpec&) { return std::string("proportional_fair"); },
                               [](const TreeSpec&) { return std::string("tree"); },
                               [](const StreamElasticSpec&) {
                                 return std::string("stream_elastic");
                               },
                               [](const PrioritySpec&) { return std::string("priority"); }},
                    variant);
}

std::optional<std::size_t> AllocationSpec::dimension() const {
  return std::visit(
      overloaded{[](const DpsSpec&) -> std::optional<std::size_t> { return std::nullopt; },
                 [](const PfSpec& s) -> std::optional<std::size_t> {
                   if (s.incidence.empty()) return std::nullopt;
                   return s.incidence.front().size();
                 },
                 [](const TreeSpec&) -> std::optional<std::size_t> { return 2; },
                 [](const StreamElasticSpec&) -> std::optional<std::size_t> { return 2; },
                 [](const PrioritySpec& s) -> std::optional<std::size_t> {
                   return s.inner ? s.inner->dimension() : std::nullopt;
                 }},
      variant);
}

double AllocationSpec::reference_capacity() const {
  return std::visit(
      overloaded{[](const DpsSpec& s) { return s.capacity; },
                 [](const PfSpec& s) {
                   return s.capacity.empty()
                              ? 0.0
                              : *std::max_element(s.capacity.begin(), s.capacity.end());
                 },
                 [](const TreeSpec&) { return 1.0; },
                 [](const StreamElasticSpec&) { return 1.0; },
                 [](const PrioritySpec& s) {
                   return s.inner ? s.inner->reference_capacity() : 0.0;
                 }},
      variant);
}

std::vector<double> dps(std::span<const double> weights, std::span<const double> x,
                        double capacity) {
  std::vector<double> rates(x.size(), 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mass += weights[i] * x[i];
  if (mass <= 0.0) return rates;
  for (std::size_t i = 0; i < x.size(); ++i) {
    rates[i] = x[i] > 0.0 ? capacity * weights[i] * x[i] / mass : 0.0;
  }
  return rates;
}

PfResult proportional_fair(std::span<const double> weights, std::span<const double> x,
                           const PfSpec& spec) {
  const std::size_t routes = x.size();
  const std::size_t links = spec.capacity.size();
  PfResult result;
  result.rates.assign(routes, 0.0);

  std::vector<double> v(routes, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < routes; ++i) {
    v[i] = x[i] > 0.0 ? weights[i] * x[i] : 0.0;
    total += v[i];
  }
  if (total <= 0.0) return result;

  if (spec.closed_form && links == 1) {
    for (std::size_t i = 0; i < routes; ++i) {
      if (v[i] > 0.0) result.rates[i] = spec.capacity[0] * v[i] / (spec.incidence[0][i] * total);
    }
    return result;
  }
  if (spec.closed_form && is_line_incidence(spec)) {
    result.rates = pf_line(v, spec.capacity[0], spec.capacity[1]);
    return result;
  }

  // Dual prices with multiplicative updates p_l <- p_l * load_l / C_l.
  std::vector<double> price(links, 0.0);
  for (std::size_t l = 0; l < links; ++l) {
    for (std::size_t i = 0; i < routes; ++i) price[l] += spec.incidence[l][i] * v[i];
    price[l] /= spec.capacity[l];
  }
  auto rates_at = [&](const std::vector<double>& p) {
    std::vector<double> r(routes, 0.0);
    for (std::size_t i = 0; i < routes; ++i) {
      if (v[i] <= 0.0) continue;
      double d = 0.0;
      for (std::size_t l = 0; l < links; ++l) d += spec.incidence[l][i] * p[l];
      r[i] = v[i] / d;
    }
    return r;
  };

  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < spec.max_iterations; ++it) {
    result.rates = rates_at(price);
    const auto load = link_loads(spec, result.rates);
    residual = 0.0;
    for (std::size_t l = 0; l < links; ++l) {
      residual = std::max(residual, (load[l] - spec.capacity[l]) / spec.capacity[l]);
      residual = std::max(residual, price[l] * (spec.capacity[l] - load[l]) / total);
    }
    if (residual <= spec.tol) break;
    for (std::size_t l = 0; l < links; ++l) price[l] *= load[l] / spec.capacity[l];
  }
  result.iterations = it;
  result.residual = residual;
  if (residual > spec.tol) {
    throw SolverFailure("proportional fair: no convergence after " +
                            std::to_string(spec.max_iterations) + " iterations",
                        residual);
  }
  // Pull back onto the polytope; the overshoot is below tol.
  const auto load = link_loads(spec, result.rates);
  double excess = 1.0;
  for (std::size_t l = 0; l < links; ++l) excess = std::max(excess, load[l] / spec.capacity[l]);
  for (double& r : result.rates) r /= excess;
  return result;
}

std::array<double, 2> tree(double r1, double r2, double x1, double x2, double c1,
                           double c2) {
  if (x1 <= 0.0 && x2 <= 0.0) return {0.0, 0.0};
  if (x2 <= 0.0) return {c1, 0.0};
  if (x1 <= 0.0) return {0.0, std::min(c2, 1.0)};
  const double a = r1 * x1;
  const double b = r2 * x2;
  double phi1;
  // Strict inequality: the boundary of S_1 belongs to the max branch.
  if ((a + b) * c1 < a) {
    phi1 = c1;
  } else {
    phi1 = std::max(a / (a + b), 1.0 - c2);
  }
  return {phi1, 1.0 - phi1};
}

std::int64_t streaming_capacity(double z, double c) {
  if (z >= 1.0) return 0;
  return static_cast<std::int64_t>(std::floor((1.0 - z) / c + 1e-9));
}

bool stream_admits(double r1, double x1, double x2, double c) {
  const double z = x1 > 0.0 ? r1 * x1 : 0.0;
  return x2 + 1.0 <= static_cast<double>(streaming_capacity(z, c));
}

std::array<double, 2> stream_elastic(double r1, double x1, double x2, double c) {
  const double streaming = c * x2;
  if (streaming > 1.0 + kCheckTol) {
    throw InfeasibleState("streaming flows exceed the link: c*x2 = " +
                          std::to_string(streaming));
  }
  if (x1 <= 0.0) return {0.0, streaming};
  const double a = r1 * x1;
  const double share = a / (a + streaming);
  return {std::min(share, std::max(0.0, 1.0 - streaming)), streaming};
}

AllocationSpec priority_wrap(AllocationSpec inner, std::size_t surge_count) {
  return PrioritySpec{std::make_shared<const AllocationSpec>(std::move(inner)), surge_count};
}

std::vector<double> allocate(const AllocationSpec& spec, std::span<const double> weights,
                             std::span<const double> x) {
  return std::visit(
      overloaded{
          [&](const DpsSpec& s) { return dps(weights, x, s.capacity); },
          [&](const PfSpec& s) { return proportional_fair(weights, x, s).rates; },
          [&](const TreeSpec& s) {
            const auto r = tree(weights[0], weights[1], x[0], x[1], s.c1, s.c2);
            return std::vector<double>{r[0], r[1]};
          },
          [&](const StreamElasticSpec& s) {
            const auto r = stream_elastic(weights[0], x[0], x[1], s.c);
            return std::vector<double>{r[0], r[1]};
          },
          [&](const PrioritySpec& s) {
            const auto masked = zero_surge(x, s.surge_count);
            return allocate(*s.inner, weights, masked);
          }},
      spec.variant);
}

bool has_admission_control(const AllocationSpec& spec) {
  if (std::holds_alternative<StreamElasticSpec>(spec.variant)) return true;
  if (const auto* p = std::get_if<PrioritySpec>(&spec.variant)) {
    return has_admission_control(*p->inner);
  }
  return false;
}

bool admits(const AllocationSpec& spec, std::span<const double> weights,
            std::span<const double> x, std::size_t cls) {
  if (const auto* s = std::get_if<StreamElasticSpec>(&spec.variant)) {
    if (cls != 1) return true;
    return stream_admits(weights[0], x[0], x[1], s->c);
  }
  if (const auto* p = std::get_if<PrioritySpec>(&spec.variant)) {
    return admits(*p->inner, weights, x, cls);
  }
  return true;
}

std::vector<std::vector<double>> sample_states(std::size_t n, std::size_t surge_count,
                                               std::size_t side) {
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    std::size_t k = 0;
    while (k < n && ++idx[k] == side) idx[k++] = 0;
    if (k == n) break;
    out.emplace_back(idx.begin(), idx.end());
  }
  // Fractional surge values check the real-valued extension.
  const std::size_t base = out.size();
  for (std::size_t s = 0; s < base; s += 7) {
    auto st = out[s];
    for (std::size_t i = 0; i < surge_count && i < n; ++i) st[i] += 0.37;
    out.push_back(std::move(st));
  }
  return out;
}

bool is_work_conserving(const AllocationSpec& spec, std::span<const double> weights,
                        const std::vector<std::vector<double>>& samples) {
  const double target = spec.reference_capacity();
  for (const auto& x : samples) {
    if (std::all_of(x.begin(), x.end(), [](double v) { return v <= 0.0; })) continue;
    if (has_admission_control(spec)) {
      bool ok = true;
      try {
        allocate(spec, weights, x);
      } catch (const InfeasibleState&) {
        ok = false;
      }
      if (!ok) continue;
    }
    const auto r = allocate(spec, weights, x);
    const double sum = std::accumulate(r.begin(), r.end(), 0.0);
    if (std::abs(sum - target) > kCheckTol) return false;
  }
  return true;
}

bool is_monotone(const AllocationSpec& spec, std::span<const double> weights,
                 const std::vector<std::vector<double>>& samples) {
  for (const auto& x : samples) {
    std::vector<double> base;
    try {
      base = allocate(spec, weights, x);
    } catch (const InfeasibleState&) {
      continue;
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
      auto up = x;
      up[j] += 1.0;
      std::vector<double> moved;
      try {
        moved = allocate(spec, weights, up);
      } catch (const InfeasibleState&) {
        continue;
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (i == j || x[i] <= 0.0) continue;
        if (moved[i] > base[i] + kCheckTol) return false;
      }
    }
  }
  return true;
}

bool is_feasible(const AllocationSpec& spec, std::span<const double> rates, double tol) {
  if (std::any_of(rates.begin(), rates.end(), [&](double r) { return r < -tol; })) {
    return false;
  }
  const double sum = std::accumulate(rates.begin(), rates.end(), 0.0);
  return std::visit(
      overloaded{[&](const DpsSpec& s) { return sum <= s.capacity + tol; },
                 [&](const PfSpec& s) {
                   const auto load = link_loads(s, rates);
                   for (std::size_t l = 0; l < load.size(); ++l) {
                     if (load[l] > s.capacity[l] + tol) return false;
                   }
                   return true;
                 },
                 [&](const TreeSpec& s) {
                   return sum <= 1.0 + tol && rates[0] <= s.c1 + tol && rates[1] <= s.c2 + tol;
                 },
                 [&](const StreamElasticSpec&) { return sum <= 1.0 + tol; },
                 [&](const PrioritySpec& s) { return is_feasible(*s.inner, rates, tol); }},
      spec.variant);
}

}  // namespace bwshare

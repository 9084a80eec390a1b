#include "bwshare/qos.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

#include "bwshare/alloc.hpp"
#include "bwshare/errors.hpp"
#include "bwshare/fluid.hpp"

namespace bwshare {

namespace {

void check_load(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ValidationError("Erlang-B: load must be > 0");
}

}  // namespace

double erlang_b(std::int64_t n, double rho) {
  check_load(rho);
  if (n < 0) throw ValidationError("Erlang-B: circuits must be >= 0");
  double b = 1.0;
  for (std::int64_t k = 1; k <= n; ++k) b = rho * b / (static_cast<double>(k) + rho * b);
  return b;
}

double erlang_b_direct(std::int64_t n, double rho) {
  check_load(rho);
  if (n < 0) throw ValidationError("Erlang-B: circuits must be >= 0");
  // Terms relative to the largest one, in log space.
  std::vector<double> log_terms(static_cast<std::size_t>(n) + 1);
  double top = -std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j <= n; ++j) {
    const double lt = static_cast<double>(j) * std::log(rho) - std::lgamma(static_cast<double>(j) + 1.0);
    log_terms[static_cast<std::size_t>(j)] = lt;
    top = std::max(top, lt);
  }
  double sum = 0.0;
  for (double lt : log_terms) sum += std::exp(lt - top);
  return std::exp(log_terms.back() - top) / sum;
}

std::int64_t erlang_b_inverse(double p_m, double rho) {
  check_load(rho);
  if (!(p_m > 0.0 && p_m < 1.0)) throw ValidationError("Erlang-B inverse: p_m must lie in (0,1)");
  if (erlang_b(0, rho) <= p_m) return 0;
  std::int64_t hi = 1;
  while (erlang_b(hi, rho) > p_m) hi *= 2;
  std::int64_t lo = hi / 2;  // erlang_b(lo) > p_m
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (erlang_b(mid, rho) <= p_m) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

std::int64_t max_streaming_flows(double z1, double c) {
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("c must lie in (0,1)");
  if (!(z1 >= 0.0)) throw ValidationError("z1 must be >= 0");
  return streaming_capacity(z1, c);
}

SupResult u1_sup(double lambda1, double mu1, const StreamParams& s, double u0) {
  if (!(lambda1 >= 0.0) || !(mu1 > 0.0)) throw ValidationError("u1_sup: need lambda1 >= 0, mu1 > 0");
  if (!(u0 >= 0.0)) throw ValidationError("u1_sup: u0 must be >= 0");
  if (!(s.weight > 0.0)) throw ValidationError("u1_sup: weight must be > 0");
  auto phibar = [&](double z) { return stream_phibar(z, s.rho2, s.c, StreamMode::Exact); };
  const double rho1 = lambda1 / mu1;
  SupResult out;

  out.monotone_checked = true;
  double prev = phibar(0.0);
  for (int k = 1; k <= 400; ++k) {
    const double v = phibar(static_cast<double>(k) / 400.0);
    if (v < prev - 1e-12) out.monotone_checked = false;
    prev = v;
  }

  const double z0 = s.weight * u0;
  if (rho1 <= phibar(z0)) {
    out.value = z0;
    out.from_initial = true;
    return out;
  }
  // phibar reaches 1 once no streaming flow fits; beyond that nothing changes.
  if (rho1 >= 1.0) {
    out.saturated = true;
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  double lo = z0;
  double hi = 1.0;
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    if (phibar(mid) < rho1) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.value = 0.5 * (lo + hi);
  return out;
}

double qos_rescale(const QosTarget& target, double ubar) {
  if (!(ubar > 0.0) || !std::isfinite(ubar)) throw ValidationError("qos_rescale: ubar must be finite and > 0");
  if (!(target.c > 0.0 && target.c < 1.0)) throw ValidationError("qos_rescale: c must lie in (0,1)");
  const auto n = erlang_b_inverse(target.p_m, target.rho2);
  const double threshold = 1.0 - target.c * static_cast<double>(n);
  if (threshold <= 0.0) {
    throw ValidationError("qos_rescale: target infeasible, " + std::to_string(n) +
                          " circuits of size c exceed the link");
  }
  return threshold / ubar;
}

QosReport qos_report(double lambda1, double mu1, const QosTarget& target, double weight,
                     double u0) {
  QosReport r;
  r.target = target;
  r.lambda1 = lambda1;
  r.mu1 = mu1;
  r.weight = weight;
  r.u0 = u0;
  r.circuits = erlang_b_inverse(target.p_m, target.rho2);
  r.threshold = 1.0 - target.c * static_cast<double>(r.circuits);
  const StreamParams s{target.rho2, target.c, weight};
  r.ubar = u1_sup(lambda1, mu1, s, u0);
  if (r.ubar.saturated) return r;
  r.factor = qos_rescale(target, r.ubar.value);
  const StreamParams scaled{target.rho2, target.c, weight * r.factor};
  r.rescaled = u1_sup(lambda1, mu1, scaled, u0);
  r.post_check = !r.rescaled.saturated && r.rescaled.value <= r.threshold + 1e-6;
  return r;
}

void write_report(std::ostream& os, const QosReport& r) {
  os << std::setprecision(10);
  os << "p_m " << r.target.p_m << '\n'
     << "rho2 " << r.target.rho2 << '\n'
     << "c " << r.target.c << '\n'
     << "circuits " << r.circuits << '\n'
     << "threshold " << r.threshold << '\n';
  if (r.ubar.saturated) {
    os << "ubar saturated\n";
    return;
  }
  os << "ubar " << r.ubar.value << (r.ubar.from_initial ? " initial" : " limit") << '\n'
     << "factor " << r.factor << '\n'
     << "rescaled_ubar " << r.rescaled.value << '\n'
     << "post_check " << (r.post_check ? "pass" : "fail") << '\n';
}

}  // namespace bwshare

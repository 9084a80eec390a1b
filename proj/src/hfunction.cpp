#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>

#include "bwshare/errors.hpp"
#include "bwshare/fluid.hpp"

namespace bwshare {

namespace {

void check_rho(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ValidationError("H: rho2 must be > 0");
}

constexpr double kEps = std::numeric_limits<double>::epsilon();

}  // namespace

double h_forward(std::size_t n, double rho, double max_error) {
  check_rho(rho);
  double h = std::exp(-rho);
  double bound = kEps * h;
  for (std::size_t k = 0; k < n; ++k) {
    const double next = static_cast<double>(k + 1) / rho * (1.0 - h);
    const double next_bound = static_cast<double>(k + 1) / rho * bound + kEps;
    if (!(next > 0.0 && next < 1.0) || next_bound > max_error) {
      throw NumericalInstability("H forward recursion lost accuracy after index " +
                                     std::to_string(k),
                                 k);
    }
    h = next;
    bound = next_bound;
  }
  return h;
}

double h_recursion(std::size_t n, double rho) {
  check_rho(rho);
  if (n == 0) return std::exp(-rho);
  // For large z, H(z) = z / (z + rho) + O(1/z^2); the backward recursion
  // damps the starting error by rho^k / k!-like factors.
  const std::size_t top = n + 50 + static_cast<std::size_t>(std::ceil(4.0 * rho));
  double h = static_cast<double>(top) / (static_cast<double>(top) + rho);
  for (std::size_t k = top; k-- > n;) h = 1.0 - rho * h / static_cast<double>(k + 1);
  return h;
}

double h_quadrature(double z, double rho) {
  check_rho(rho);
  if (!(z >= 0.0) || !std::isfinite(z)) throw ValidationError("H: z must be finite and >= 0");
  const double base = std::exp(-rho);
  if (z == 0.0) return base;
  boost::math::quadrature::tanh_sinh<double> integrator;
  auto f = [&](double t) {
    if (t <= 0.0) return 0.0;
    return std::pow(t, z - 1.0) * base * std::expm1(rho * t);
  };
  const double integral = integrator.integrate(f, 0.0, 1.0, 1e-14);
  return base + z * integral;
}

HTable h_table(std::size_t n_max, double rho) {
  check_rho(rho);
  HTable table;
  double h = std::exp(-rho);
  double bound = kEps * h;
  bool stable = true;
  for (std::size_t n = 0; n <= n_max; ++n) {
    HRow row;
    row.n = n;
    if (n > 0 && stable) {
      const double next = static_cast<double>(n) / rho * (1.0 - h);
      bound = static_cast<double>(n) / rho * bound + kEps;
      if (next > 0.0 && next < 1.0 && bound <= 1e-8) {
        h = next;
      } else {
        stable = false;
      }
    }
    if (stable) table.last_stable = n;
    row.forward = stable ? h : std::numeric_limits<double>::quiet_NaN();
    row.recursion = h_recursion(n, rho);
    row.quadrature = h_quadrature(static_cast<double>(n), rho);
    table.rows.push_back(row);
  }
  return table;
}

double stream_phibar(double z, double rho2, double c, StreamMode mode) {
  check_rho(rho2);
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("stream: c must lie in (0,1)");
  if (!(z >= 0.0)) throw ValidationError("stream: z must be >= 0");
  if (z <= 0.0) z = kZeroPlus;
  if (mode == StreamMode::PoissonApprox) return h_quadrature(z / c, rho2);
  const std::int64_t cap = streaming_capacity(z, c);
  double w = 1.0;
  double sum = 1.0;
  double acc = 1.0;  // share at x2 = 0
  for (std::int64_t k = 1; k <= cap; ++k) {
    w *= rho2 / static_cast<double>(k);
    sum += w;
    acc += w * z / (z + c * static_cast<double>(k));
    if (sum > 1e280) {
      w /= sum;
      acc /= sum;
      sum = 1.0;
    }
  }
  return acc / sum;
}

double stream_pi0(double rho2, double c) {
  check_rho(rho2);
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("stream: c must lie in (0,1)");
  const std::int64_t cap = streaming_capacity(kZeroPlus, c);
  double w = 1.0;
  double sum = 1.0;
  double scale = 1.0;  // weight of x2 = 0 after rescaling
  for (std::int64_t k = 1; k <= cap; ++k) {
    w *= rho2 / static_cast<double>(k);
    sum += w;
    if (sum > 1e280) {
      w /= sum;
      scale /= sum;
      sum = 1.0;
    }
  }
  return scale / sum;
}

FluidSolution stream_fluid(double lambda1, double mu1, double rho2, double c, double u0,
                           double T, StreamMode mode, const FluidOptions& opt) {
  if (!(lambda1 >= 0.0) || !(mu1 > 0.0)) {
    throw ValidationError("stream: need lambda1 >= 0 and mu1 > 0");
  }
  check_rho(rho2);
  if (!(c > 0.0 && c < 1.0)) throw ValidationError("stream: c must lie in (0,1)");
  FluidField field = [=](double, std::span<const double> u) {
    const double pb = stream_phibar(u[0], rho2, c, mode);
    return FieldValue{{lambda1}, {mu1 * pb}, {pb}};
  };
  return integrate(field, {u0}, T, opt);
}

}  // namespace bwshare

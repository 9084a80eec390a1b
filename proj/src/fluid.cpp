#include "bwshare/fluid.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "bwshare/errors.hpp"

namespace bwshare {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                 e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

using Vec = std::vector<double>;

struct Eval {
  Vec f;       // reflected derivative
  Vec phibar;
};

class Stepper {
 public:
  Stepper(const FluidField& field, std::size_t dim, std::size_t& counter)
      : field_(field), dim_(dim), counter_(counter) {}

  // Derivative at (t, u); coordinates in `pinned` only move upwards.
  Eval eval(double t, const Vec& u, const std::vector<bool>& pinned) const {
    Vec x(dim_);
    for (std::size_t i = 0; i < dim_; ++i) x[i] = std::max(0.0, u[i]);
    const FieldValue fv = field_(t, x);
    ++counter_;
    Eval out{Vec(dim_), fv.phibar};
    for (std::size_t i = 0; i < dim_; ++i) {
      double d = fv.arrival[i] - fv.departure[i];
      if ((pinned[i] || x[i] <= 0.0) && d < 0.0) d = 0.0;
      if (!std::isfinite(d)) throw NumericalError("fluid: non-finite drift");
      out.f[i] = d;
    }
    return out;
  }

  struct Trial {
    Vec y;
    Vec err;
    Eval end;
  };

  Trial step(double t, const Vec& y, const Eval& k1, double h,
             const std::vector<bool>& pinned) const {
    auto comb = [&](std::initializer_list<std::pair<double, const Vec*>> terms) {
      Vec out = y;
      for (const auto& [a, k] : terms) {
        for (std::size_t i = 0; i < dim_; ++i) out[i] += h * a * (*k)[i];
      }
      return out;
    };
    const Eval k2 = eval(t + c2 * h, comb({{a21, &k1.f}}), pinned);
    const Eval k3 = eval(t + c3 * h, comb({{a31, &k1.f}, {a32, &k2.f}}), pinned);
    const Eval k4 = eval(t + c4 * h, comb({{a41, &k1.f}, {a42, &k2.f}, {a43, &k3.f}}), pinned);
    const Eval k5 = eval(t + c5 * h,
                         comb({{a51, &k1.f}, {a52, &k2.f}, {a53, &k3.f}, {a54, &k4.f}}), pinned);
    const Eval k6 = eval(
        t + h, comb({{a61, &k1.f}, {a62, &k2.f}, {a63, &k3.f}, {a64, &k4.f}, {a65, &k5.f}}),
        pinned);
    Vec y5 = comb({{b1, &k1.f}, {b3, &k3.f}, {b4, &k4.f}, {b5, &k5.f}, {b6, &k6.f}});
    for (std::size_t i = 0; i < dim_; ++i) {
      if (pinned[i]) y5[i] = std::max(0.0, y5[i]);
    }
    Eval k7 = eval(t + h, y5, pinned);
    Vec err(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      err[i] = h * (e1 * k1.f[i] + e3 * k3.f[i] + e4 * k4.f[i] + e5 * k5.f[i] + e6 * k6.f[i] +
                    e7 * k7.f[i]);
    }
    return {std::move(y5), std::move(err), std::move(k7)};
  }

 private:
  const FluidField& field_;
  std::size_t dim_;
  std::size_t& counter_;
};

// Cubic Hermite on [0, h] at s in [0, h].
double hermite(double y0, double y1, double f0, double f1, double h, double s) {
  const double th = s / h;
  const double h00 = (1 + 2 * th) * (1 - th) * (1 - th);
  const double h10 = th * (1 - th) * (1 - th);
  const double h01 = th * th * (3 - 2 * th);
  const double h11 = th * th * (th - 1);
  return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1;
}

std::uint32_t flags_of(const Vec& u) {
  std::uint32_t f = 0;
  for (std::size_t i = 0; i < u.size() && i < 32; ++i) {
    if (u[i] <= 0.0) f |= 1u << i;
  }
  return f;
}

}  // namespace

std::vector<double> FluidSolution::at(double time) const {
  if (t.empty()) return {};
  if (time <= t.front()) return u.front();
  if (time >= t.back()) return u.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t k = static_cast<std::size_t>(it - t.begin());
  const double w = (time - t[k - 1]) / (t[k] - t[k - 1]);
  std::vector<double> out(u[k].size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1 - w) * u[k - 1][i] + w * u[k][i];
  return out;
}

FluidSolution integrate(const FluidField& field, std::vector<double> u0, double T,
                        const FluidOptions& opt, std::vector<double> breaks) {
  const std::size_t dim = u0.size();
  if (!(T >= 0.0)) throw ValidationError("fluid: horizon must be >= 0");
  if (!(opt.dt_out > 0.0)) throw ValidationError("fluid: output step must be > 0");
  if (!(opt.tol > 0.0)) throw ValidationError("fluid: tolerance must be > 0");
  for (double v : u0) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError("fluid: initial values must be finite and >= 0");
    }
  }
  std::sort(breaks.begin(), breaks.end());

  FluidSolution sol;
  sol.hit_times.assign(dim, -1.0);
  Stepper stepper(field, dim, sol.rate_evaluations);

  std::vector<bool> pinned(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    pinned[i] = u0[i] <= 0.0;
    if (pinned[i]) sol.hit_times[i] = 0.0;
  }
  const auto n_out = static_cast<std::size_t>(std::floor(T / opt.dt_out + 1e-9));
  std::size_t next_out = 0;
  auto emit = [&](double time, const Vec& u, const Vec& phibar) {
    Vec clamped(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) clamped[i] = std::max(0.0, u[i]);
    sol.t.push_back(time);
    sol.u.push_back(clamped);
    sol.phibar.push_back(phibar);
    sol.boundary.push_back(flags_of(clamped));
  };

  double t = 0.0;
  Vec y = std::move(u0);
  Eval k1;
  try {
    k1 = stepper.eval(t, y, pinned);
  } catch (const StationaryDivergence& e) {
    sol.diverged = true;
    sol.message = e.what();
    return sol;
  }
  emit(0.0, y, k1.phibar);
  next_out = 1;

  double h = std::min({opt.h_max, std::max(T, 1e-6) * 0.01, 0.01});
  const double h_min = 1e-12;
  std::size_t next_break = 0;
  while (next_break < breaks.size() && breaks[next_break] <= t) ++next_break;

  try {
    while (t < T) {
      double limit = T;
      if (next_break < breaks.size()) limit = std::min(limit, breaks[next_break]);
      h = std::min({h, opt.h_max, limit - t});
      if (h <= 0.0) break;

      auto trial = stepper.step(t, y, k1, h, pinned);
      double err = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double sc = opt.tol * (1.0 + std::max(std::abs(y[i]), std::abs(trial.y[i])));
        err = std::max(err, std::abs(trial.err[i]) / sc);
      }
      if (err > 1.0 && h > h_min) {
        ++sol.rejected;
        h = std::max(h_min, h * std::max(0.1, 0.9 * std::pow(err, -0.2)));
        continue;
      }

      // A free coordinate crossing zero: locate the hit and stop there.
      double first_hit = h;
      for (std::size_t i = 0; i < dim; ++i) {
        if (pinned[i] || trial.y[i] >= 0.0) continue;
        double lo = 0.0;
        double hi = h;
        while (hi - lo > opt.event_tol) {
          const double mid = 0.5 * (lo + hi);
          if (hermite(y[i], trial.y[i], k1.f[i], trial.end.f[i], h, mid) > 0.0) {
            lo = mid;
          } else {
            hi = mid;
          }
        }
        first_hit = std::min(first_hit, hi);
      }
      if (first_hit < h) {
        const double hh = first_hit;
        auto hit = stepper.step(t, y, k1, hh, pinned);
        const double tol_zero = 1e3 * opt.event_tol + opt.tol;
        for (std::size_t i = 0; i < dim; ++i) {
          if (!pinned[i] && hit.y[i] <= tol_zero * (1.0 + std::abs(y[i]))) {
            hit.y[i] = 0.0;
            pinned[i] = true;
            if (sol.hit_times[i] < 0.0) sol.hit_times[i] = t + hh;
          }
        }
        trial = std::move(hit);
        trial.end = stepper.eval(t + hh, trial.y, pinned);
        h = hh;
      }

      const double t1 = t + h;
      while (next_out <= n_out) {
        const double to = static_cast<double>(next_out) * opt.dt_out;
        if (to > t1 + 1e-12) break;
        Vec u(dim);
        Vec pb(k1.phibar.size());
        const double s = std::clamp(to - t, 0.0, h);
        for (std::size_t i = 0; i < dim; ++i) {
          u[i] = pinned[i] && trial.y[i] <= 0.0 && y[i] <= 0.0
                     ? 0.0
                     : hermite(y[i], trial.y[i], k1.f[i], trial.end.f[i], h, s);
        }
        const double w = h > 0.0 ? s / h : 1.0;
        for (std::size_t i = 0; i < pb.size(); ++i) {
          pb[i] = (1 - w) * k1.phibar[i] + w * trial.end.phibar[i];
        }
        emit(to, u, pb);
        ++next_out;
      }

      ++sol.steps;
      t = t1;
      y = std::move(trial.y);
      for (std::size_t i = 0; i < dim; ++i) {
        if (y[i] < 0.0) y[i] = 0.0;
        // A coordinate at 0 with positive drift leaves the boundary.
        if (pinned[i] && y[i] > 0.0) pinned[i] = false;
        if (!pinned[i] && y[i] == 0.0) pinned[i] = true;
      }
      if (next_break < breaks.size() && t >= breaks[next_break] - 1e-14) {
        while (next_break < breaks.size() && breaks[next_break] <= t + 1e-14) ++next_break;
        k1 = stepper.eval(t, y, pinned);
      } else {
        k1 = stepper.eval(t, y, pinned);
      }
      const double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
      h = h * std::clamp(grow, 0.2, 5.0);
    }
  } catch (const StationaryDivergence& e) {
    sol.diverged = true;
    sol.diverged_at = t;
    std::ostringstream msg;
    msg << "averaged rates undefined at t = " << t << ": " << e.what();
    sol.message = msg.str();
  }
  return sol;
}

FluidSolution solve_fluid(const NetworkModel& model, const TrafficProfile& profile,
                          const std::vector<double>& u0, double T, const FluidOptions& opt) {
  if (const auto v = validate(model, profile); !v.empty()) {
    throw ValidationError("model: " + v.front().field + ": " + v.front().message);
  }
  const std::size_t c = model.surge_count();
  if (u0.size() != c) throw ValidationError("fluid: need one initial value per surge class");
  FluidField field = [&](double t, std::span<const double> u) {
    const auto phibar = opt.cache ? opt.cache->get(model, u, opt.rate_tol)
                                  : averaged_rate(model, u, opt.rate_tol);
    FieldValue fv;
    for (std::size_t i = 0; i < c; ++i) {
      const auto& cls = model.classes[i];
      fv.arrival.push_back(profile.slope(i, t, cls.arrival_rate));
      fv.departure.push_back(cls.service_rate * phibar[i]);
      fv.phibar.push_back(phibar[i]);
    }
    return fv;
  };
  std::vector<double> breaks;
  for (const auto& curve : profile.curves()) {
    for (const auto& bp : curve) {
      if (bp.t > 0.0 && bp.t < T) breaks.push_back(bp.t);
    }
  }
  return integrate(field, u0, T, opt, breaks);
}

FluidSolution work_conserving_fast_path(const NetworkModel& model,
                                        const std::vector<double>& u0, double T,
                                        double dt_out) {
  const std::size_t c = model.surge_count();
  if (c != 1) throw ValidationError("fast path: needs exactly one surge class");
  if (u0.size() != 1 || !(u0[0] >= 0.0)) throw ValidationError("fast path: need u0 >= 0");
  if (!(dt_out > 0.0)) throw ValidationError("fast path: output step must be > 0");
  double stable_load = 0.0;
  for (std::size_t j = c; j < model.size(); ++j) stable_load += model.classes[j].load();
  const double phibar = model.allocation.reference_capacity() - stable_load;
  const auto& cls = model.classes[0];
  const double slope = cls.arrival_rate - cls.service_rate * phibar;

  FluidSolution sol;
  sol.hit_times = {u0[0] <= 0.0 ? 0.0 : -1.0};
  if (slope < 0.0 && u0[0] > 0.0) sol.hit_times[0] = u0[0] / -slope;
  const auto n_out = static_cast<std::size_t>(std::floor(T / dt_out + 1e-9));
  for (std::size_t k = 0; k <= n_out; ++k) {
    const double t = static_cast<double>(k) * dt_out;
    const double u = std::max(0.0, u0[0] + slope * t);
    sol.t.push_back(t);
    sol.u.push_back({u});
    sol.phibar.push_back({phibar});
    sol.boundary.push_back(u <= 0.0 ? 1u : 0u);
  }
  return sol;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::InteriorStable: return "interior-stable";
    case Regime::Unstable: return "unstable";
    case Regime::AbsorbedAsymptotic: return "absorbed-asymptotic";
    case Regime::AbsorbedFiniteTime: return "absorbed-finite-time";
  }
  return "unknown";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::No: return "no";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

std::vector<double> jacobian_real_parts(const NetworkModel& model, const std::vector<double>& z,
                                        double rate_tol) {
  const std::size_t c = z.size();
  double norm = 0.0;
  for (double v : z) norm += v * v;
  const double h = 1e-5 * std::max(1.0, std::sqrt(norm));
  Eigen::MatrixXd J(c, c);
  for (std::size_t k = 0; k < c; ++k) {
    auto zp = z;
    auto zm = z;
    zp[k] += h;
    zm[k] = std::max(0.0, zm[k] - h);
    const double width = zp[k] - zm[k];
    const auto dp = drift(model, zp, {}, 0.0, rate_tol);
    const auto dm = drift(model, zm, {}, 0.0, rate_tol);
    for (std::size_t i = 0; i < c; ++i) {
      J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (dp[i] - dm[i]) / width;
    }
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
  std::vector<double> re;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) re.push_back(es.eigenvalues()(i).real());
  return re;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void add_equilibrium(const NetworkModel& model, std::vector<double> z, double tol,
                     double rate_tol, EquilibriumReport& report) {
  for (const auto& e : report.equilibria) {
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) d = std::max(d, std::abs(e.z[i] - z[i]));
    if (d < 1e-6 * (1.0 + max_abs(z))) return;
  }
  Equilibrium eq;
  eq.residual = max_abs(drift(model, z, {}, 0.0, rate_tol));
  if (eq.residual > tol) return;
  eq.eigen_real = jacobian_real_parts(model, z, rate_tol);
  eq.stable = std::all_of(eq.eigen_real.begin(), eq.eigen_real.end(),
                          [](double r) { return r < 0.0; });
  eq.z = std::move(z);
  report.equilibria.push_back(std::move(eq));
}

void scan_scalar(const NetworkModel& model, const EquilibriumOptions& opt,
                 EquilibriumReport& report) {
  auto delta = [&](double z) { return drift(model, std::vector<double>{z}, {}, 0.0, opt.fluid.rate_tol)[0]; };
  std::size_t skipped = 0;
  double z_prev = 0.0;
  double d_prev = report.drift_at_zero;
  for (std::size_t k = 1; k <= opt.grid; ++k) {
    const double z = opt.box * static_cast<double>(k) / static_cast<double>(opt.grid);
    const double d = delta(z);
    if (d == 0.0) {
      add_equilibrium(model, {z}, opt.tol, opt.fluid.rate_tol, report);
    } else if ((d_prev < 0.0 && d > 0.0) || (d_prev > 0.0 && d < 0.0)) {
      double lo = z_prev;
      double hi = z;
      double dlo = d_prev;
      double mid = 0.5 * (lo + hi);
      for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        mid = 0.5 * (lo + hi);
        const double dm = delta(mid);
        if (std::abs(dm) <= 0.01 * opt.tol) break;
        if ((dm < 0.0) == (dlo < 0.0)) {
          lo = mid;
          dlo = dm;
        } else {
          hi = mid;
        }
      }
      const auto before = report.equilibria.size();
      add_equilibrium(model, {mid}, opt.tol, opt.fluid.rate_tol, report);
      if (report.equilibria.size() == before) ++skipped;
    }
    z_prev = z;
    d_prev = d;
  }
  if (skipped > 0) {
    report.note += std::to_string(skipped) +
                   " sign change(s) of the drift at jumps, not roots; ";
  }
}

void newton_starts(const NetworkModel& model, const EquilibriumOptions& opt,
                   EquilibriumReport& report) {
  const std::size_t c = model.surge_count();
  const std::size_t per_axis = std::max<std::size_t>(3, opt.grid / 50);
  std::size_t total = 1;
  for (std::size_t i = 0; i < c; ++i) total *= per_axis;
  for (std::size_t s = 0; s < total; ++s) {
    std::vector<double> z(c);
    std::size_t rem = s;
    for (std::size_t i = 0; i < c; ++i) {
      z[i] = opt.box * (static_cast<double>(rem % per_axis) + 0.5) / static_cast<double>(per_axis);
      rem /= per_axis;
    }
    for (int it = 0; it < 60; ++it) {
      const auto d = drift(model, z, {}, 0.0, opt.fluid.rate_tol);
      if (max_abs(d) <= 0.01 * opt.tol) break;
      const double h = 1e-6 * std::max(1.0, max_abs(z));
      Eigen::MatrixXd J(c, c);
      for (std::size_t k = 0; k < c; ++k) {
        auto zp = z;
        zp[k] += h;
        const auto dp = drift(model, zp, {}, 0.0, opt.fluid.rate_tol);
        for (std::size_t i = 0; i < c; ++i) {
          J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (dp[i] - d[i]) / h;
        }
      }
      Eigen::VectorXd rhs(c);
      for (std::size_t i = 0; i < c; ++i) rhs(static_cast<Eigen::Index>(i)) = -d[i];
      const Eigen::VectorXd step = J.colPivHouseholderQr().solve(rhs);
      if (!step.allFinite()) break;
      double damp = 1.0;
      const double before = max_abs(d);
      bool moved = false;
      for (int ls = 0; ls < 30; ++ls, damp *= 0.5) {
        auto zn = z;
        for (std::size_t i = 0; i < c; ++i) {
          zn[i] = std::max(0.0, z[i] + damp * step(static_cast<Eigen::Index>(i)));
        }
        if (max_abs(drift(model, zn, {}, 0.0, opt.fluid.rate_tol)) < before) {
          z = zn;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (std::all_of(z.begin(), z.end(), [](double v) { return v > 0.0; })) {
      add_equilibrium(model, z, opt.tol, opt.fluid.rate_tol, report);
    }
  }
}

}  // namespace

EquilibriumReport find_equilibria(const NetworkModel& model, const EquilibriumOptions& opt) {
  if (const auto v = validate(model); !v.empty()) {
    throw ValidationError("model: " + v.front().field + ": " + v.front().message);
  }
  if (!(opt.box > 0.0) || opt.grid < 2) throw ValidationError("equilibria: bad search box");
  const std::size_t c = model.surge_count();
  EquilibriumReport report;
  const std::vector<double> zero(c, 0.0);
  try {
    report.drift_at_zero = drift(model, zero, {}, 0.0, opt.fluid.rate_tol)[0];
    if (c == 1) {
      scan_scalar(model, opt, report);
    } else {
      newton_starts(model, opt, report);
    }
  } catch (const StationaryDivergence& e) {
    report.note += std::string("averaged rates undefined on part of the box: ") + e.what() + "; ";
  }

  // The path revisits the same points (0+ in particular), so memoize rates.
  AveragedRateCache local(1e-12);
  FluidOptions fopt = opt.fluid;
  if (fopt.cache == nullptr) fopt.cache = &local;

  // Integrate in segments and stop once the path leaves the box: far out the
  // frozen chain is close to critical and each rate evaluation is costly.
  std::vector<double> u = opt.u0.empty() ? std::vector<double>(c, 1.0) : opt.u0;
  FluidSolution path;
  std::vector<bool> hit(c, false);
  double t = 0.0;
  const double segment = std::max(1.0, std::min(10.0, opt.horizon));
  while (t < opt.horizon) {
    const double len = std::min(segment, opt.horizon - t);
    path = solve_fluid(model, {}, u, len, fopt);
    for (std::size_t i = 0; i < c; ++i) hit[i] = hit[i] || path.hit_times[i] >= 0.0;
    u = path.final_state();
    t += len;
    if (path.diverged || max_abs(u) > opt.box) break;
  }
  report.limit = u;
  if (path.diverged) {
    report.regime = Regime::Unstable;
    report.note += "trajectory left the ergodic region; ";
    return report;
  }
  const double span = path.t.back();
  const auto& last = path.u.back();
  const auto earlier = path.at(std::max(0.0, span - 1.0));
  double speed = 0.0;
  bool growing = false;
  for (std::size_t i = 0; i < c; ++i) {
    speed = std::max(speed, std::abs(last[i] - earlier[i]));
    growing = growing || last[i] - earlier[i] > 1e-8;
  }
  const bool absorbed = std::all_of(last.begin(), last.end(), [](double v) { return v <= 0.0; });
  const bool all_hit = std::all_of(hit.begin(), hit.end(), [](bool h) { return h; });
  const double top = max_abs(last);
  if (growing || top > opt.box) {
    report.regime = Regime::Unstable;
  } else if (absorbed && all_hit) {
    report.regime = Regime::AbsorbedFiniteTime;
  } else if (top < 1e-3) {
    report.regime = Regime::AbsorbedAsymptotic;
  } else {
    report.regime = Regime::InteriorStable;
    if (speed > 1e-6) report.note += "trajectory still moving at the horizon; ";
  }
  return report;
}

RobustStability robust_stability(const NetworkModel& model, double tol) {
  if (const auto v = validate(model); !v.empty()) {
    throw ValidationError("model: " + v.front().field + ": " + v.front().message);
  }
  const auto weights = model.weights();
  const auto samples = sample_states(model.size(), model.surge_count());
  RobustStability out;
  if (is_work_conserving(model.allocation, weights, samples)) {
    out.criterion = "work-conserving";
    double load = 0.0;
    for (const auto& cls : model.classes) load += cls.load();
    out.margin = model.allocation.reference_capacity() - load;
  } else if (is_monotone(model.allocation, weights, samples)) {
    out.criterion = "monotone";
    out.drift_at_zero = drift(model, std::vector<double>(model.surge_count(), 0.0));
    out.margin = -*std::max_element(out.drift_at_zero.begin(), out.drift_at_zero.end());
  } else {
    out.criterion = "none";
    return out;
  }
  if (out.margin > tol) {
    out.verdict = Verdict::Yes;
  } else if (out.margin < -tol) {
    out.verdict = Verdict::No;
  }
  return out;
}

void write_csv(std::ostream& os, const FluidSolution& sol) {
  const std::size_t c = sol.u.empty() ? 0 : sol.u.front().size();
  os << "t";
  for (std::size_t i = 0; i < c; ++i) os << ",u" << i + 1;
  for (std::size_t i = 0; i < c; ++i) os << ",phibar_" << i + 1;
  os << ",boundary_flags\n";
  os << std::setprecision(15);
  for (std::size_t k = 0; k < sol.t.size(); ++k) {
    os << sol.t[k];
    for (double v : sol.u[k]) os << ',' << v;
    for (double v : sol.phibar[k]) os << ',' << v;
    os << ',' << sol.boundary[k] << '\n';
  }
}

void write_report(std::ostream& os, const EquilibriumReport& report) {
  os << std::setprecision(12);
  os << "regime " << static_cast<int>(report.regime) << ' ' << to_string(report.regime) << '\n';
  os << "drift_at_zero " << report.drift_at_zero << '\n';
  os << "limit";
  for (double v : report.limit) os << ' ' << v;
  os << '\n';
  for (const auto& e : report.equilibria) {
    os << "equilibrium z=";
    for (std::size_t i = 0; i < e.z.size(); ++i) os << (i ? "," : "") << e.z[i];
    os << " residual=" << e.residual << " eigen=";
    for (std::size_t i = 0; i < e.eigen_real.size(); ++i) {
      os << (e.eigen_real[i] < 0.0 ? '-' : (e.eigen_real[i] > 0.0 ? '+' : '0'));
    }
    os << " stable=" << (e.stable ? "yes" : "no") << '\n';
  }
  if (!report.note.empty()) os << "note " << report.note << '\n';
}

}  // namespace bwshare

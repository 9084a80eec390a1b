#include "bwshare/ctmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "bwshare/errors.hpp"
#include "bwshare/rng.hpp"

namespace bwshare {

namespace {

std::size_t grid_size(double horizon, double dt) {
  return static_cast<std::size_t>(std::floor(horizon / dt + 1e-9)) + 1;
}

void check_config(const NetworkModel& model, const SimConfig& cfg) {
  if (cfg.K < 1) throw ValidationError("sim: K must be >= 1");
  if (!(cfg.dt > 0.0)) throw ValidationError("sim: grid step must be > 0");
  if (!(cfg.horizon > 0.0)) throw ValidationError("sim: horizon must be > 0");
  const std::size_t c = model.surge_count();
  if (cfg.surge0.size() != c) {
    throw ValidationError("sim: need " + std::to_string(c) + " initial surge values");
  }
  if (cfg.stable0.size() != model.size() - c) {
    throw ValidationError("sim: need " + std::to_string(model.size() - c) +
                          " initial stable counts");
  }
  for (double u : cfg.surge0) {
    if (!(u >= 0.0)) throw ValidationError("sim: initial surge values must be >= 0");
  }
  for (auto y : cfg.stable0) {
    if (y < 0) throw ValidationError("sim: initial stable counts must be >= 0");
  }
}

State to_state(const std::vector<std::int64_t>& counts, std::size_t c, std::int64_t K) {
  State s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i < c) {
      s.surge.push_back(static_cast<double>(counts[i]) / static_cast<double>(K));
    } else {
      s.stable.push_back(counts[i]);
    }
  }
  return s;
}

// The path as constant pieces [start_k, start_{k+1}) with their states.
template <class Visit>
void for_each_piece(const ScaledTrajectory& traj, double t_end, Visit&& visit) {
  auto counts = traj.initial_counts;
  double start = 0.0;
  for (const auto& j : traj.jumps) {
    if (j.t > t_end) break;
    visit(start, j.t, counts);
    counts[j.cls] += j.delta;
    start = j.t;
  }
  visit(start, t_end, counts);
}

// Prefix integral of a functional along the path, for repeated window queries.
class PathIntegral {
 public:
  PathIntegral(const ScaledTrajectory& traj, const StateFunctional& f) {
    starts_.push_back(0.0);
    prefix_.push_back(0.0);
    for_each_piece(traj, traj.horizon, [&](double a, double b, const auto& counts) {
      const double v = f(to_state(counts, traj.surge_count, traj.K));
      values_.push_back(v);
      starts_.push_back(b);
      prefix_.push_back(prefix_.back() + v * (b - a));
    });
  }

  double at(double t) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    std::size_t k = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
    if (k >= values_.size()) return prefix_.back();
    return prefix_[k] + values_[k] * (t - starts_[k]);
  }

  double integral(double a, double b) const { return at(b) - at(a); }

 private:
  std::vector<double> starts_;
  std::vector<double> values_;
  std::vector<double> prefix_;
};

}  // namespace

State ScaledTrajectory::state_at(double t) const {
  auto counts = initial_counts;
  for (const auto& j : jumps) {
    if (j.t > t) break;
    counts[j.cls] += j.delta;
  }
  return to_state(counts, surge_count, K);
}

ScaledTrajectory simulate(const NetworkModel& model, const TrafficProfile& profile,
                          const SimConfig& cfg) {
  if (const auto v = validate(model, profile); !v.empty()) {
    throw ValidationError("model: " + v.front().field + ": " + v.front().message);
  }
  check_config(model, cfg);

  const std::size_t n = model.size();
  const std::size_t c = model.surge_count();
  const double K = static_cast<double>(cfg.K);

  ScaledTrajectory traj;
  traj.K = cfg.K;
  traj.seed = cfg.seed;
  traj.surge_count = c;
  traj.classes = n;
  traj.horizon = cfg.horizon;
  traj.arrivals.assign(n, 0);

  std::vector<std::int64_t> counts(n);
  for (std::size_t i = 0; i < c; ++i) counts[i] = std::llround(K * cfg.surge0[i]);
  for (std::size_t i = c; i < n; ++i) counts[i] = cfg.stable0[i - c];
  traj.initial_counts = counts;

  std::vector<double> weights = model.weights();
  if (cfg.scale_weights) {
    for (std::size_t i = 0; i < c; ++i) weights[i] /= K;
  }
  const auto mu = model.service_rates();

  const std::size_t n_grid = grid_size(cfg.horizon, cfg.dt);
  traj.times.reserve(n_grid);
  std::size_t next_grid = 0;
  auto record_until = [&](double t_micro) {
    while (next_grid < n_grid && static_cast<double>(next_grid) * cfg.dt * K <= t_micro) {
      const State s = to_state(counts, c, cfg.K);
      traj.times.push_back(static_cast<double>(next_grid) * cfg.dt);
      traj.surge.push_back(s.surge);
      traj.stable.push_back(s.stable);
      traj.blocked.push_back(traj.blocked_total);
      ++next_grid;
    }
  };

  Engine engine = make_engine(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double end = K * cfg.horizon;
  double t = 0.0;
  std::vector<double> x(n);
  std::vector<double> rates(2 * n);
  while (true) {
    const double t_macro = t / K;
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(counts[i]);
    const auto phi = allocate(model.allocation, weights, x);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool frozen = cfg.freeze_surge && i < c;
      const double lam = i < c ? profile.slope(i, t_macro, model.classes[i].arrival_rate)
                               : model.classes[i].arrival_rate;
      rates[i] = frozen ? 0.0 : lam;
      rates[n + i] = frozen || counts[i] == 0 ? 0.0 : mu[i] * phi[i];
      total += rates[i] + rates[n + i];
    }
    if (!std::isfinite(total)) {
      throw NumericalError("simulate: non-finite total event rate at t = " +
                           std::to_string(t_macro));
    }
    const double change = K * profile.next_change(t_macro);
    double t_next = std::numeric_limits<double>::infinity();
    if (total > 0.0) t_next = t + std::exponential_distribution<double>(total)(engine);
    if (change < end && t_next > change) {
      // Rates switch at a breakpoint; restart the clocks there.
      record_until(change);
      t = change;
      continue;
    }
    if (t_next > end) break;
    record_until(t_next);
    t = t_next;

    double pick = unif(engine) * total;
    std::size_t ev = 0;
    for (; ev + 1 < 2 * n; ++ev) {
      if (pick < rates[ev]) break;
      pick -= rates[ev];
    }
    while (rates[ev] <= 0.0 && ev > 0) --ev;  // rounding at the top end
    if (ev < n) {
      ++traj.arrivals[ev];
      if (!admits(model.allocation, weights, x, ev)) {
        ++traj.blocked_total;
        ++traj.events;
        continue;
      }
      ++counts[ev];
      traj.jumps.push_back({t / K, static_cast<std::uint32_t>(ev), +1});
    } else {
      --counts[ev - n];
      traj.jumps.push_back({t / K, static_cast<std::uint32_t>(ev - n), -1});
    }
    if (++traj.events > cfg.max_events) {
      throw NumericalError("simulate: event budget exhausted");
    }
  }
  record_until(end);
  return traj;
}

WindowSeries window_average(const ScaledTrajectory& traj, const StateFunctional& f,
                            double s) {
  if (!(s > 0.0)) throw ValidationError("window_average: window must be > 0");
  if (traj.times.size() >= 2 && s < traj.times[1] - traj.times[0] - 1e-12) {
    throw ValidationError("window_average: window shorter than the grid step");
  }
  const PathIntegral integral(traj, f);
  WindowSeries out;
  for (double t : traj.times) {
    double hi = t + s;
    double width = s;
    if (hi > traj.horizon + 1e-12) {
      out.truncated = true;
      hi = traj.horizon;
      width = hi - t;
      if (width <= 0.0) continue;
    }
    out.t.push_back(t);
    out.value.push_back(integral.integral(t, hi) / width);
  }
  return out;
}

TimeAverage time_average(const ScaledTrajectory& traj, const StateFunctional& f, double t0,
                         double t1, std::size_t batches) {
  if (!(t1 > t0) || t0 < 0.0 || t1 > traj.horizon + 1e-12 || batches < 2) {
    throw ValidationError("time_average: need 0 <= t0 < t1 <= horizon and >= 2 batches");
  }
  const PathIntegral integral(traj, f);
  const double width = (t1 - t0) / static_cast<double>(batches);
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const double a = t0 + width * static_cast<double>(b);
    means[b] = integral.integral(a, a + width) / width;
  }
  TimeAverage out;
  out.batches = batches;
  for (double m : means) out.mean += m;
  out.mean /= static_cast<double>(batches);
  double var = 0.0;
  for (double m : means) var += (m - out.mean) * (m - out.mean);
  var /= static_cast<double>(batches - 1);
  out.std_error = std::sqrt(var / static_cast<double>(batches));
  return out;
}

double sup_deviation(const ScaledTrajectory& traj, const ReferencePath& reference,
                     double horizon) {
  const std::size_t c = traj.surge_count;
  const double K = static_cast<double>(traj.K);
  double worst = 0.0;
  auto check = [&](double t, const std::vector<std::int64_t>& counts) {
    const auto u = reference(t);
    for (std::size_t i = 0; i < c; ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(counts[i]) / K - u[i]));
    }
  };
  auto counts = traj.initial_counts;
  check(0.0, counts);
  std::size_t g = 0;
  for (const auto& j : traj.jumps) {
    if (j.t > horizon) break;
    while (g < traj.times.size() && traj.times[g] < j.t) check(traj.times[g++], counts);
    if (j.cls >= c) {
      counts[j.cls] += j.delta;
      continue;
    }
    check(j.t, counts);
    counts[j.cls] += j.delta;
    check(j.t, counts);
  }
  while (g < traj.times.size() && traj.times[g] <= horizon) check(traj.times[g++], counts);
  check(horizon, counts);
  return worst;
}

EnsembleSummary replicate(const NetworkModel& model, const TrafficProfile& profile,
                          const SimConfig& cfg, std::size_t n_runs,
                          const ReferencePath& reference, std::size_t jobs) {
  if (n_runs < 1) throw ValidationError("replicate: need at least one run");
  struct RunResult {
    std::vector<std::vector<double>> surge;
    std::vector<std::vector<std::int64_t>> stable;
    double deviation = 0.0;
    std::int64_t blocked = 0;
    std::int64_t offered = 0;
  };
  std::vector<RunResult> results(n_runs);
  std::vector<double> times;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (std::size_t r = next++; r < n_runs; r = next++) {
      try {
        SimConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed ^ static_cast<std::uint64_t>(r);
        auto traj = simulate(model, profile, run_cfg);
        auto& out = results[r];
        if (reference) out.deviation = sup_deviation(traj, reference, cfg.horizon);
        out.blocked = traj.blocked_total;
        if (traj.arrivals.size() > 1) out.offered = traj.arrivals[1];
        out.surge = std::move(traj.surge);
        out.stable = std::move(traj.stable);
        if (r == 0) times = traj.times;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, n_runs));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  EnsembleSummary summary;
  summary.times = times;
  const std::size_t g = times.size();
  const std::size_t c = model.surge_count();
  const std::size_t s = model.size() - c;
  summary.mean_surge.assign(g, std::vector<double>(c, 0.0));
  summary.mean_stable.assign(g, std::vector<double>(s, 0.0));
  const double inv = 1.0 / static_cast<double>(n_runs);
  for (const auto& r : results) {
    for (std::size_t k = 0; k < g; ++k) {
      for (std::size_t i = 0; i < c; ++i) summary.mean_surge[k][i] += r.surge[k][i] * inv;
      for (std::size_t i = 0; i < s; ++i) {
        summary.mean_stable[k][i] += static_cast<double>(r.stable[k][i]) * inv;
      }
    }
    summary.blocked += r.blocked;
    summary.offered_streaming += r.offered;
  }
  for (const auto& r : results) {
    double dev = r.deviation;
    if (!reference) {
      dev = 0.0;
      for (std::size_t k = 0; k < g; ++k) {
        for (std::size_t i = 0; i < c; ++i) {
          dev = std::max(dev, std::abs(r.surge[k][i] - summary.mean_surge[k][i]));
        }
      }
    }
    summary.sup_deviation.push_back(dev);
  }
  double mean = 0.0;
  for (double d : summary.sup_deviation) mean += d;
  mean /= static_cast<double>(n_runs);
  double var = 0.0;
  for (double d : summary.sup_deviation) var += (d - mean) * (d - mean);
  summary.mean_sup_deviation = mean;
  summary.std_error_sup_deviation =
      n_runs > 1 ? std::sqrt(var / static_cast<double>(n_runs - 1) / static_cast<double>(n_runs))
                 : 0.0;
  return summary;
}

void write_csv(std::ostream& os, const ScaledTrajectory& traj) {
  const std::size_t c = traj.surge_count;
  os << "t";
  for (std::size_t i = 0; i < c; ++i) os << ",y" << i + 1;
  for (std::size_t i = c; i < traj.classes; ++i) os << ",x" << i + 1;
  os << ",blocked_count\n";
  os << std::setprecision(15);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    os << traj.times[k];
    for (double v : traj.surge[k]) os << ',' << v;
    for (auto v : traj.stable[k]) os << ',' << v;
    os << ',' << traj.blocked[k] << '\n';
  }
}

}  // namespace bwshare

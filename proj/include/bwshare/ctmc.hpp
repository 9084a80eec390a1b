#ifndef BWSHARE_CTMC_HPP
#define BWSHARE_CTMC_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "bwshare/model.hpp"

namespace bwshare {

struct SimConfig {
  std::int64_t K = 1000;
  double horizon = 10.0;  // macroscopic
  double dt = 0.01;       // output grid step, macroscopic
  std::uint64_t seed = 1;
  std::vector<double> surge0;         // macroscopic, X_i(0) = round(K * u_i(0))
  std::vector<std::int64_t> stable0;  // flow counts
  /// r_i = omega_i / K for surge classes. Off: surge weights are used
  /// unscaled, which is the usual fluid scaling.
  bool scale_weights = true;
  /// Hold the surge classes at their initial value (no surge events).
  bool freeze_surge = false;
  std::uint64_t max_events = 2'000'000'000ULL;
};

/// One jump of the flow-count process, time on the macroscopic scale.
struct Jump {
  double t;
  std::uint32_t cls;
  std::int32_t delta;
};

/// Y^K on the grid 0, dt, ..., T plus the exact event log.
struct ScaledTrajectory {
  std::int64_t K = 1;
  std::uint64_t seed = 0;
  std::size_t surge_count = 0;
  std::size_t classes = 0;
  double horizon = 0.0;

  std::vector<double> times;
  std::vector<std::vector<double>> surge;         // X_i(Kt)/K, i <= c
  std::vector<std::vector<std::int64_t>> stable;  // X_i(Kt), i > c
  std::vector<std::int64_t> blocked;              // cumulative blocked arrivals

  std::vector<std::int64_t> initial_counts;
  std::vector<Jump> jumps;
  std::vector<std::int64_t> arrivals;  // offered, per class
  std::int64_t blocked_total = 0;
  std::uint64_t events = 0;

  /// State right after all jumps with time <= t.
  State state_at(double t) const;
};

/// Exact simulation of the flow-count chain with competing exponential
/// clocks; all rates are recomputed after every event.
ScaledTrajectory simulate(const NetworkModel& model, const TrafficProfile& profile,
                          const SimConfig& cfg);

using StateFunctional = std::function<double(const State&)>;

struct WindowSeries {
  std::vector<double> t;
  std::vector<double> value;
  bool truncated = false;  // windows near T were cut at the horizon
};

/// (1/s) * integral_t^{t+s} f(Y^K(h)) dh at every grid time t.
WindowSeries window_average(const ScaledTrajectory& traj, const StateFunctional& f,
                            double s);

struct TimeAverage {
  double mean = 0.0;
  double std_error = 0.0;  // batch means
  std::size_t batches = 0;
};

/// Exact time average of f over [t0, t1] with a batch-means standard error.
TimeAverage time_average(const ScaledTrajectory& traj, const StateFunctional& f, double t0,
                         double t1, std::size_t batches = 20);

using ReferencePath = std::function<std::vector<double>(double)>;

struct EnsembleSummary {
  std::vector<double> times;
  std::vector<std::vector<double>> mean_surge;  // [grid][i]
  std::vector<std::vector<double>> mean_stable;
  std::vector<double> sup_deviation;  // per run
  double mean_sup_deviation = 0.0;
  double std_error_sup_deviation = 0.0;
  std::int64_t blocked = 0;
  std::int64_t offered_streaming = 0;
};

/// sup over [0, horizon] of max_i |Y_i^K - u_i|, evaluated at both sides of
/// every jump and at the grid points.
double sup_deviation(const ScaledTrajectory& traj, const ReferencePath& reference,
                     double horizon);

/// n_runs independent runs with seeds cfg.seed ^ run. With no reference,
/// the deviation is taken against the ensemble mean path.
EnsembleSummary replicate(const NetworkModel& model, const TrafficProfile& profile,
                          const SimConfig& cfg, std::size_t n_runs,
                          const ReferencePath& reference = {}, std::size_t jobs = 1);

/// Header `t,y1..yc,x{c+1}..xN,blocked_count`.
void write_csv(std::ostream& os, const ScaledTrajectory& traj);

}  // namespace bwshare

#endif  // BWSHARE_CTMC_HPP

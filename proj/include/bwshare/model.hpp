#ifndef BWSHARE_MODEL_HPP
#define BWSHARE_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bwshare/alloc.hpp"

namespace bwshare {

/// One class of flows: Poisson arrivals, exponential sizes.
///
/// `weight` is the priority weight: for surge classes it is the coefficient
/// omega_i of the scaled weight r_i = omega_i / K, for stable classes it is
/// used as is.
struct TrafficClass {
  double arrival_rate = 0.0;
  double service_rate = 1.0;
  double weight = 1.0;
  bool is_surge = false;

  double load() const { return arrival_rate / service_rate; }

  bool operator==(const TrafficClass&) const = default;
};

struct Breakpoint {
  double t = 0.0;
  double a = 0.0;

  bool operator==(const Breakpoint&) const = default;
};

/// Cumulative macroscopic arrivals a_i(t) of the surge classes, piecewise
/// linear through the given breakpoints. Past the last breakpoint the last
/// slope is continued. A class without breakpoints falls back to its
/// constant arrival rate.
class TrafficProfile {
 public:
  TrafficProfile() = default;
  explicit TrafficProfile(std::vector<std::vector<Breakpoint>> per_class)
      : curves_(std::move(per_class)) {}

  bool has_curve(std::size_t i) const {
    return i < curves_.size() && !curves_[i].empty();
  }
  const std::vector<std::vector<Breakpoint>>& curves() const { return curves_; }

  /// a_i(t); `fallback_rate` is used when class i has no curve.
  double cumulative(std::size_t i, double t, double fallback_rate) const;
  /// Right derivative of a_i at t.
  double slope(std::size_t i, double t, double fallback_rate) const;
  /// First breakpoint of class i strictly after t, or +inf.
  double next_change(std::size_t i, double t) const;
  /// First breakpoint of any class strictly after t, or +inf.
  double next_change(double t) const;

  bool operator==(const TrafficProfile&) const = default;

 private:
  std::vector<std::vector<Breakpoint>> curves_;
};

/// A network instance: classes (surge classes first) and the allocation.
struct NetworkModel {
  std::vector<TrafficClass> classes;
  AllocationSpec allocation;

  std::size_t size() const { return classes.size(); }
  /// Number of classes flagged as surging. validate() checks that they
  /// occupy the leading indices.
  std::size_t surge_count() const;
  double total_load() const;
  std::vector<double> weights() const;
  std::vector<double> arrival_rates() const;
  std::vector<double> service_rates() const;

  bool operator==(const NetworkModel&) const = default;
};

/// Mixed state: surge coordinates as reals (macroscopic) and stable
/// coordinates as integer flow counts.
struct State {
  std::vector<double> surge;
  std::vector<std::int64_t> stable;

  /// Concatenated (surge..., stable...) as reals, the form allocations take.
  std::vector<double> flat() const;
  bool operator==(const State&) const = default;
};

struct Violation {
  std::string field;
  std::string message;
};

/// All broken invariants of the model (and of the profile, if given).
/// Empty means the model is usable.
std::vector<Violation> validate(const NetworkModel& model);
std::vector<Violation> validate(const NetworkModel& model,
                                const TrafficProfile& profile);

}  // namespace bwshare

#endif  // BWSHARE_MODEL_HPP

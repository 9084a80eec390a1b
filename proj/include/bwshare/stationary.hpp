#ifndef BWSHARE_STATIONARY_HPP
#define BWSHARE_STATIONARY_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "bwshare/model.hpp"

namespace bwshare {

/// Surge coordinates at or below zero are evaluated at this value, i.e. the
/// averaged quantities at z = 0 are the limits from the right.
inline constexpr double kZeroPlus = 1e-12;

/// The stable classes with the surge coordinates pinned at z.
struct FrozenChain {
  std::vector<double> z;        // macroscopic surge values (unweighted)
  std::vector<double> arrival;  // stable arrival rates
  /// mu_j phi_j(z, y) for every stable class j.
  std::function<std::vector<double>(std::span<const std::int64_t>)> death;
  /// Whether an arrival of stable class j is accepted in y. Empty: always.
  std::function<bool(std::span<const std::int64_t>, std::size_t)> admits;
  /// Per-class load estimates used for the first truncation box.
  std::vector<double> load_hint;

  std::size_t dimension() const { return arrival.size(); }
};

/// Builds U^z for the model. Surge coordinates <= 0 are replaced by kZeroPlus.
FrozenChain frozen_chain(const NetworkModel& model, std::span<const double> z);

/// pi^z on the truncation box prod [0, box_j], stored with the last
/// coordinate varying fastest.
struct StationaryDistribution {
  std::vector<std::int64_t> box;
  std::vector<double> prob;
  double tail_mass = 0.0;  // bound on the mass outside the box
  double residual = 0.0;   // max |pi Q| on the box
  std::size_t refinements = 0;

  std::size_t dimension() const { return box.size(); }
  std::size_t size() const { return prob.size(); }
  std::vector<std::int64_t> state(std::size_t flat) const;
  std::size_t index(std::span<const std::int64_t> y) const;
  double at(std::span<const std::int64_t> y) const;
  double expectation(const std::function<double(std::span<const std::int64_t>)>& f) const;
  std::vector<double> mean() const;
};

/// Birth-death chain with constant birth rate. With `support_max` the
/// support is {0..support_max} and the answer is exact; otherwise the
/// support grows until the remaining tail is below tol.
StationaryDistribution stationary_1d(double lambda,
                                     const std::function<double(std::int64_t)>& death,
                                     std::optional<std::int64_t> support_max = std::nullopt,
                                     double tol = 1e-10);

/// Global balance on a truncation box, solved by sparse LU. The box is
/// doubled until the probability on its outer faces is below tol.
/// Throws StationaryDivergence when the state cap is reached first.
StationaryDistribution stationary_multi(const FrozenChain& chain, double tol = 1e-8,
                                        std::size_t max_states = std::size_t{1} << 18);

/// Dispatches to the 1-D solver when there is one stable class.
StationaryDistribution stationary(const NetworkModel& model, std::span<const double> z,
                                  double tol = -1.0);

/// phibar_i(z) = sum_y phi_i(z, y) pi^z(y), for all classes.
std::vector<double> averaged_rate(const NetworkModel& model, std::span<const double> z,
                                  double tol = -1.0);

/// delta_i(z) = adot_i(t) - mu_i phibar_i(z) for the surge classes.
std::vector<double> drift(const NetworkModel& model, std::span<const double> z,
                          const TrafficProfile& profile = {}, double t = 0.0,
                          double tol = -1.0);

/// Memo of averaged rates on a z grid. Lookups snap z to the grid, so a
/// run with the cache differs from one without by at most the grid step
/// in z. Safe for concurrent use.
class AveragedRateCache {
 public:
  explicit AveragedRateCache(double step = 1e-6) : step_(step) {}
  std::vector<double> get(const NetworkModel& model, std::span<const double> z, double tol);
  std::size_t size() const;

 private:
  double step_;
  mutable std::mutex mutex_;
  std::map<std::vector<std::int64_t>, std::vector<double>> values_;
};

/// Header `x{c+1}..xN,probability`.
void write_csv(std::ostream& os, const StationaryDistribution& pi, std::size_t first_class);

}  // namespace bwshare

#endif  // BWSHARE_STATIONARY_HPP

#ifndef BWSHARE_ALLOC_HPP
#define BWSHARE_ALLOC_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

// Bandwidth allocations phi. Every allocation takes the class weights and a
// mixed state x (surge coordinates may be real) and returns the total rate
// per class. Priority scaling enters only through the weights, so callers
// pass omega_i with macroscopic x_i, or omega_i / K with raw flow counts;
// both give the same products r_i x_i.

namespace bwshare {

struct AllocationSpec;

/// Single link, rates proportional to weighted counts.
struct DpsSpec {
  double capacity = 1.0;
  bool operator==(const DpsSpec&) const = default;
};

/// Weighted proportional fairness over A phi <= C.
/// `incidence` is links x routes; column j lists the links route j uses.
struct PfSpec {
  std::vector<std::vector<double>> incidence;
  std::vector<double> capacity;
  double tol = 1e-9;
  std::size_t max_iterations = 100000;
  /// Use the exact solutions for one link and for the two-link line.
  bool closed_form = true;
  bool operator==(const PfSpec&) const = default;
};

/// Two routes over dedicated links c1, c2 and a shared unit link.
struct TreeSpec {
  double c1 = 1.0;
  double c2 = 1.0;
  bool operator==(const TreeSpec&) const = default;
};

/// Class 1 elastic, class 2 streaming at rate c per flow with admission.
struct StreamElasticSpec {
  double c = 0.01;
  bool operator==(const StreamElasticSpec&) const = default;
};

/// psi: the inner allocation evaluated with all surge coordinates zeroed
/// whenever some stable class is non-empty.
struct PrioritySpec {
  std::shared_ptr<const AllocationSpec> inner;
  std::size_t surge_count = 1;
  bool operator==(const PrioritySpec& o) const;
};

struct AllocationSpec {
  std::variant<DpsSpec, PfSpec, TreeSpec, StreamElasticSpec, PrioritySpec> variant =
      DpsSpec{};

  AllocationSpec() = default;
  template <typename T>
  AllocationSpec(T v) : variant(std::move(v)) {}  // NOLINT(google-explicit-constructor)

  std::string kind() const;
  /// Number of classes the allocation is defined for, if fixed.
  std::optional<std::size_t> dimension() const;
  /// Capacity a work-conserving allocation hands out at every non-empty state.
  double reference_capacity() const;

  bool operator==(const AllocationSpec&) const = default;
};

struct PfResult {
  std::vector<double> rates;
  double residual = 0.0;
  std::size_t iterations = 0;
};

std::vector<double> dps(std::span<const double> weights, std::span<const double> x,
                        double capacity);

/// Throws SolverFailure if the iteration cap is reached above tolerance.
PfResult proportional_fair(std::span<const double> weights, std::span<const double> x,
                           const PfSpec& spec);

std::array<double, 2> tree(double r1, double r2, double x1, double x2, double c1,
                           double c2);

/// Elastic share r1 x1 / (r1 x1 + c x2), capped by the capacity left over
/// by the streaming flows; streaming gets c x2. Throws InfeasibleState when
/// c x2 exceeds the link.
std::array<double, 2> stream_elastic(double r1, double x1, double x2, double c);

/// Largest number of streaming flows that fit next to an elastic
/// occupation z (weighted): floor((1 - z) / c), 0 when z >= 1.
std::int64_t streaming_capacity(double z, double c);

/// Whether one more streaming flow fits at (r1 x1, x2).
bool stream_admits(double r1, double x1, double x2, double c);

AllocationSpec priority_wrap(AllocationSpec inner, std::size_t surge_count);

/// Dispatch on the variant. x has one entry per class.
std::vector<double> allocate(const AllocationSpec& spec, std::span<const double> weights,
                             std::span<const double> x);

/// Whether an arrival of class `cls` is accepted in state x. Only the
/// streaming class of StreamElastic is ever blocked.
bool admits(const AllocationSpec& spec, std::span<const double> weights,
            std::span<const double> x, std::size_t cls);
bool has_admission_control(const AllocationSpec& spec);

/// Integer grid {0..side-1}^n without the origin, plus a few states with
/// fractional surge coordinates.
std::vector<std::vector<double>> sample_states(std::size_t n, std::size_t surge_count,
                                               std::size_t side = 4);

bool is_work_conserving(const AllocationSpec& spec, std::span<const double> weights,
                        const std::vector<std::vector<double>>& samples);

/// phi_i non-increasing in x_j (j != i) between neighbouring sample states.
bool is_monotone(const AllocationSpec& spec, std::span<const double> weights,
                 const std::vector<std::vector<double>>& samples);

/// A phi <= C (or the variant's own constraints) within `tol`.
bool is_feasible(const AllocationSpec& spec, std::span<const double> rates,
                 double tol = 1e-9);

}  // namespace bwshare

#endif  // BWSHARE_ALLOC_HPP

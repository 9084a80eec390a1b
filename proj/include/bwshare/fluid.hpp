#ifndef BWSHARE_FLUID_HPP
#define BWSHARE_FLUID_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bwshare/model.hpp"
#include "bwshare/stationary.hpp"

namespace bwshare {

struct FluidOptions {
  double tol = 1e-8;       // local error per step, absolute and relative
  double dt_out = 0.01;    // output grid
  double h_max = 0.5;      // largest integration step
  double event_tol = 1e-10;  // boundary hit times are located to this
  double rate_tol = -1.0;  // stationary tolerance, <= 0 for the default
  AveragedRateCache* cache = nullptr;
};

struct FluidSolution {
  std::vector<double> t;
  std::vector<std::vector<double>> u;       // [grid][i]
  std::vector<std::vector<double>> phibar;  // surge classes, [grid][i]
  std::vector<std::uint32_t> boundary;      // bit i set: u_i pinned at 0
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t rate_evaluations = 0;
  std::vector<double> hit_times;  // first time each class reached 0, -1 if never
  bool diverged = false;          // partial solution, see `message`
  double diverged_at = 0.0;
  std::string message;

  std::vector<double> final_state() const { return u.empty() ? std::vector<double>{} : u.back(); }
  /// Linear interpolation on the output grid.
  std::vector<double> at(double time) const;
};

/// Rates of the surge classes at (t, u): arrival slope and mu * phibar.
struct FieldValue {
  std::vector<double> arrival;
  std::vector<double> departure;  // mu_i phibar_i
  std::vector<double> phibar;
};
using FluidField = std::function<FieldValue(double, std::span<const double>)>;

/// Dormand-Prince 5(4) for u' = arrival - departure with reflection at 0:
/// a coordinate at 0 moves only when its drift is positive. Boundary hits
/// are located by bisection; `breaks` are times where the field may jump.
FluidSolution integrate(const FluidField& field, std::vector<double> u0, double T,
                        const FluidOptions& opt, std::vector<double> breaks = {});

FluidSolution solve_fluid(const NetworkModel& model, const TrafficProfile& profile,
                          const std::vector<double>& u0, double T,
                          const FluidOptions& opt = {});

/// u_i(t) = (u_i(0) + (lambda_i - mu_i (C - sum_j rho_j)) t)^+ for one
/// surge class and a work-conserving allocation of capacity C.
FluidSolution work_conserving_fast_path(const NetworkModel& model,
                                        const std::vector<double>& u0, double T,
                                        double dt_out = 0.01);

enum class Regime {
  InteriorStable = 1,
  Unstable = 2,
  AbsorbedAsymptotic = 3,
  AbsorbedFiniteTime = 4,
};
std::string to_string(Regime r);

struct Equilibrium {
  std::vector<double> z;
  double residual = 0.0;             // max |delta(z)|
  std::vector<double> eigen_real;    // real parts of the Jacobian eigenvalues
  bool stable = false;               // all real parts < 0
};

struct EquilibriumOptions {
  double box = 5.0;       // search in (0, box]^c
  double tol = 1e-8;
  std::size_t grid = 200;  // scan points per axis (c = 1) or starts per axis / 20
  std::vector<double> u0;  // start of the classifying trajectory, default 1
  double horizon = 100.0;
  FluidOptions fluid;
};

struct EquilibriumReport {
  std::vector<Equilibrium> equilibria;
  Regime regime = Regime::AbsorbedFiniteTime;
  std::vector<double> limit;  // end of the classifying trajectory
  double drift_at_zero = 0.0;  // delta at 0+, first surge class
  std::string note;
};

EquilibriumReport find_equilibria(const NetworkModel& model, const EquilibriumOptions& opt = {});

enum class Verdict { Yes, No, Inconclusive };
std::string to_string(Verdict v);

struct RobustStability {
  Verdict verdict = Verdict::Inconclusive;
  std::string criterion;  // "work-conserving", "monotone" or "none"
  double margin = 0.0;    // positive means stable
  std::vector<double> drift_at_zero;
};

/// Work-conserving: 1 - sum rho. Monotone: -delta(0+) computed from the
/// frozen chain at z = 0+. Otherwise inconclusive.
RobustStability robust_stability(const NetworkModel& model, double tol = 1e-9);

/// Forward recursion H(n+1) = (n+1)/rho (1 - H(n)) from H(0) = e^-rho with
/// a running error bound. Throws NumericalInstability once the bound passes
/// max_error or the value leaves (0,1).
double h_forward(std::size_t n, double rho, double max_error = 1e-8);
/// The same recursion run backwards from a large index, which is stable.
double h_recursion(std::size_t n, double rho);
/// H(z) = e^-rho (1 + z int_0^1 t^{z-1} (e^{rho t} - 1) dt) by quadrature.
double h_quadrature(double z, double rho);

struct HRow {
  std::size_t n = 0;
  double forward = 0.0;  // NaN past the last stable index
  double recursion = 0.0;
  double quadrature = 0.0;
};
struct HTable {
  std::vector<HRow> rows;
  std::size_t last_stable = 0;
};
HTable h_table(std::size_t n_max, double rho);

enum class StreamMode { Exact, PoissonApprox };

/// phibar_1 at elastic occupation z: the mean of z / (z + c x2) under the
/// Poisson(rho2) law truncated at floor((1 - z)/c) (exact) or untruncated
/// (poisson-approx, equal to H(z/c)). rho2 = lambda2 / (mu2 c).
double stream_phibar(double z, double rho2, double c, StreamMode mode);
/// pi_2(0) of the truncated law at z = 0+.
double stream_pi0(double rho2, double c);

FluidSolution stream_fluid(double lambda1, double mu1, double rho2, double c, double u0,
                           double T, StreamMode mode, const FluidOptions& opt = {});

/// Header `t,u1..uc,phibar_1..phibar_c,boundary_flags`.
void write_csv(std::ostream& os, const FluidSolution& sol);
/// One equilibrium per line.
void write_report(std::ostream& os, const EquilibriumReport& report);

}  // namespace bwshare

#endif  // BWSHARE_FLUID_HPP

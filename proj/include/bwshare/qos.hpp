#ifndef BWSHARE_QOS_HPP
#define BWSHARE_QOS_HPP

#include <cstdint>
#include <iosfwd>

namespace bwshare {

struct QosTarget {
  double p_m = 0.05;  // largest acceptable blocking probability
  double c = 0.01;    // rate of one streaming flow
  double rho2 = 1.0;  // lambda2 / (mu2 c)
};

/// Erlang-B blocking with n circuits, by the recurrence
/// B(k) = rho B(k-1) / (k + rho B(k-1)).
double erlang_b(std::int64_t n, double rho);
/// The same from the normalized sum (rho^n/n!) / sum_{j<=n} rho^j/j!.
double erlang_b_direct(std::int64_t n, double rho);
/// Smallest n with erlang_b(n, rho) <= p_m.
std::int64_t erlang_b_inverse(double p_m, double rho);

/// floor((1 - z1)/c), 0 when z1 >= 1.
std::int64_t max_streaming_flows(double z1, double c);

struct StreamParams {
  double rho2 = 1.0;
  double c = 0.01;
  double weight = 1.0;  // priority coefficient of the elastic class
};

struct SupResult {
  double value = 0.0;  // sup_t of the occupied capacity weight * u1(t)
  bool from_initial = false;  // the first case: the path never exceeds u1(0)
  bool saturated = false;     // rho1 >= sup phibar_1: no finite limit
  bool monotone_checked = false;  // phibar_1 was nondecreasing on the probe grid
};

/// Supremum of the elastic fluid path: weight * u0 when rho1 is below
/// phibar_1(weight * u0), otherwise phibar_1^{-1}(rho1) (bisection to 1e-8).
SupResult u1_sup(double lambda1, double mu1, const StreamParams& s, double u0);

/// (1 - c g^{-1}(p_m)) / ubar. Throws ValidationError when the threshold is
/// not positive or ubar <= 0.
double qos_rescale(const QosTarget& target, double ubar);

struct QosReport {
  QosTarget target;
  double lambda1 = 0.0;
  double mu1 = 1.0;
  double weight = 1.0;
  double u0 = 0.0;
  std::int64_t circuits = 0;  // g^{-1}(p_m)
  double threshold = 0.0;     // 1 - c g^{-1}(p_m)
  SupResult ubar;
  double factor = 1.0;
  SupResult rescaled;  // u1_sup with weight * factor and the same u0
  bool post_check = false;  // rescaled.value <= threshold + 1e-6
};

QosReport qos_report(double lambda1, double mu1, const QosTarget& target, double weight,
                     double u0);

void write_report(std::ostream& os, const QosReport& r);

}  // namespace bwshare

#endif  // BWSHARE_QOS_HPP

#include "bwshare/stationary.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "bwshare/errors.hpp"

namespace bwshare {

namespace {

constexpr std::int64_t kMaxSupport1d = 10'000'000;

double default_tol(std::size_t dim) { return dim <= 1 ? 1e-10 : 1e-8; }

// Side at which a geometric tail of ratio rho has dropped below tol / 10.
std::int64_t initial_side(double rho, double tol) {
  if (!std::isfinite(rho) || rho >= 1.0) return 64;
  if (rho <= 0.0) return 8;
  const double m = std::ceil(std::log(0.1 * tol) / std::log(rho));
  return static_cast<std::int64_t>(std::min(64.0, std::max(8.0, m)));
}

std::size_t box_states(const std::vector<std::int64_t>& box) {
  std::size_t n = 1;
  for (auto m : box) n *= static_cast<std::size_t>(m + 1);
  return n;
}

}  // namespace

std::vector<std::int64_t> StationaryDistribution::state(std::size_t flat) const {
  std::vector<std::int64_t> y(box.size());
  for (std::size_t j = box.size(); j-- > 0;) {
    const auto side = static_cast<std::size_t>(box[j] + 1);
    y[j] = static_cast<std::int64_t>(flat % side);
    flat /= side;
  }
  return y;
}

std::size_t StationaryDistribution::index(std::span<const std::int64_t> y) const {
  std::size_t flat = 0;
  for (std::size_t j = 0; j < box.size(); ++j) {
    flat = flat * static_cast<std::size_t>(box[j] + 1) + static_cast<std::size_t>(y[j]);
  }
  return flat;
}

double StationaryDistribution::at(std::span<const std::int64_t> y) const {
  for (std::size_t j = 0; j < box.size(); ++j) {
    if (y[j] < 0 || y[j] > box[j]) return 0.0;
  }
  return prob[index(y)];
}

double StationaryDistribution::expectation(
    const std::function<double(std::span<const std::int64_t>)>& f) const {
  double s = 0.0;
  for (std::size_t k = 0; k < prob.size(); ++k) {
    if (prob[k] > 0.0) s += prob[k] * f(state(k));
  }
  return s;
}

std::vector<double> StationaryDistribution::mean() const {
  std::vector<double> m(box.size(), 0.0);
  for (std::size_t k = 0; k < prob.size(); ++k) {
    if (prob[k] <= 0.0) continue;
    const auto y = state(k);
    for (std::size_t j = 0; j < y.size(); ++j) m[j] += prob[k] * static_cast<double>(y[j]);
  }
  return m;
}

FrozenChain frozen_chain(const NetworkModel& model, std::span<const double> z) {
  const std::size_t c = model.surge_count();
  const std::size_t n = model.size();
  if (z.size() != c) {
    throw ValidationError("frozen chain: need " + std::to_string(c) + " surge values");
  }
  std::vector<double> zz(z.begin(), z.end());
  for (double& v : zz) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("frozen chain: surge values must be finite and >= 0");
    }
    if (v <= 0.0) v = kZeroPlus;
  }
  FrozenChain chain;
  chain.z = zz;
  const auto weights = model.weights();
  const auto mu = model.service_rates();
  for (std::size_t j = c; j < n; ++j) chain.arrival.push_back(model.classes[j].arrival_rate);

  auto flat = [zz, c, n](std::span<const std::int64_t> y) {
    std::vector<double> x(n);
    std::copy(zz.begin(), zz.end(), x.begin());
    for (std::size_t j = 0; j < n - c; ++j) x[c + j] = static_cast<double>(y[j]);
    return x;
  };
  const AllocationSpec alloc = model.allocation;
  chain.death = [=](std::span<const std::int64_t> y) {
    const auto phi = allocate(alloc, weights, flat(y));
    std::vector<double> d(n - c);
    for (std::size_t j = 0; j < n - c; ++j) d[j] = y[j] > 0 ? mu[c + j] * phi[c + j] : 0.0;
    return d;
  };
  if (has_admission_control(alloc)) {
    chain.admits = [=](std::span<const std::int64_t> y, std::size_t j) {
      return admits(alloc, weights, flat(y), c + j);
    };
  }
  // Coupled classes share the link, so each marginal decays at the total load.
  double total = 0.0;
  for (std::size_t j = c; j < n; ++j) total += model.classes[j].load();
  chain.load_hint.assign(n - c, total);
  return chain;
}

StationaryDistribution stationary_1d(double lambda,
                                     const std::function<double(std::int64_t)>& death,
                                     std::optional<std::int64_t> support_max, double tol) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("stationary_1d: birth rate must be finite and >= 0");
  }
  if (support_max && *support_max < 0) throw ValidationError("stationary_1d: empty support");
  const std::int64_t cap = support_max ? *support_max : kMaxSupport1d;

  std::vector<double> w{1.0};
  std::vector<double> d{0.0};
  double sum = 1.0;
  double tail = 0.0;
  bool settled = false;
  for (std::int64_t k = 1; k <= cap; ++k) {
    const double dk = death(k);
    if (!(dk > 0.0) || !std::isfinite(dk)) {
      throw ValidationError("stationary_1d: death rate at " + std::to_string(k) +
                            " must be finite and > 0");
    }
    const double next = w.back() * lambda / dk;
    w.push_back(next);
    d.push_back(dk);
    sum += next;
    if (sum > 1e280) {
      for (double& v : w) v /= sum;
      sum = 1.0;
    }
    if (!support_max) {
      if (next == 0.0) {
        settled = true;
        break;
      }
      // Geometric bound, valid while the ratio lambda / death keeps falling.
      const double r = lambda / dk;
      if (r < 1.0 && k >= 2) {
        const double bound = w.back() * r / (1.0 - r) / sum;
        if (bound <= tol) {
          tail = bound;
          settled = true;
          break;
        }
      }
    }
  }
  if (!support_max && !settled) {
    throw StationaryDivergence("stationary_1d: no convergence within the support cap", 1.0);
  }
  StationaryDistribution pi;
  pi.box = {static_cast<std::int64_t>(w.size()) - 1};
  pi.prob.resize(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) pi.prob[k] = w[k] / sum;
  pi.tail_mass = tail;
  double res = 0.0;
  const std::size_t last = w.size() - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    double flow = 0.0;
    const double out_birth = k < last ? lambda : 0.0;
    const double out_death = k > 0 ? d[k] : 0.0;
    flow -= pi.prob[k] * (out_birth + out_death);
    if (k > 0) flow += pi.prob[k - 1] * lambda;
    if (k < last) flow += pi.prob[k + 1] * d[k + 1];
    res = std::max(res, std::abs(flow));
  }
  pi.residual = res;
  return pi;
}

StationaryDistribution stationary_multi(const FrozenChain& chain, double tol,
                                        std::size_t max_states) {
  const std::size_t dim = chain.dimension();
  if (dim == 0) throw ValidationError("stationary_multi: no stable class");
  if (!chain.death) throw ValidationError("stationary_multi: missing death rates");

  std::vector<std::int64_t> box(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double rho = j < chain.load_hint.size() ? chain.load_hint[j] : 1.0;
    box[j] = initial_side(rho, tol);
  }
  while (box_states(box) > max_states) {
    auto it = std::max_element(box.begin(), box.end());
    *it = std::max<std::int64_t>(1, *it / 2);
    if (*it == 1 && box_states(box) > max_states) break;
  }

  auto can_arrive = [&](const std::vector<std::int64_t>& y, std::size_t j) {
    if (chain.arrival[j] <= 0.0) return false;
    return !chain.admits || chain.admits(y, j);
  };

  std::vector<double> history;
  for (std::size_t refinement = 0;; ++refinement) {
    StationaryDistribution pi;
    pi.box = box;
    pi.refinements = refinement;
    const std::size_t total = box_states(box);

    // Reachable states from the origin inside the box.
    std::vector<std::int64_t> local(total, -1);
    std::vector<std::size_t> states;
    std::vector<std::vector<std::pair<std::size_t, double>>> out_edges;
    local[0] = 0;
    states.push_back(0);
    for (std::size_t head = 0; head < states.size(); ++head) {
      const std::size_t flat = states[head];
      auto y = pi.state(flat);
      const auto dr = chain.death(y);
      std::vector<std::pair<std::size_t, double>> edges;
      for (std::size_t j = 0; j < dim; ++j) {
        if (y[j] < box[j] && can_arrive(y, j)) {
          ++y[j];
          edges.emplace_back(pi.index(y), chain.arrival[j]);
          --y[j];
        }
        if (y[j] > 0 && dr[j] > 0.0) {
          if (!std::isfinite(dr[j])) {
            throw NumericalError("stationary_multi: non-finite death rate");
          }
          --y[j];
          edges.emplace_back(pi.index(y), dr[j]);
          ++y[j];
        }
      }
      for (const auto& e : edges) {
        if (local[e.first] < 0) {
          local[e.first] = static_cast<std::int64_t>(states.size());
          states.push_back(e.first);
        }
      }
      out_edges.push_back(std::move(edges));
    }
    const auto m = static_cast<Eigen::Index>(states.size());

    pi.prob.assign(total, 0.0);
    if (m == 1) {
      pi.prob[0] = 1.0;
      return pi;
    }
    // Q^T pi = 0 with the first equation replaced by normalization.
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index s = 0; s < m; ++s) {
      double out_rate = 0.0;
      for (const auto& [to, rate] : out_edges[static_cast<std::size_t>(s)]) {
        out_rate += rate;
        const auto t = static_cast<Eigen::Index>(local[to]);
        if (t != 0) trip.emplace_back(t, s, rate);
      }
      if (s != 0) trip.emplace_back(s, s, -out_rate);
      trip.emplace_back(0, s, 1.0);
    }
    Eigen::SparseMatrix<double> A(m, m);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) {
      throw SolverFailure("stationary_multi: sparse LU factorization failed", 1.0);
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs(0) = 1.0;
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) {
      throw SolverFailure("stationary_multi: sparse LU solve failed", 1.0);
    }
    double sum = 0.0;
    for (Eigen::Index s = 0; s < m; ++s) {
      x(s) = std::max(0.0, x(s));
      sum += x(s);
    }
    for (Eigen::Index s = 0; s < m; ++s) {
      pi.prob[states[static_cast<std::size_t>(s)]] = x(s) / sum;
    }

    std::vector<double> flow(static_cast<std::size_t>(m), 0.0);
    for (Eigen::Index s = 0; s < m; ++s) {
      const double p = x(s) / sum;
      for (const auto& [to, rate] : out_edges[static_cast<std::size_t>(s)]) {
        flow[static_cast<std::size_t>(s)] -= p * rate;
        flow[static_cast<std::size_t>(local[to])] += p * rate;
      }
    }
    for (double f : flow) pi.residual = std::max(pi.residual, std::abs(f));

    // Mass on faces where the truncation removes an admissible arrival.
    std::vector<double> face(dim, 0.0);
    for (std::size_t s : states) {
      const double p = pi.prob[s];
      if (p <= 0.0) continue;
      const auto y = pi.state(s);
      for (std::size_t j = 0; j < dim; ++j) {
        if (y[j] == box[j] && can_arrive(y, j)) face[j] += p;
      }
    }
    const double boundary = std::accumulate(face.begin(), face.end(), 0.0);
    pi.tail_mass = boundary;
    if (boundary <= tol) return pi;

    // An ergodic tail loses most of its face mass when the box doubles; two
    // refinements in a row that barely move it mean the mass escapes.
    history.push_back(boundary);
    const std::size_t h = history.size();
    const bool stalled =
        h >= 3 && history[h - 1] > 0.9 * history[h - 2] && history[h - 2] > 0.9 * history[h - 3];

    auto next = box;
    for (std::size_t j = 0; j < dim; ++j) {
      if (face[j] > tol / static_cast<double>(dim)) next[j] *= 2;
    }
    if (stalled || box_states(next) > max_states) {
      std::ostringstream msg;
      msg << "stationary_multi: boundary mass " << std::scientific << std::setprecision(3)
          << boundary << " does not shrink as the box grows; the frozen chain is likely not ergodic";
      throw StationaryDivergence(msg.str(), boundary);
    }
    box = next;
  }
}

StationaryDistribution stationary(const NetworkModel& model, std::span<const double> z,
                                  double tol) {
  const FrozenChain chain = frozen_chain(model, z);
  const std::size_t dim = chain.dimension();
  if (tol <= 0.0) tol = default_tol(dim);
  if (dim != 1) return stationary_multi(chain, tol);

  std::optional<std::int64_t> support;
  if (chain.admits) {
    std::int64_t n = 0;
    std::vector<std::int64_t> y{0};
    while (n < kMaxSupport1d) {
      y[0] = n;
      if (!chain.admits(y, 0)) break;
      ++n;
    }
    support = n;
  }
  std::vector<std::int64_t> y{0};
  auto death = [&](std::int64_t k) {
    y[0] = k;
    return chain.death(y)[0];
  };
  return stationary_1d(chain.arrival[0], death, support, tol);
}

std::vector<double> averaged_rate(const NetworkModel& model, std::span<const double> z,
                                  double tol) {
  const std::size_t c = model.surge_count();
  const std::size_t n = model.size();
  const auto pi = stationary(model, z, tol);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < c; ++i) x[i] = z[i] > 0.0 ? z[i] : kZeroPlus;
  const auto weights = model.weights();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < pi.prob.size(); ++k) {
    const double p = pi.prob[k];
    if (p <= 0.0) continue;
    const auto y = pi.state(k);
    for (std::size_t j = 0; j < n - c; ++j) x[c + j] = static_cast<double>(y[j]);
    const auto phi = allocate(model.allocation, weights, x);
    for (std::size_t i = 0; i < n; ++i) out[i] += p * phi[i];
  }
  return out;
}

std::vector<double> drift(const NetworkModel& model, std::span<const double> z,
                          const TrafficProfile& profile, double t, double tol) {
  const auto phibar = averaged_rate(model, z, tol);
  const std::size_t c = model.surge_count();
  std::vector<double> d(c);
  for (std::size_t i = 0; i < c; ++i) {
    const auto& cls = model.classes[i];
    d[i] = profile.slope(i, t, cls.arrival_rate) - cls.service_rate * phibar[i];
  }
  return d;
}

std::vector<double> AveragedRateCache::get(const NetworkModel& model, std::span<const double> z,
                                           double tol) {
  std::vector<std::int64_t> key(z.size());
  std::vector<double> snapped(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    key[i] = std::llround(z[i] / step_);
    snapped[i] = static_cast<double>(key[i]) * step_;
  }
  {
    std::lock_guard lock(mutex_);
    if (auto it = values_.find(key); it != values_.end()) return it->second;
  }
  auto value = averaged_rate(model, snapped, tol);
  std::lock_guard lock(mutex_);
  values_.emplace(key, value);
  return value;
}

std::size_t AveragedRateCache::size() const {
  std::lock_guard lock(mutex_);
  return values_.size();
}

void write_csv(std::ostream& os, const StationaryDistribution& pi, std::size_t first_class) {
  for (std::size_t j = 0; j < pi.dimension(); ++j) os << 'x' << first_class + j + 1 << ',';
  os << "probability\n";
  os << std::setprecision(15);
  for (std::size_t k = 0; k < pi.prob.size(); ++k) {
    for (auto v : pi.state(k)) os << v << ',';
    os << pi.prob[k] << '\n';
  }
}

}  // namespace bwshare

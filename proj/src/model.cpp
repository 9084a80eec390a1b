#include "bwshare/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bwshare {

namespace {

// Index of the segment containing t: largest k with t_k <= t.
std::size_t segment(const std::vector<Breakpoint>& bp, double t) {
  auto it = std::upper_bound(bp.begin(), bp.end(), t,
                             [](double v, const Breakpoint& b) { return v < b.t; });
  if (it == bp.begin()) return 0;
  return static_cast<std::size_t>(it - bp.begin()) - 1;
}

double segment_slope(const std::vector<Breakpoint>& bp, std::size_t k) {
  if (bp.size() < 2) return 0.0;
  if (k + 1 >= bp.size()) k = bp.size() - 2;
  return (bp[k + 1].a - bp[k].a) / (bp[k + 1].t - bp[k].t);
}

void check_alloc(const AllocationSpec& spec, std::size_t n, const std::string& where,
                 std::vector<Violation>& out) {
  if (const auto dim = spec.dimension(); dim && *dim != n) {
    out.push_back({where, "allocation is defined for " + std::to_string(*dim) +
                              " classes, model has " + std::to_string(n)});
  }
  if (const auto* s = std::get_if<DpsSpec>(&spec.variant)) {
    if (!(s->capacity > 0.0)) out.push_back({where + ".capacity", "must be > 0"});
  } else if (const auto* s = std::get_if<PfSpec>(&spec.variant)) {
    if (s->incidence.size() != s->capacity.size() || s->capacity.empty()) {
      out.push_back({where + ".A", "need one incidence row per link capacity"});
      return;
    }
    for (std::size_t l = 0; l < s->capacity.size(); ++l) {
      if (!(s->capacity[l] > 0.0)) {
        out.push_back({where + ".C[" + std::to_string(l) + "]", "must be > 0"});
      }
      if (s->incidence[l].size() != s->incidence.front().size()) {
        out.push_back({where + ".A[" + std::to_string(l) + "]", "ragged incidence matrix"});
        return;
      }
      for (double a : s->incidence[l]) {
        if (a < 0.0) out.push_back({where + ".A", "entries must be nonnegative"});
      }
    }
    for (std::size_t j = 0; j < s->incidence.front().size(); ++j) {
      bool used = false;
      for (const auto& row : s->incidence) used = used || row[j] > 0.0;
      if (!used) {
        out.push_back({where + ".A", "route " + std::to_string(j + 1) + " uses no link"});
      }
    }
    if (!(s->tol > 0.0)) out.push_back({where + ".tol", "must be > 0"});
  } else if (const auto* s = std::get_if<TreeSpec>(&spec.variant)) {
    if (!(s->c1 > 0.0 && s->c1 <= 1.0)) out.push_back({where + ".c1", "must lie in (0,1]"});
    if (!(s->c2 > 0.0 && s->c2 <= 1.0)) out.push_back({where + ".c2", "must lie in (0,1]"});
    if (s->c1 + s->c2 < 1.0) {
      out.push_back({where, "c1 + c2 < 1: class 2 would be handed 1 - c1 > c2"});
    }
  } else if (const auto* s = std::get_if<StreamElasticSpec>(&spec.variant)) {
    if (!(s->c > 0.0 && s->c < 1.0)) out.push_back({where + ".c", "must lie in (0,1)"});
  } else if (const auto* s = std::get_if<PrioritySpec>(&spec.variant)) {
    if (!s->inner) {
      out.push_back({where + ".inner", "missing inner allocation"});
      return;
    }
    check_alloc(*s->inner, n, where + ".inner", out);
  }
}

}  // namespace

double TrafficProfile::cumulative(std::size_t i, double t, double fallback_rate) const {
  if (!has_curve(i)) return fallback_rate * t;
  const auto& bp = curves_[i];
  if (bp.size() == 1) return bp[0].a;
  const std::size_t k = segment(bp, t);
  return bp[k].a + segment_slope(bp, k) * (t - bp[k].t);
}

double TrafficProfile::slope(std::size_t i, double t, double fallback_rate) const {
  if (!has_curve(i)) return fallback_rate;
  return segment_slope(curves_[i], segment(curves_[i], t));
}

double TrafficProfile::next_change(std::size_t i, double t) const {
  if (!has_curve(i)) return std::numeric_limits<double>::infinity();
  const auto& bp = curves_[i];
  // The last breakpoint does not change the slope (it is continued).
  for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
    if (bp[k].t > t) return bp[k].t;
  }
  return std::numeric_limits<double>::infinity();
}

double TrafficProfile::next_change(double t) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curves_.size(); ++i) best = std::min(best, next_change(i, t));
  return best;
}

std::size_t NetworkModel::surge_count() const {
  return static_cast<std::size_t>(
      std::count_if(classes.begin(), classes.end(), [](const auto& c) { return c.is_surge; }));
}

double NetworkModel::total_load() const {
  double s = 0.0;
  for (const auto& c : classes) s += c.load();
  return s;
}

std::vector<double> NetworkModel::weights() const {
  std::vector<double> w;
  w.reserve(classes.size());
  for (const auto& c : classes) w.push_back(c.weight);
  return w;
}

std::vector<double> NetworkModel::arrival_rates() const {
  std::vector<double> r;
  r.reserve(classes.size());
  for (const auto& c : classes) r.push_back(c.arrival_rate);
  return r;
}

std::vector<double> NetworkModel::service_rates() const {
  std::vector<double> r;
  r.reserve(classes.size());
  for (const auto& c : classes) r.push_back(c.service_rate);
  return r;
}

std::vector<double> State::flat() const {
  std::vector<double> out(surge.begin(), surge.end());
  for (auto y : stable) out.push_back(static_cast<double>(y));
  return out;
}

std::vector<Violation> validate(const NetworkModel& model) {
  std::vector<Violation> out;
  const std::size_t n = model.classes.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = model.classes[i];
    const std::string where = "classes[" + std::to_string(i + 1) + "]";
    if (!(c.arrival_rate >= 0.0) || !std::isfinite(c.arrival_rate)) {
      out.push_back({where + ".lambda", "arrival rate must be finite and >= 0"});
    }
    if (!(c.service_rate > 0.0) || !std::isfinite(c.service_rate)) {
      out.push_back({where + ".mu", "service rate must be finite and > 0"});
    }
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      out.push_back({where + ".weight", "weight must be finite and > 0"});
    }
  }
  const std::size_t c = model.surge_count();
  if (c == 0) out.push_back({"classes", "no surge class"});
  if (n > 0 && c >= n) out.push_back({"classes", "no stable class (surge count equals N)"});
  for (std::size_t i = 0; i < n; ++i) {
    if (model.classes[i].is_surge != (i < c)) {
      out.push_back({"classes", "surge classes must occupy the leading indices"});
      break;
    }
  }
  check_alloc(model.allocation, n, "allocation", out);
  return out;
}

std::vector<Violation> validate(const NetworkModel& model, const TrafficProfile& profile) {
  auto out = validate(model);
  const std::size_t c = model.surge_count();
  if (profile.curves().size() > c) {
    out.push_back({"profile", "more arrival curves than surge classes"});
  }
  for (std::size_t i = 0; i < profile.curves().size(); ++i) {
    const auto& bp = profile.curves()[i];
    const std::string where = "profile[" + std::to_string(i + 1) + "]";
    if (bp.empty()) continue;
    if (bp.front().t != 0.0 || bp.front().a != 0.0) {
      out.push_back({where, "must start at (0, 0)"});
    }
    for (std::size_t k = 1; k < bp.size(); ++k) {
      if (!(bp[k].t > bp[k - 1].t)) out.push_back({where, "times must increase"});
      if (bp[k].a < bp[k - 1].a) out.push_back({where, "cumulative arrivals must not decrease"});
    }
  }
  return out;
}

}  // namespace bwshare

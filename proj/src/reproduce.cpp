#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "bwshare/ctmc.hpp"
#include "bwshare/fluid.hpp"
#include "bwshare/scenario.hpp"
#include "bwshare/stationary.hpp"

namespace bwshare {

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n' << std::setprecision(12);
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
    return os.str();
  }
};

struct Emitter {
  std::filesystem::path dir;
  std::string figure;
  RunSummary summary;

  void put(const std::string& curve, const Table& t) {
    write_output(summary, dir, figure + "_" + curve + ".csv", t.str());
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : summary.files) out.push_back(f.first);
    return out;
  }
};

NetworkModel dps3() {
  NetworkModel m;
  m.classes = {{0.5, 1.0, 1.0, true}, {0.3, 1.0, 1.0, false}, {0.1, 1.0, 1.0, false}};
  m.allocation = DpsSpec{1.0};
  return m;
}

NetworkModel tree_model(double lambda1, double weight1 = 1.0) {
  NetworkModel m;
  m.classes = {{lambda1, 1.0, weight1, true}, {0.5, 1.0, 1.0, false}};
  m.allocation = TreeSpec{0.4, 0.8};
  return m;
}

NetworkModel linear_model() {
  NetworkModel m;
  m.classes = {{0.5, 1.0, 1.0, true}, {0.7, 10.0, 1.0, false}, {0.02, 1.0, 1.0, false}};
  PfSpec pf;
  pf.incidence = {{1, 1, 0}, {1, 0, 1}};
  pf.capacity = {1, 1};
  m.allocation = pf;
  return m;
}

NetworkModel stream_model() {
  NetworkModel m;
  m.classes = {{0.6, 1.0, 1.0, true}, {0.2, 1.0, 1.0, false}};
  m.allocation = StreamElasticSpec{0.01};
  return m;
}

SimConfig config(std::int64_t K, double horizon, std::uint64_t seed, std::vector<double> surge0,
                 std::vector<std::int64_t> stable0) {
  SimConfig cfg;
  cfg.K = K;
  cfg.horizon = horizon;
  cfg.seed = seed;
  cfg.surge0 = std::move(surge0);
  cfg.stable0 = std::move(stable0);
  return cfg;
}

void fig3(Emitter& e, std::uint64_t seed) {
  const auto m = dps3();
  const double T = 12.0;
  const auto fluid = work_conserving_fast_path(m, {1.0}, T);
  const auto traj = simulate(m, {}, config(1000, T, derive_seed(seed, "fig3"), {1.0}, {0, 0}));
  Table t1{{"t", "y1", "u1"}, {}};
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    t1.rows.push_back({traj.times[k], traj.surge[k][0], fluid.at(traj.times[k])[0]});
  }
  e.put("class1", t1);

  const double window = 0.5;
  const auto w = window_average(
      traj, [](const State& s) { return static_cast<double>(s.stable[0]); }, window);
  Table t2{{"t", "window_mean_x2", "conditional_mean_x2"}, {}};
  for (std::size_t k = 0; k < w.t.size(); k += 10) {
    // Fluid-conditional mean of class 2 averaged over the same window.
    double cm = 0.0;
    const int sub = 5;
    for (int q = 0; q < sub; ++q) {
      const double tq = std::min(T, w.t[k] + window * (q + 0.5) / sub);
      const double z = fluid.at(tq)[0];
      cm += stationary(m, std::vector<double>{z}).mean()[0] / sub;
    }
    t2.rows.push_back({w.t[k], w.value[k], cm});
  }
  e.put("class2", t2);
}

void fig5(Emitter& e, std::uint64_t seed) {
  const double T = 60.0;
  for (double rho1 : {0.2, 0.3}) {
    const auto m = tree_model(rho1);
    const auto fluid = solve_fluid(m, {}, {1.0}, T);
    const auto traj = simulate(m, {}, config(1000, T, derive_seed(seed, "fig5/" + std::to_string(rho1)), {1.0}, {0}));
    Table t{{"t", "y1", "u1"}, {}};
    for (std::size_t k = 0; k < traj.times.size(); k += 10) {
      t.rows.push_back({traj.times[k], traj.surge[k][0], fluid.at(traj.times[k])[0]});
    }
    std::ostringstream name;
    name << "class1_rho1_" << rho1;
    e.put(name.str(), t);
    if (rho1 == 0.2) {
      // Class 2 against its mean under strict priority, rho2 / (c2 - rho2).
      const auto w = window_average(
          traj, [](const State& s) { return static_cast<double>(s.stable[0]); }, 1.0);
      Table t2{{"t", "window_mean_x2", "priority_mean_x2"}, {}};
      for (std::size_t k = 0; k < w.t.size(); k += 10) {
        t2.rows.push_back({w.t[k], w.value[k], 0.5 / (0.8 - 0.5)});
      }
      e.put("class2", t2);
    }
  }
}

void fig6(Emitter& e, std::uint64_t seed) {
  const auto m = linear_model();
  const std::int64_t K = 1000;
  const double T = 40.0;
  auto cfg = config(K, T, derive_seed(seed, "fig6/usual"), {10.0}, {K, K});
  cfg.scale_weights = false;
  const auto usual = simulate(m, {}, cfg);
  Table t1{{"t", "y1", "y2", "y3"}, {}};
  for (std::size_t k = 0; k < usual.times.size(); k += 5) {
    t1.rows.push_back({usual.times[k], usual.surge[k][0],
                       static_cast<double>(usual.stable[k][0]) / K,
                       static_cast<double>(usual.stable[k][1]) / K});
  }
  e.put("usual", t1);

  cfg.scale_weights = true;
  cfg.seed = derive_seed(seed, "fig6/priority");
  const auto prio = simulate(m, {}, cfg);
  Table t2{{"t", "y1", "x2", "x3"}, {}};
  for (std::size_t k = 0; k < prio.times.size(); k += 5) {
    t2.rows.push_back({prio.times[k], prio.surge[k][0], static_cast<double>(prio.stable[k][0]),
                       static_cast<double>(prio.stable[k][1])});
  }
  e.put("priority", t2);
}

void fig7(Emitter& e, std::uint64_t seed) {
  const double T = 30.0;
  const double rho2 = 0.2 / (1.0 * 0.01);
  const auto exact = stream_fluid(0.6, 1.0, rho2, 0.01, 0.0, T, StreamMode::Exact);
  const auto approx = stream_fluid(0.6, 1.0, rho2, 0.01, 0.0, T, StreamMode::PoissonApprox);
  const auto traj = simulate(stream_model(), {}, config(2000, T, derive_seed(seed, "fig7"), {0.0}, {0}));
  Table t{{"t", "y1", "u1_exact", "u1_poisson"}, {}};
  for (std::size_t k = 0; k < traj.times.size(); k += 5) {
    const double tk = traj.times[k];
    t.rows.push_back({tk, traj.surge[k][0], exact.at(tk)[0], approx.at(tk)[0]});
  }
  e.put("elastic", t);
}

void tree_compare(Emitter& e, std::uint64_t) {
  const double T = 60.0;
  const auto tree = solve_fluid(tree_model(0.3), {}, {1.0}, T);
  // r1 -> 0: the tree allocation gives class 2 strict priority.
  const auto prio = solve_fluid(tree_model(0.3, 1e-9), {}, {1.0}, T);
  Table a{{"t", "u1"}, {}};
  Table b{{"t", "u1"}, {}};
  for (std::size_t k = 0; k < tree.t.size(); k += 10) {
    a.rows.push_back({tree.t[k], tree.u[k][0]});
    b.rows.push_back({tree.t[k], prio.at(tree.t[k])[0]});
  }
  e.put("tree", a);
  e.put("priority", b);
}

}  // namespace

std::vector<std::string> figure_ids() {
  return {"fig3", "fig5", "fig6", "fig7", "tree-priority-compare"};
}

std::vector<std::string> reproduce(const std::string& figure, const std::filesystem::path& out,
                                   std::uint64_t seed, std::size_t) {
  Emitter e{out, figure, {}};
  if (figure == "fig3") {
    fig3(e, seed);
  } else if (figure == "fig5") {
    fig5(e, seed);
  } else if (figure == "fig6") {
    fig6(e, seed);
  } else if (figure == "fig7") {
    fig7(e, seed);
  } else if (figure == "tree-priority-compare") {
    tree_compare(e, seed);
  } else {
    std::string msg = "unknown figure '" + figure + "'; valid ids:";
    for (const auto& id : figure_ids()) msg += " " + id;
    throw ConfigError(msg);
  }
  return e.names();
}

}  // namespace bwshare

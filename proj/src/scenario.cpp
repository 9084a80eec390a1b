#include "bwshare/scenario.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "bwshare/ctmc.hpp"
#include "bwshare/fluid.hpp"
#include "bwshare/qos.hpp"
#include "bwshare/stationary.hpp"

namespace bwshare {

using nlohmann::json;

namespace {

// ---- reading -------------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& item : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* k) { return item.key() == k; });
    if (!ok) fail(path + "." + item.key(), "unknown field");
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const json& need(const json& j, const char* key, const std::string& path) {
  const json* v = find(j, key);
  if (!v) fail(path + "." + key, "missing");
  return *v;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

std::int64_t as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

double number_or(const json& j, const char* key, const std::string& path, double fallback) {
  const json* v = find(j, key);
  return v ? as_number(*v, path + "." + key) : fallback;
}

bool bool_or(const json& j, const char* key, const std::string& path, bool fallback) {
  const json* v = find(j, key);
  return v ? as_bool(*v, path + "." + key) : fallback;
}

std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<std::int64_t> integers(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of integers");
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_integer(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

AllocationSpec read_allocation(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  const json& kind_json = need(j, "kind", path);
  if (!kind_json.is_string()) fail(path + ".kind", "expected a string");
  const auto kind = kind_json.get<std::string>();
  if (kind == "dps") {
    check_keys(j, path, {"kind", "capacity"});
    return DpsSpec{number_or(j, "capacity", path, 1.0)};
  }
  if (kind == "proportional_fair") {
    check_keys(j, path, {"kind", "A", "C", "tol", "max_iterations", "closed_form"});
    PfSpec s;
    const json& a = need(j, "A", path);
    if (!a.is_array()) fail(path + ".A", "expected an array of rows");
    for (std::size_t l = 0; l < a.size(); ++l) {
      s.incidence.push_back(numbers(a[l], path + ".A[" + std::to_string(l) + "]"));
    }
    s.capacity = numbers(need(j, "C", path), path + ".C");
    s.tol = number_or(j, "tol", path, s.tol);
    if (const json* v = find(j, "max_iterations")) {
      const auto it = as_integer(*v, path + ".max_iterations");
      if (it < 1) fail(path + ".max_iterations", "must be >= 1");
      s.max_iterations = static_cast<std::size_t>(it);
    }
    s.closed_form = bool_or(j, "closed_form", path, true);
    return s;
  }
  if (kind == "tree") {
    check_keys(j, path, {"kind", "c1", "c2"});
    return TreeSpec{as_number(need(j, "c1", path), path + ".c1"),
                    as_number(need(j, "c2", path), path + ".c2")};
  }
  if (kind == "stream_elastic") {
    check_keys(j, path, {"kind", "c"});
    return StreamElasticSpec{as_number(need(j, "c", path), path + ".c")};
  }
  if (kind == "priority") {
    check_keys(j, path, {"kind", "surge_count", "inner"});
    const auto c = as_integer(need(j, "surge_count", path), path + ".surge_count");
    if (c < 1) fail(path + ".surge_count", "must be >= 1");
    return priority_wrap(read_allocation(need(j, "inner", path), path + ".inner"),
                         static_cast<std::size_t>(c));
  }
  fail(path + ".kind", "unknown allocation '" + kind +
                           "' (expected dps, proportional_fair, tree, stream_elastic, priority)");
}

NetworkModel read_model(const json& j) {
  const std::string path = "model";
  check_keys(j, path, {"classes", "allocation"});
  NetworkModel m;
  const json& cls = need(j, "classes", path);
  if (!cls.is_array() || cls.empty()) fail(path + ".classes", "expected a non-empty array");
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const std::string p = path + ".classes[" + std::to_string(i) + "]";
    check_keys(cls[i], p, {"lambda", "mu", "weight", "surge"});
    TrafficClass c;
    c.arrival_rate = as_number(need(cls[i], "lambda", p), p + ".lambda");
    c.service_rate = number_or(cls[i], "mu", p, 1.0);
    c.weight = number_or(cls[i], "weight", p, 1.0);
    c.is_surge = bool_or(cls[i], "surge", p, false);
    m.classes.push_back(c);
  }
  m.allocation = read_allocation(need(j, "allocation", path), path + ".allocation");
  return m;
}

TrafficProfile read_profile(const json& j) {
  if (j.is_null()) return {};
  if (!j.is_array()) fail("profile", "expected an array with one breakpoint list per surge class");
  std::vector<std::vector<Breakpoint>> curves;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = "profile[" + std::to_string(i) + "]";
    if (!j[i].is_array()) fail(p, "expected an array of [t, a] pairs");
    std::vector<Breakpoint> curve;
    for (std::size_t k = 0; k < j[i].size(); ++k) {
      const auto pair = numbers(j[i][k], p + "[" + std::to_string(k) + "]");
      if (pair.size() != 2) fail(p + "[" + std::to_string(k) + "]", "expected [t, a]");
      curve.push_back({pair[0], pair[1]});
    }
    curves.push_back(std::move(curve));
  }
  return TrafficProfile(std::move(curves));
}

SimSettings read_sim(const json& j) {
  SimSettings s;
  if (j.is_null()) return s;
  const std::string path = "sim";
  check_keys(j, path, {"K", "horizon", "dt", "seed", "runs", "surge0", "stable0", "stable0_per_K",
                       "scale_weights", "freeze_surge", "compare_usual"});
  if (const json* v = find(j, "K")) s.K = v->is_array() ? integers(*v, "sim.K")
                                                        : std::vector{as_integer(*v, "sim.K")};
  s.horizon = number_or(j, "horizon", path, s.horizon);
  s.dt = number_or(j, "dt", path, s.dt);
  if (const json* v = find(j, "seed")) {
    if (!v->is_number_unsigned() && !v->is_number_integer()) fail("sim.seed", "expected an integer");
    s.seed = v->get<std::uint64_t>();
  }
  if (const json* v = find(j, "runs")) {
    const auto r = as_integer(*v, "sim.runs");
    if (r < 1) fail("sim.runs", "must be >= 1");
    s.runs = static_cast<std::size_t>(r);
  }
  if (const json* v = find(j, "surge0")) s.surge0 = numbers(*v, "sim.surge0");
  if (const json* v = find(j, "stable0")) s.stable0 = integers(*v, "sim.stable0");
  s.stable0_per_K = bool_or(j, "stable0_per_K", path, false);
  s.scale_weights = bool_or(j, "scale_weights", path, true);
  s.freeze_surge = bool_or(j, "freeze_surge", path, false);
  s.compare_usual = bool_or(j, "compare_usual", path, false);
  return s;
}

FluidSettings read_fluid(const json& j) {
  FluidSettings f;
  if (j.is_null()) return f;
  const std::string path = "fluid";
  check_keys(j, path, {"u0", "horizon", "tol", "dt_out", "box", "fast_path", "arrival_sweep"});
  if (const json* v = find(j, "u0")) f.u0 = numbers(*v, "fluid.u0");
  f.horizon = number_or(j, "horizon", path, f.horizon);
  f.tol = number_or(j, "tol", path, f.tol);
  f.dt_out = number_or(j, "dt_out", path, f.dt_out);
  f.box = number_or(j, "box", path, f.box);
  f.fast_path = bool_or(j, "fast_path", path, false);
  if (const json* v = find(j, "arrival_sweep")) f.arrival_sweep = numbers(*v, "fluid.arrival_sweep");
  return f;
}

OutputSettings read_outputs(const json& j) {
  OutputSettings o;
  if (j.is_null()) return o;
  const std::string path = "outputs";
  check_keys(j, path, {"trajectories", "fluid", "deviation", "window", "window_class",
                       "equilibria", "qos"});
  o.trajectories = bool_or(j, "trajectories", path, o.trajectories);
  o.fluid = bool_or(j, "fluid", path, o.fluid);
  o.deviation = bool_or(j, "deviation", path, o.deviation);
  if (const json* v = find(j, "window"); v && !v->is_null()) o.window = as_number(*v, "outputs.window");
  if (const json* v = find(j, "window_class")) {
    const auto c = as_integer(*v, "outputs.window_class");
    if (c < 1) fail("outputs.window_class", "must be >= 1");
    o.window_class = static_cast<std::size_t>(c);
  }
  o.equilibria = bool_or(j, "equilibria", path, false);
  if (const json* v = find(j, "qos"); v && !v->is_null()) {
    check_keys(*v, "outputs.qos", {"p_m"});
    o.qos_p_m = as_number(need(*v, "p_m", "outputs.qos"), "outputs.qos.p_m");
  }
  return o;
}

// ---- writing -------------------------------------------------------------

json allocation_json(const AllocationSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, DpsSpec>) {
          return {{"kind", "dps"}, {"capacity", s.capacity}};
        } else if constexpr (std::is_same_v<T, PfSpec>) {
          return {{"kind", "proportional_fair"}, {"A", s.incidence}, {"C", s.capacity},
                  {"tol", s.tol}, {"max_iterations", s.max_iterations},
                  {"closed_form", s.closed_form}};
        } else if constexpr (std::is_same_v<T, TreeSpec>) {
          return {{"kind", "tree"}, {"c1", s.c1}, {"c2", s.c2}};
        } else if constexpr (std::is_same_v<T, StreamElasticSpec>) {
          return {{"kind", "stream_elastic"}, {"c", s.c}};
        } else {
          return {{"kind", "priority"}, {"surge_count", s.surge_count},
                  {"inner", s.inner ? allocation_json(*s.inner) : json()}};
        }
      },
      spec.variant);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void require_valid(const Scenario& s) {
  const auto v = validate(s);
  if (v.empty()) return;
  std::string msg = "invalid scenario";
  for (const auto& e : v) msg += "\n  " + e.field + ": " + e.message;
  throw ConfigError(msg);
}

std::string to_text(const std::function<void(std::ostream&)>& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

}  // namespace

// ---- public --------------------------------------------------------------

Scenario parse_scenario(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    if (const auto p = what.find("parse error"); p != std::string::npos) what = what.substr(p);
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      what);
  }
  check_keys(j, "scenario", {"name", "model", "profile", "sim", "fluid", "outputs"});
  Scenario s;
  if (const json* v = find(j, "name")) {
    if (!v->is_string()) fail("name", "expected a string");
    s.name = v->get<std::string>();
  }
  s.model = read_model(need(j, "model", "scenario"));
  s.profile = read_profile(j.value("profile", json()));
  s.sim = read_sim(j.value("sim", json()));
  s.fluid = read_fluid(j.value("fluid", json()));
  s.outputs = read_outputs(j.value("outputs", json()));
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json_string(const Scenario& s) {
  json j;
  j["name"] = s.name;
  json classes = json::array();
  for (const auto& c : s.model.classes) {
    classes.push_back({{"lambda", c.arrival_rate}, {"mu", c.service_rate}, {"weight", c.weight},
                       {"surge", c.is_surge}});
  }
  j["model"] = {{"classes", classes}, {"allocation", allocation_json(s.model.allocation)}};
  json profile = json::array();
  for (const auto& curve : s.profile.curves()) {
    json pts = json::array();
    for (const auto& bp : curve) pts.push_back({bp.t, bp.a});
    profile.push_back(pts);
  }
  j["profile"] = profile;
  j["sim"] = {{"K", s.sim.K},
              {"horizon", s.sim.horizon},
              {"dt", s.sim.dt},
              {"seed", s.sim.seed},
              {"runs", s.sim.runs},
              {"surge0", s.sim.surge0},
              {"stable0", s.sim.stable0},
              {"stable0_per_K", s.sim.stable0_per_K},
              {"scale_weights", s.sim.scale_weights},
              {"freeze_surge", s.sim.freeze_surge},
              {"compare_usual", s.sim.compare_usual}};
  j["fluid"] = {{"u0", s.fluid.u0},           {"horizon", s.fluid.horizon},
                {"tol", s.fluid.tol},         {"dt_out", s.fluid.dt_out},
                {"box", s.fluid.box},         {"fast_path", s.fluid.fast_path},
                {"arrival_sweep", s.fluid.arrival_sweep}};
  json out = {{"trajectories", s.outputs.trajectories},
              {"fluid", s.outputs.fluid},
              {"deviation", s.outputs.deviation},
              {"window_class", s.outputs.window_class},
              {"equilibria", s.outputs.equilibria}};
  if (s.outputs.window) out["window"] = *s.outputs.window;
  if (s.outputs.qos_p_m) out["qos"] = {{"p_m", *s.outputs.qos_p_m}};
  j["outputs"] = out;
  return j.dump(2) + "\n";
}

std::vector<Violation> validate(const Scenario& s) {
  auto out = validate(s.model, s.profile);
  for (auto& v : out) v.field = "model." + v.field;
  const std::size_t c = s.model.surge_count();
  const std::size_t n = s.model.size();
  if (s.sim.K.empty()) out.push_back({"sim.K", "need at least one K"});
  for (std::size_t i = 0; i < s.sim.K.size(); ++i) {
    if (s.sim.K[i] < 1) out.push_back({"sim.K[" + std::to_string(i) + "]", "must be >= 1"});
    if (i > 0 && s.sim.K[i] <= s.sim.K[i - 1]) {
      out.push_back({"sim.K", "K values must be strictly increasing"});
    }
  }
  if (!(s.sim.horizon > 0.0)) out.push_back({"sim.horizon", "must be > 0"});
  if (!(s.sim.dt > 0.0)) out.push_back({"sim.dt", "must be > 0"});
  if (!s.sim.surge0.empty() && s.sim.surge0.size() != c) {
    out.push_back({"sim.surge0", "need one value per surge class"});
  }
  if (!s.sim.stable0.empty() && s.sim.stable0.size() != n - c) {
    out.push_back({"sim.stable0", "need one value per stable class"});
  }
  for (double v : s.sim.surge0) {
    if (!(v >= 0.0)) out.push_back({"sim.surge0", "must be >= 0"});
  }
  for (auto v : s.sim.stable0) {
    if (v < 0) out.push_back({"sim.stable0", "must be >= 0"});
  }
  if (!s.fluid.u0.empty() && s.fluid.u0.size() != c) {
    out.push_back({"fluid.u0", "need one value per surge class"});
  }
  for (double v : s.fluid.u0) {
    if (!(v >= 0.0)) out.push_back({"fluid.u0", "must be >= 0"});
  }
  if (!(s.fluid.horizon > 0.0)) out.push_back({"fluid.horizon", "must be > 0"});
  if (!(s.fluid.tol > 0.0)) out.push_back({"fluid.tol", "must be > 0"});
  if (!(s.fluid.dt_out > 0.0)) out.push_back({"fluid.dt_out", "must be > 0"});
  if (!(s.fluid.box > 0.0)) out.push_back({"fluid.box", "must be > 0"});
  for (double v : s.fluid.arrival_sweep) {
    if (!(v >= 0.0)) out.push_back({"fluid.arrival_sweep", "arrival rates must be >= 0"});
  }
  if (s.outputs.window) {
    if (!(*s.outputs.window > 0.0)) out.push_back({"outputs.window", "must be > 0"});
    if (s.outputs.window_class <= c || s.outputs.window_class > n) {
      out.push_back({"outputs.window_class", "must name a stable class"});
    }
  }
  if (s.outputs.qos_p_m) {
    if (!(*s.outputs.qos_p_m > 0.0 && *s.outputs.qos_p_m < 1.0)) {
      out.push_back({"outputs.qos.p_m", "must lie in (0,1)"});
    }
    if (!std::holds_alternative<StreamElasticSpec>(s.model.allocation.variant)) {
      out.push_back({"outputs.qos", "needs a stream_elastic allocation"});
    }
  }
  return out;
}

std::vector<std::string> builtin_names() { return {"dps3", "tree", "linear-surge", "stream"}; }

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "dps3") {
    s.model.classes = {{0.5, 1.0, 1.0, true}, {0.3, 1.0, 1.0, false}, {0.1, 1.0, 1.0, false}};
    s.model.allocation = DpsSpec{1.0};
    s.sim.K = {200, 1000, 5000};
    s.sim.horizon = 12.0;
    s.sim.surge0 = {1.0};
    s.sim.stable0 = {0, 0};
    s.fluid.u0 = {1.0};
    s.fluid.horizon = 12.0;
    s.fluid.fast_path = true;
    s.outputs.deviation = true;
    s.outputs.window = 0.5;
    s.outputs.window_class = 2;
    s.outputs.equilibria = true;
  } else if (name == "tree") {
    s.model.classes = {{0.3, 1.0, 1.0, true}, {0.5, 1.0, 1.0, false}};
    s.model.allocation = TreeSpec{0.4, 0.8};
    s.sim.K = {1000};
    s.sim.horizon = 60.0;
    s.sim.surge0 = {1.0};
    s.sim.stable0 = {0};
    s.fluid.u0 = {1.0};
    s.fluid.horizon = 60.0;
    s.fluid.arrival_sweep = {0.2, 0.3};
    s.outputs.fluid = false;
    s.outputs.window = 1.0;
    s.outputs.window_class = 2;
    s.outputs.equilibria = true;
  } else if (name == "linear-surge") {
    s.model.classes = {{0.5, 1.0, 1.0, true}, {0.7, 10.0, 1.0, false}, {0.02, 1.0, 1.0, false}};
    PfSpec pf;
    pf.incidence = {{1, 1, 0}, {1, 0, 1}};
    pf.capacity = {1, 1};
    s.model.allocation = pf;
    s.sim.K = {1000};
    s.sim.horizon = 40.0;
    s.sim.surge0 = {10.0};
    s.sim.stable0 = {1, 1};
    s.sim.stable0_per_K = true;
    s.sim.compare_usual = true;
    s.fluid.u0 = {10.0};
    s.fluid.horizon = 40.0;
    s.outputs.fluid = false;
  } else if (name == "stream") {
    s.model.classes = {{0.6, 1.0, 1.0, true}, {0.2, 1.0, 1.0, false}};
    s.model.allocation = StreamElasticSpec{0.01};
    s.sim.K = {2000};
    s.sim.horizon = 30.0;
    s.sim.surge0 = {0.0};
    s.sim.stable0 = {0};
    s.fluid.u0 = {0.0};
    s.fluid.horizon = 30.0;
    s.outputs.deviation = true;
    s.outputs.equilibria = true;
    s.outputs.qos_p_m = 0.05;
  } else {
    std::string msg = "unknown built-in scenario '" + name + "'; valid:";
    for (const auto& n : builtin_names()) msg += " " + n;
    throw ConfigError(msg);
  }
  return s;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  std::string msg = std::to_string(seed);
  msg += '/';
  msg += purpose;
  const std::string hex = sha256_hex(msg);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

void write_output(RunSummary& summary, const std::filesystem::path& dir, const std::string& name,
                  const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  out << text;
  summary.files.emplace_back(name, sha256_hex(text));
}

namespace {

void write_usual_csv(std::ostream& os, const ScaledTrajectory& traj) {
  os << 't';
  for (std::size_t i = 0; i < traj.classes; ++i) os << ",y" << i + 1;
  os << '\n' << std::setprecision(15);
  const double K = static_cast<double>(traj.K);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    os << traj.times[k];
    for (double v : traj.surge[k]) os << ',' << v;
    for (auto v : traj.stable[k]) os << ',' << static_cast<double>(v) / K;
    os << '\n';
  }
}

}  // namespace

RunSummary run(const Scenario& s, Task task, const RunOptions& opt) {
  require_valid(s);
  RunSummary summary;
  const std::uint64_t seed = opt.seed.value_or(s.sim.seed);
  const std::size_t c = s.model.surge_count();
  FluidOptions fopt;
  fopt.tol = opt.tol.value_or(s.fluid.tol);
  fopt.dt_out = s.fluid.dt_out;
  const std::vector<double> u0 = s.fluid.u0.empty() ? std::vector<double>(c, 0.0) : s.fluid.u0;
  const bool all = task == Task::All;

  auto with_stage = [](const char* stage, auto&& f) {
    try {
      f();
    } catch (const ValidationError&) {
      throw;
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(stage) + ": " + e.what());
    }
  };

  const bool want_fast = s.fluid.fast_path && c == 1 && s.profile.curves().empty() &&
                         is_work_conserving(s.model.allocation, s.model.weights(),
                                            sample_states(s.model.size(), c));
  auto fluid_path = [&](const NetworkModel& m) {
    if (want_fast) return work_conserving_fast_path(m, u0, s.fluid.horizon, fopt.dt_out);
    return solve_fluid(m, s.profile, u0, s.fluid.horizon, fopt);
  };

  FluidSolution reference;
  bool have_reference = false;
  const bool need_reference =
      (all || task == Task::Fluid || task == Task::Simulate) &&
      (s.outputs.fluid || s.outputs.deviation || s.outputs.window || task == Task::Fluid);
  if (need_reference) {
    with_stage("fluid", [&] {
      reference = fluid_path(s.model);
      have_reference = true;
      if (s.outputs.fluid || task == Task::Fluid) {
        write_output(summary, opt.out, s.name + "_fluid.csv",
                     to_text([&](std::ostream& os) { write_csv(os, reference); }));
      }
      if (reference.diverged) summary.lines.push_back("fluid: " + reference.message);
      for (double lam : s.fluid.arrival_sweep) {
        NetworkModel m = s.model;
        m.classes[0].arrival_rate = lam;
        const auto path = solve_fluid(m, s.profile, u0, s.fluid.horizon, fopt);
        write_output(summary, opt.out, s.name + "_fluid_lambda1_" + fmt(lam) + ".csv",
                     to_text([&](std::ostream& os) { write_csv(os, path); }));
      }
    });
  }

  if (all || task == Task::Simulate) {
    with_stage("simulate", [&] {
      std::ostringstream dev;
      dev << "K,runs,mean_sup_deviation,std_error\n" << std::setprecision(12);
      for (auto K : s.sim.K) {
        SimConfig cfg;
        cfg.K = K;
        cfg.horizon = s.sim.horizon;
        cfg.dt = s.sim.dt;
        cfg.seed = derive_seed(seed, "sim/K=" + std::to_string(K));
        cfg.surge0 = s.sim.surge0.empty() ? u0 : s.sim.surge0;
        cfg.stable0 = s.sim.stable0.empty() ? std::vector<std::int64_t>(s.model.size() - c, 0)
                                            : s.sim.stable0;
        if (s.sim.stable0_per_K) {
          for (auto& v : cfg.stable0) v *= K;
        }
        cfg.scale_weights = s.sim.scale_weights;
        cfg.freeze_surge = s.sim.freeze_surge;
        const auto traj = simulate(s.model, s.profile, cfg);
        const std::string tag = "_K" + std::to_string(K);
        if (s.outputs.trajectories) {
          write_output(summary, opt.out, s.name + "_sim" + tag + ".csv",
                       to_text([&](std::ostream& os) { write_csv(os, traj); }));
        }
        if (s.sim.compare_usual) {
          // Same initial state with unscaled weights; columns hold X_i(Kt)/K.
          SimConfig ucfg = cfg;
          ucfg.scale_weights = false;
          ucfg.seed = derive_seed(seed, "usual/K=" + std::to_string(K));
          const auto usual = simulate(s.model, s.profile, ucfg);
          write_output(summary, opt.out, s.name + "_usual" + tag + ".csv",
                       to_text([&](std::ostream& os) { write_usual_csv(os, usual); }));
        }
        if (s.outputs.window) {
          const std::size_t j = s.outputs.window_class - 1 - c;
          const auto w = window_average(
              traj, [j](const State& st) { return static_cast<double>(st.stable[j]); },
              *s.outputs.window);
          write_output(summary, opt.out, s.name + "_window" + tag + ".csv",
                       to_text([&](std::ostream& os) {
                         os << "t,mean_x" << s.outputs.window_class << '\n' << std::setprecision(12);
                         for (std::size_t k = 0; k < w.t.size(); ++k) {
                           os << w.t[k] << ',' << w.value[k] << '\n';
                         }
                       }));
        }
        if (s.outputs.deviation && have_reference) {
          ReferencePath ref = [&](double t) { return reference.at(t); };
          const auto ens = replicate(s.model, s.profile, cfg, s.sim.runs, ref, opt.jobs);
          dev << K << ',' << s.sim.runs << ',' << ens.mean_sup_deviation << ','
              << ens.std_error_sup_deviation << '\n';
          std::ostringstream line;
          line << "K=" << K << " mean sup-deviation " << ens.mean_sup_deviation;
          summary.lines.push_back(line.str());
        }
      }
      if (s.outputs.deviation && have_reference) {
        write_output(summary, opt.out, s.name + "_deviation.csv", dev.str());
      }
    });
  }

  if ((all && s.outputs.equilibria) || task == Task::Classify) {
    with_stage("classify", [&] {
      EquilibriumOptions eo;
      eo.box = s.fluid.box;
      eo.tol = fopt.tol;
      eo.u0 = u0;
      eo.fluid = fopt;
      const auto report = find_equilibria(s.model, eo);
      const auto robust = robust_stability(s.model);
      write_output(summary, opt.out, s.name + "_equilibria.txt", to_text([&](std::ostream& os) {
                     write_report(os, report);
                     os << "robust_stable " << to_string(robust.verdict) << " criterion "
                        << robust.criterion << " margin " << robust.margin << '\n';
                   }));
      summary.lines.push_back("regime " + to_string(report.regime) + ", robust stable " +
                              to_string(robust.verdict));
    });
  }

  if ((all && s.outputs.qos_p_m) || task == Task::Qos) {
    with_stage("qos", [&] {
      const auto* se = std::get_if<StreamElasticSpec>(&s.model.allocation.variant);
      if (!se || s.model.size() != 2) {
        throw ConfigError("qos: needs a two-class stream_elastic model");
      }
      const auto& e = s.model.classes[0];
      const auto& st = s.model.classes[1];
      QosTarget target{s.outputs.qos_p_m.value_or(0.05), se->c,
                       st.arrival_rate / (st.service_rate * se->c)};
      const auto r = qos_report(e.arrival_rate, e.service_rate, target, e.weight, u0[0]);
      write_output(summary, opt.out, s.name + "_qos.txt",
                   to_text([&](std::ostream& os) { write_report(os, r); }));
      summary.lines.push_back("qos factor " + fmt(r.factor) + ", post-check " +
                              (r.post_check ? "pass" : "fail"));
    });
  }

  std::ostringstream sum;
  sum << "scenario " << s.name << "\nseed " << seed << '\n';
  for (const auto& [file, hash] : summary.files) sum << "file " << file << " sha256 " << hash << '\n';
  for (const auto& line : summary.lines) sum << "result " << line << '\n';
  std::filesystem::create_directories(opt.out);
  std::ofstream(opt.out / (s.name + "_summary.txt"), std::ios::binary) << sum.str();
  return summary;
}

}  // namespace bwshare

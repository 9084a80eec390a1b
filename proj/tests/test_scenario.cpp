#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "bwshare/scenario.hpp"

using namespace bwshare;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("bwshare_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(BWSHARE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"({
  "name": "small",
  "model": {
    "classes": [
      {"lambda": 0.5, "mu": 1, "surge": true},
      {"lambda": 0.3, "mu": 1},
      {"lambda": 0.1, "mu": 1}
    ],
    "allocation": {"kind": "dps", "capacity": 1}
  },
  "sim": {"K": [50, 100], "horizon": 2, "runs": 2, "surge0": [1], "stable0": [0, 0]},
  "fluid": {"u0": [1], "horizon": 2, "fast_path": true},
  "outputs": {"deviation": true, "window": 0.5, "window_class": 2}
})";

}  // namespace

TEST_CASE("parse errors carry line and column") {
  try {
    parse_scenario("{\n  \"name\": \"x\",\n  \"model\": [1, 2,,]\n}");
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected with their path") {
  std::string text = kSmall;
  text.replace(text.find("\"runs\""), 6, "\"rums\"");
  try {
    parse_scenario(text);
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sim.rums") != std::string::npos);
  }
}

TEST_CASE("round trip") {
  const auto s = parse_scenario(kSmall);
  CHECK(parse_scenario(to_json_string(s)) == s);
  for (const auto& name : builtin_names()) {
    const auto b = builtin_scenario(name);
    CHECK(parse_scenario(to_json_string(b)) == b);
    CHECK(validate(b).empty());
  }
  CHECK_THROWS_AS(builtin_scenario("nope"), ConfigError);
}

TEST_CASE("scenario validation") {
  auto s = parse_scenario(kSmall);
  s.sim.K = {100, 50};
  auto v = validate(s);
  REQUIRE_FALSE(v.empty());
  CHECK(v[0].field == "sim.K");

  s = parse_scenario(kSmall);
  s.outputs.window_class = 1;  // a surge class
  CHECK_FALSE(validate(s).empty());

  s = parse_scenario(kSmall);
  s.outputs.qos_p_m = 0.05;  // needs the streaming model
  CHECK_FALSE(validate(s).empty());

  s = parse_scenario(kSmall);
  s.model.classes[1].service_rate = 0.0;
  v = validate(s);
  REQUIRE_FALSE(v.empty());
  CHECK(v[0].field.rfind("model.", 0) == 0);
}

TEST_CASE("run writes every file and is byte-identical on rerun") {
  const auto s = parse_scenario(kSmall);
  const auto a = fresh_dir("run_a");
  const auto b = fresh_dir("run_b");
  const auto ra = run(s, Task::All, RunOptions{a, std::nullopt, std::nullopt, 1});
  const auto rb = run(s, Task::All, RunOptions{b, std::nullopt, std::nullopt, 2});
  CHECK(ra.files == rb.files);
  std::set<std::string> names;
  for (const auto& [name, hash] : ra.files) {
    names.insert(name);
    CHECK(slurp(a / name) == slurp(b / name));
    CHECK(sha256_hex(slurp(a / name)) == hash);
  }
  for (const char* f : {"small_fluid.csv", "small_sim_K50.csv", "small_sim_K100.csv",
                        "small_window_K100.csv", "small_deviation.csv"}) {
    CHECK(names.count(f) == 1);
  }
  CHECK(slurp(a / "small_summary.txt") == slurp(b / "small_summary.txt"));

  // A different seed changes the simulation files.
  const auto c = fresh_dir("run_c");
  const auto rc = run(s, Task::Simulate, RunOptions{c, 99, std::nullopt, 1});
  CHECK(slurp(c / "small_sim_K50.csv") != slurp(a / "small_sim_K50.csv"));
}

TEST_CASE("built-in scenario outputs") {
  const auto dir = fresh_dir("builtin");
  auto tree = builtin_scenario("tree");
  tree.sim.horizon = 5.0;
  tree.fluid.horizon = 5.0;
  tree.outputs.equilibria = false;
  const auto r = run(tree, Task::All, RunOptions{dir, std::nullopt, std::nullopt, 1});
  std::set<std::string> names;
  for (const auto& f : r.files) names.insert(f.first);
  CHECK(names.count("tree_fluid_lambda1_0.2.csv") == 1);
  CHECK(names.count("tree_fluid_lambda1_0.3.csv") == 1);
  CHECK(names.count("tree_window_K1000.csv") == 1);

  auto lin = builtin_scenario("linear-surge");
  lin.sim.K = {50};
  lin.sim.horizon = 2.0;
  const auto rl = run(lin, Task::All, RunOptions{dir, std::nullopt, std::nullopt, 1});
  names.clear();
  for (const auto& f : rl.files) names.insert(f.first);
  CHECK(names.count("linear-surge_sim_K50.csv") == 1);
  CHECK(names.count("linear-surge_usual_K50.csv") == 1);
  const auto usual = slurp(dir / "linear-surge_usual_K50.csv");
  CHECK(usual.rfind("t,y1,y2,y3\n0,10,1,1\n", 0) == 0);
}

TEST_CASE("seed derivation is stable") {
  CHECK(derive_seed(1, "sim/K=1000") == derive_seed(1, "sim/K=1000"));
  CHECK(derive_seed(1, "sim/K=1000") != derive_seed(2, "sim/K=1000"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("reproduce") {
  const auto dir = fresh_dir("reproduce");
  const auto files = reproduce("fig7", dir);
  REQUIRE(files.size() == 1);
  CHECK(files[0] == "fig7_elastic.csv");
  CHECK(slurp(dir / files[0]).rfind("t,y1,u1_exact,u1_poisson\n", 0) == 0);
  try {
    reproduce("fig99", dir);
    FAIL("no error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const auto& id : figure_ids()) CHECK(msg.find(id) != std::string::npos);
  }
  const auto tc = reproduce("tree-priority-compare", dir);
  CHECK(tc.size() == 2);
}

TEST_CASE("figure csv interfaces") {
  const auto dir = fresh_dir("figures");
  const std::vector<std::pair<std::string, std::string>> expected{
      {"fig3_class1.csv", "t,y1,u1"},
      {"fig3_class2.csv", "t,window_mean_x2,conditional_mean_x2"},
      {"fig5_class1_rho1_0.2.csv", "t,y1,u1"},
      {"fig5_class1_rho1_0.3.csv", "t,y1,u1"},
      {"fig5_class2.csv", "t,window_mean_x2,priority_mean_x2"},
      {"fig6_usual.csv", "t,y1,y2,y3"},
      {"fig6_priority.csv", "t,y1,x2,x3"},
      {"fig7_elastic.csv", "t,y1,u1_exact,u1_poisson"},
      {"tree-priority-compare_tree.csv", "t,u1"},
      {"tree-priority-compare_priority.csv", "t,u1"}};
  std::set<std::string> written;
  for (const auto& id : figure_ids()) {
    for (const auto& f : reproduce(id, dir)) written.insert(f);
  }
  CHECK(written.size() == expected.size());
  for (const auto& [name, header] : expected) {
    REQUIRE(written.count(name) == 1);
    std::ifstream in(dir / name);
    std::string line;
    std::getline(in, line);
    CHECK(line == header);
    // Every data row has one field per column and starts at t = 0.
    const auto columns = std::count(header.begin(), header.end(), ',') + 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      CHECK(std::count(line.begin(), line.end(), ',') + 1 == columns);
      if (rows++ == 0) CHECK(line.rfind("0,", 0) == 0);
    }
    CHECK(rows > 1);
  }
}

TEST_CASE("command line exit codes") {
  const auto dir = fresh_dir("cli");
  const auto good = dir / "good.json";
  std::ofstream(good) << kSmall;
  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{ \"model\": ";
  const auto invalid = dir / "invalid.json";
  std::string text = kSmall;
  text.replace(text.find("[50, 100]"), 9, "[100, 50]");
  std::ofstream(invalid) << text;

  CHECK(cli("validate " + good.string()) == 0);
  CHECK(cli("validate builtin:stream") == 0);
  CHECK(cli("validate " + bad.string()) == 2);
  CHECK(cli("validate " + invalid.string()) == 2);
  CHECK(cli("fluid " + good.string() + " --out " + (dir / "o").string()) == 0);
  CHECK(fs::exists(dir / "o" / "small_fluid.csv"));
  CHECK(cli("reproduce fig0 --out " + dir.string()) == 2);
  CHECK(cli("nosuchcommand") == 2);
  CHECK(cli("run " + (dir / "missing.json").string()) == 2);
}

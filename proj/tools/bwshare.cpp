// Command-line front end: scenario runs, figure data and validation.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "bwshare/errors.hpp"
#include "bwshare/scenario.hpp"

namespace {

constexpr int kValidationExit = 2;
constexpr int kNumericalExit = 3;

// A path, or builtin:<name>.
bwshare::Scenario load(const std::string& arg) {
  const std::string prefix = "builtin:";
  if (arg.rfind(prefix, 0) == 0) return bwshare::builtin_scenario(arg.substr(prefix.size()));
  return bwshare::load_scenario(arg);
}

void print(const bwshare::RunSummary& summary) {
  for (const auto& [file, hash] : summary.files) std::cout << file << "  " << hash << '\n';
  for (const auto& line : summary.lines) std::cout << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-level simulation and fluid analysis of bandwidth-sharing networks"};
  app.require_subcommand(1);
  app.fallthrough();

  bwshare::RunOptions opt;
  std::uint64_t seed = 0;
  double tol = 0.0;
  std::string out = ".";
  auto* seed_opt = app.add_option("--seed", seed, "Scenario seed override");
  auto* tol_opt = app.add_option("--tol", tol, "Fluid tolerance override")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");
  app.add_option("--jobs", opt.jobs, "Worker threads for replications")->check(CLI::PositiveNumber);

  std::string scenario_arg;
  std::string figure;
  struct Entry {
    const char* name;
    const char* help;
    bwshare::Task task;
  };
  const Entry tasks[] = {
      {"run", "Run every output the scenario requests", bwshare::Task::All},
      {"simulate", "Simulate the flow-count chain for each K", bwshare::Task::Simulate},
      {"fluid", "Integrate the averaged fluid equation", bwshare::Task::Fluid},
      {"classify", "Equilibria, regime and robust stability", bwshare::Task::Classify},
      {"qos", "Streaming blocking target and priority rescaling", bwshare::Task::Qos},
  };
  std::vector<std::pair<CLI::App*, bwshare::Task>> commands;
  for (const auto& t : tasks) {
    auto* sub = app.add_subcommand(t.name, t.help);
    sub->add_option("scenario", scenario_arg, "Scenario JSON file or builtin:<name>")->required();
    commands.emplace_back(sub, t.task);
  }
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file");
  validate_cmd->add_option("scenario", scenario_arg, "Scenario JSON file or builtin:<name>")
      ->required();
  auto* reproduce_cmd = app.add_subcommand("reproduce", "Write the data behind a figure");
  reproduce_cmd->add_option("figure", figure, "fig3, fig5, fig6, fig7 or tree-priority-compare")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }
  opt.out = out;
  if (*seed_opt) opt.seed = seed;
  if (*tol_opt) opt.tol = tol;

  try {
    if (*validate_cmd) {
      const auto s = load(scenario_arg);
      const auto violations = bwshare::validate(s);
      for (const auto& v : violations) std::cerr << v.field << ": " << v.message << '\n';
      if (!violations.empty()) return kValidationExit;
      std::cout << "ok\n";
      return 0;
    }
    if (*reproduce_cmd) {
      for (const auto& f : bwshare::reproduce(figure, opt.out, opt.seed.value_or(1), opt.jobs)) {
        std::cout << (opt.out / f).string() << '\n';
      }
      return 0;
    }
    for (const auto& [sub, task] : commands) {
      if (*sub) print(bwshare::run(load(scenario_arg), task, opt));
    }
  } catch (const bwshare::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationExit;
  } catch (const bwshare::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

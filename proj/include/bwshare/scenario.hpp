#ifndef BWSHARE_SCENARIO_HPP
#define BWSHARE_SCENARIO_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bwshare/errors.hpp"
#include "bwshare/model.hpp"

namespace bwshare {

/// Malformed configuration; `what()` carries line:column or a field path.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct SimSettings {
  std::vector<std::int64_t> K{1000};
  double horizon = 10.0;
  double dt = 0.01;
  std::uint64_t seed = 1;
  std::size_t runs = 1;
  std::vector<double> surge0;
  std::vector<std::int64_t> stable0;
  /// stable0 is given per unit of K (initial stable counts K * stable0).
  bool stable0_per_K = false;
  bool scale_weights = true;
  bool freeze_surge = false;
  /// Also run with unscaled weights (usual fluid scaling), all classes / K.
  bool compare_usual = false;
  bool operator==(const SimSettings&) const = default;
};

struct FluidSettings {
  std::vector<double> u0;
  double horizon = 10.0;
  double tol = 1e-8;
  double dt_out = 0.01;
  double box = 5.0;  // equilibrium search box
  bool fast_path = false;
  /// Extra fluid runs with the arrival rate of class 1 replaced.
  std::vector<double> arrival_sweep;
  bool operator==(const FluidSettings&) const = default;
};

struct OutputSettings {
  bool trajectories = true;
  bool fluid = true;
  bool deviation = false;  // sup-deviation table against the fluid path
  std::optional<double> window;  // window-average width for `window_class`
  std::size_t window_class = 2;  // 1-based class index (a stable class)
  bool equilibria = false;
  std::optional<double> qos_p_m;
  bool operator==(const OutputSettings&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  NetworkModel model;
  TrafficProfile profile;
  SimSettings sim;
  FluidSettings fluid;
  OutputSettings outputs;
  bool operator==(const Scenario&) const = default;
};

Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
std::string to_json_string(const Scenario& s);

/// Model violations plus scenario-level checks, with field paths.
std::vector<Violation> validate(const Scenario& s);

std::vector<std::string> builtin_names();
/// dps3, tree, linear-surge, stream. Throws ConfigError on an unknown name.
Scenario builtin_scenario(const std::string& name);

enum class Task { All, Simulate, Fluid, Classify, Qos };

struct RunOptions {
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::size_t jobs = 1;
};

struct RunSummary {
  std::vector<std::pair<std::string, std::string>> files;  // name, sha256
  std::vector<std::string> lines;  // human-readable results
};

RunSummary run(const Scenario& s, Task task, const RunOptions& opt);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);
/// Stable sub-seed for (seed, purpose).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

/// Writes `<figure>_<curve>.csv` files into `out`; returns the file names.
std::vector<std::string> reproduce(const std::string& figure, const std::filesystem::path& out,
                                   std::uint64_t seed = 1, std::size_t jobs = 1);
std::vector<std::string> figure_ids();

/// Writes `text` to dir/name and records its hash.
void write_output(RunSummary& summary, const std::filesystem::path& dir, const std::string& name,
                  const std::string& text);

}  // namespace bwshare

#endif  // BWSHARE_SCENARIO_HPP

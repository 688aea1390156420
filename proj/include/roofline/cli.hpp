#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "roofline/core.hpp"
#include "roofline/membench.hpp"
#include "roofline/topology.hpp"

namespace roofline {

/// Run configuration. JSON config keys are the long flag names without the
/// leading dashes; precedence is defaults < --config file < flags.
struct Config {
  std::vector<ScenarioKind> scenarios{ScenarioKind::SingleThread, ScenarioKind::SingleSocket};
  CacheKind cache = CacheKind::Cold;
  int reps = 10;
  std::size_t buffer_bytes = kDefaultProbeBytes;
  std::string backend = "hw";
  std::string mock_script;
  std::string out = "roofline-out";
  std::string kernels = "sum_reduction,triad,fma_dense";
  std::optional<std::string> et_baseline;
  std::optional<std::uint64_t> seed;  // mock default: the script's seed, else 1
  std::string topology = "/sys/devices/system";
  std::string plot_mode = "absolute";
  bool correct_label = false;
  double min_seconds = 2.0;    // compute benchmark duration per scenario
  double idle_seconds = 0.25;  // IMC idle baseline sample (hw)
  bool one_thread_per_core = false;

  /// Throws on any invalid value; nothing has been touched yet.
  void validate() const;
};

/// Applies a JSON config document over `cfg`.
void apply_config_json(Config& cfg, const std::string& text);

/// Comma list of scenario names.
std::vector<ScenarioKind> parse_scenario_list(const std::string& text);

/// "0-3,8" style rendering of a sorted cpu list.
std::string format_cpu_list(std::vector<int> cpus);

/// Entry point of the `roofline` tool. Returns the process exit code:
/// 0 iff no stage recorded an error, 2 on invalid usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace roofline

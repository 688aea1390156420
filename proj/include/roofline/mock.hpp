#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roofline/codegen.hpp"
#include "roofline/membench.hpp"
#include "roofline/pmu.hpp"
#include "roofline/topology.hpp"

namespace roofline {

/// Scripted counter answers for one kernel. `full` cycles per repetition.
struct KernelCounterScript {
  CounterSample init;
  std::vector<CounterSample> full;
  std::vector<CounterSample> warm_full;  // empty: reuse `full`
};

/// Everything the mock backend pretends to measure. See
/// tests/data/mock/README.md for the file format.
struct MockScript {
  std::string machine_descriptor;
  std::filesystem::path topology_fixture;  // resolved against the script
  VectorIsa isa{IsaLevel::Avx512};
  std::uint64_t seed = 1;
  std::map<ScenarioKind, double> compute_gflops;
  std::map<ScenarioKind, std::map<BandwidthMethod, double>> bandwidth_gbps;
  std::map<int, double> node_scale;  // two-socket per-node factor, default 1
  std::map<std::string, KernelCounterScript> counters;
  std::optional<CounterSample> idle;
  double idle_seconds = 0.0;
  std::map<std::string, double> runtimes;  // "kernel" or "kernel@scenario"
  std::uint32_t available = kAllCounters;
  std::vector<std::string> diagnostics;
};

MockScript parse_mock_script(const std::string& text, const std::filesystem::path& base_dir);
MockScript load_mock_script(const std::filesystem::path& path);

/// Counter backend answering by region label rather than call order.
class ScriptedCounterBackend final : public CounterBackend {
 public:
  explicit ScriptedCounterBackend(const MockScript& script);

  BackendKind kind() const override { return BackendKind::Mock; }
  std::uint32_t available() const override { return script_.available; }
  std::vector<std::string> diagnostics() const override { return script_.diagnostics; }
  void annotate(const RegionLabel& label) override;

 protected:
  void start() override {}
  CounterSample stop() override;

 private:
  const MockScript& script_;
  RegionLabel label_;
  std::size_t rep_ = 0;
};

/// Pass runner whose pass time is bytes / scripted bandwidth.
PassRunner mock_pass_runner(const MockScript& script);

/// Seconds per call that make a mock compute driver hit the scripted total.
double mock_seconds_per_call(const MockScript& script, ScenarioKind kind, std::size_t threads,
                             double flops_per_call);

}  // namespace roofline

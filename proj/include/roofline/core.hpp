#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "roofline/pmu.hpp"
#include "roofline/topology.hpp"

namespace roofline {

// Units: work in FLOP, traffic in bytes, runtime in seconds, compute in
// GFLOP/s (1e9 FLOP/s) and bandwidth in GB/s (1e9 B/s).

enum class CacheKind { Cold, Warm };
enum class Bound { MemoryBound, ComputeBound };

std::string_view to_string(CacheKind kind);
std::string_view to_string(Bound bound);
CacheKind parse_cache_kind(std::string_view text);

/// The roof of one resource scenario.
struct PlatformProfile {
  Scenario scenario;
  double peak_flops_gps = 0.0;       // pi
  double peak_bandwidth_gbps = 0.0;  // beta
  std::string label;
  std::string machine_descriptor;
  // Provenance of the two peaks; informational.
  std::string compute_isa;
  std::string bandwidth_method;

  /// Throws on a non-positive peak or an empty label.
  void validate() const;
  friend bool operator==(const PlatformProfile&, const PlatformProfile&) = default;
};

struct KernelMeasurement {
  std::string kernel_name;
  std::uint64_t elements = 0;
  std::uint64_t work_flops = 0;
  std::uint64_t traffic_bytes = 0;
  double runtime_seconds = 0.0;  // mean over repetitions
  int repetitions = 0;
  CacheKind cache_protocol = CacheKind::Cold;
  Scenario scenario;
  CounterSample raw_full;       // mean of the per-repetition samples
  CounterSample raw_init_only;  // scope overhead with execution skipped
  std::vector<double> per_rep_seconds;
  std::vector<std::uint64_t> per_rep_traffic_bytes;
  std::uint64_t idle_baseline_bytes = 0;
  std::optional<double> analytic_work;
  std::optional<double> calibrated_flops_per_element;
  bool work_measured = true;
  bool traffic_measured = true;
  bool traffic_unreliable = false;  // buffers under 1 MiB
  bool work_not_measurable = false;  // kernel dominated by uncounted ops
  bool overhead_clamped = false;

  friend bool operator==(const KernelMeasurement&, const KernelMeasurement&) = default;
};

/// Tolerance before attained > attainable is flagged.
inline constexpr double kAboveRoofTolerance = 0.05;

struct RooflinePoint {
  std::string kernel_name;
  std::string profile_label;
  ScenarioKind scenario = ScenarioKind::SingleThread;
  CacheKind cache_protocol = CacheKind::Cold;
  double intensity_flops_per_byte = 0.0;
  double attained_gflops = 0.0;
  double attainable_gflops = 0.0;
  Bound bound = Bound::MemoryBound;
  double rc_percent = 0.0;
  double attainable_rc_percent = 0.0;
  std::optional<double> et_percent;
  bool above_roof = false;
  bool traffic_unreliable = false;
  bool work_not_measurable = false;

  friend bool operator==(const RooflinePoint&, const RooflinePoint&) = default;
};

double arithmetic_intensity(double work_flops, double traffic_bytes);
double ridge_point(const PlatformProfile& profile);
double attainable_performance(const PlatformProfile& profile, double intensity);
Bound classify_bound(const PlatformProfile& profile, double intensity);
double attained_gflops(const KernelMeasurement& m);
double runtime_compute_percent(const KernelMeasurement& m, const PlatformProfile& profile);
double attainable_rc_percent(const PlatformProfile& profile, double intensity);

/// Runtime of every kernel as a percentage of the baseline's runtime.
std::map<std::string, double> relative_execution_time(const std::vector<KernelMeasurement>& group,
                                                      const std::string& baseline);

/// Places one measurement under a roof.
RooflinePoint make_point(const KernelMeasurement& m, const PlatformProfile& profile,
                         std::optional<double> et_percent = std::nullopt);

/// Two-decimal percentage label, e.g. "86.72".
std::string format_percent(double value);

}  // namespace roofline

#include "roofline/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "roofline/error.hpp"

namespace roofline {

std::string_view to_string(CacheKind kind) { return kind == CacheKind::Cold ? "cold" : "warm"; }

std::string_view to_string(Bound bound) {
  return bound == Bound::MemoryBound ? "memory-bound" : "compute-bound";
}

CacheKind parse_cache_kind(std::string_view text) {
  if (text == "cold") return CacheKind::Cold;
  if (text == "warm") return CacheKind::Warm;
  throw Error("unknown cache protocol '" + std::string(text) + "' (expected cold or warm)");
}

void PlatformProfile::validate() const {
  if (!(peak_flops_gps > 0.0)) throw Error("profile '" + label + "': peak compute must be > 0");
  if (!(peak_bandwidth_gbps > 0.0)) {
    throw Error("profile '" + label + "': peak bandwidth must be > 0");
  }
  if (label.empty()) throw Error("profile label must not be empty");
}

double arithmetic_intensity(double work_flops, double traffic_bytes) {
  if (!(traffic_bytes > 0.0)) throw Error("undefined intensity: traffic is zero");
  if (work_flops < 0.0) throw Error("negative work");
  return work_flops / traffic_bytes;
}

double ridge_point(const PlatformProfile& profile) {
  profile.validate();
  return profile.peak_flops_gps / profile.peak_bandwidth_gbps;
}

// The comparison against the ridge decides the branch so that the roof is
// exactly pi at and beyond the ridge even when ridge * beta rounds below pi.
double attainable_performance(const PlatformProfile& profile, double intensity) {
  if (intensity < 0.0 || std::isnan(intensity)) throw Error("negative arithmetic intensity");
  if (intensity >= ridge_point(profile)) return profile.peak_flops_gps;
  return std::min(profile.peak_flops_gps, intensity * profile.peak_bandwidth_gbps);
}

Bound classify_bound(const PlatformProfile& profile, double intensity) {
  if (intensity < 0.0 || std::isnan(intensity)) throw Error("negative arithmetic intensity");
  return intensity < ridge_point(profile) ? Bound::MemoryBound : Bound::ComputeBound;
}

double attained_gflops(const KernelMeasurement& m) {
  if (!(m.runtime_seconds > 0.0)) throw Error("runtime must be > 0 for " + m.kernel_name);
  return static_cast<double>(m.work_flops) / m.runtime_seconds / 1e9;
}

double runtime_compute_percent(const KernelMeasurement& m, const PlatformProfile& profile) {
  profile.validate();
  return 100.0 * attained_gflops(m) / profile.peak_flops_gps;
}

double attainable_rc_percent(const PlatformProfile& profile, double intensity) {
  if (classify_bound(profile, intensity) == Bound::ComputeBound) return 100.0;
  const double pct = 100.0 * attainable_performance(profile, intensity) / profile.peak_flops_gps;
  // Within one ulp below the ridge the product can round up to pi.
  return pct < 100.0 ? pct : std::nextafter(100.0, 0.0);
}

std::map<std::string, double> relative_execution_time(const std::vector<KernelMeasurement>& group,
                                                      const std::string& baseline) {
  auto it = std::find_if(group.begin(), group.end(),
                         [&](const KernelMeasurement& m) { return m.kernel_name == baseline; });
  if (it == group.end()) {
    std::string names;
    for (const auto& m : group) names += (names.empty() ? "" : ", ") + m.kernel_name;
    throw Error("ET baseline '" + baseline + "' not measured; valid kernels: " + names);
  }
  const double base = it->runtime_seconds;
  if (!(base > 0.0)) throw Error("baseline runtime must be > 0");
  std::map<std::string, double> out;
  for (const auto& m : group) {
    if (!(m.runtime_seconds > 0.0)) throw Error("runtime must be > 0 for " + m.kernel_name);
    out[m.kernel_name] = m.kernel_name == baseline ? 100.0 : 100.0 * (m.runtime_seconds / base);
  }
  return out;
}

RooflinePoint make_point(const KernelMeasurement& m, const PlatformProfile& profile,
                         std::optional<double> et_percent) {
  RooflinePoint p;
  p.kernel_name = m.kernel_name;
  p.profile_label = profile.label;
  p.scenario = m.scenario.kind;
  p.cache_protocol = m.cache_protocol;
  p.intensity_flops_per_byte =
      arithmetic_intensity(static_cast<double>(m.work_flops), static_cast<double>(m.traffic_bytes));
  p.attained_gflops = attained_gflops(m);
  p.attainable_gflops = attainable_performance(profile, p.intensity_flops_per_byte);
  p.bound = classify_bound(profile, p.intensity_flops_per_byte);
  p.rc_percent = runtime_compute_percent(m, profile);
  p.attainable_rc_percent = attainable_rc_percent(profile, p.intensity_flops_per_byte);
  p.et_percent = et_percent;
  p.above_roof = p.attained_gflops > p.attainable_gflops * (1.0 + kAboveRoofTolerance);
  p.traffic_unreliable = m.traffic_unreliable;
  p.work_not_measurable = m.work_not_measurable;
  return p;
}

std::string format_percent(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

}  // namespace roofline

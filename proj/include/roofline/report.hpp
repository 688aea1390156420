#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roofline/core.hpp"

namespace roofline {

inline constexpr const char* kSchemaVersion = "1.0";

struct StageError {
  std::string stage;
  std::string message;

  friend bool operator==(const StageError&, const StageError&) = default;
};

struct ResultDocument {
  std::string schema_version = kSchemaVersion;
  std::string machine_descriptor;
  std::uint64_t seed = 1;
  std::vector<PlatformProfile> profiles;
  std::vector<KernelMeasurement> measurements;
  std::vector<RooflinePoint> points;
  std::vector<std::string> warnings;
  std::vector<StageError> errors;

  /// Every point must reference an existing measurement and profile.
  void validate() const;
  const PlatformProfile* profile_for(ScenarioKind kind) const;

  friend bool operator==(const ResultDocument&, const ResultDocument&) = default;
};

/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string serialize_results(const ResultDocument& doc);
ResultDocument parse_results(const std::string& text);
void write_results(const ResultDocument& doc, const std::filesystem::path& path);
ResultDocument read_results(const std::filesystem::path& path);

/// Places every measurement under the profile of its scenario. ET is
/// relative to `et_baseline` within each (scenario, cache) group. A
/// measurement without usable traffic gets no point and a warning.
std::vector<RooflinePoint> assemble_points(const std::vector<PlatformProfile>& profiles,
                                           const std::vector<KernelMeasurement>& measurements,
                                           const std::optional<std::string>& et_baseline,
                                           std::vector<std::string>& warnings);

enum class PlotMode { Absolute, Normalized };

struct PlotSpec {
  PlotMode mode = PlotMode::Absolute;
  /// Keeps the original "Atteinable" spelling unless set.
  bool correct_spelling = false;
  std::string output_file = "roofline.svg";
};

/// Self-contained gnuplot script: log-log axes, a two-segment roof and one
/// dashed vertical per kernel with RC/ET annotations. Throws on no points.
std::string render_plot(const PlatformProfile& profile, const std::vector<RooflinePoint>& points,
                        const PlotSpec& spec = {});

/// Fixed-width table of all points plus scenario-to-scenario comparisons.
std::string summarize(const ResultDocument& doc);

}  // namespace roofline

#include "roofline/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roofline/error.hpp"

namespace roofline {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json scenario_json(const Scenario& s) {
  return {{"kind", to_string(s.kind)}, {"cpu_set", s.cpu_set}, {"mem_nodes", s.mem_nodes}};
}

Scenario scenario_from(const json& j) {
  Scenario s;
  s.kind = parse_scenario_kind(j.at("kind").get<std::string>());
  s.cpu_set = j.at("cpu_set").get<std::vector<int>>();
  s.mem_nodes = j.at("mem_nodes").get<std::vector<int>>();
  return s;
}

json sample_json(const CounterSample& s) {
  return {{"scalar_single", s.scalar_single}, {"packed_128", s.packed_128},
          {"packed_256", s.packed_256},       {"packed_512", s.packed_512},
          {"imc_cas_reads", s.imc_cas_reads}, {"imc_cas_writes", s.imc_cas_writes},
          {"valid_mask", s.valid_mask}};
}

CounterSample sample_from(const json& j) {
  CounterSample s;
  s.scalar_single = j.at("scalar_single").get<std::uint64_t>();
  s.packed_128 = j.at("packed_128").get<std::uint64_t>();
  s.packed_256 = j.at("packed_256").get<std::uint64_t>();
  s.packed_512 = j.at("packed_512").get<std::uint64_t>();
  s.imc_cas_reads = j.at("imc_cas_reads").get<std::uint64_t>();
  s.imc_cas_writes = j.at("imc_cas_writes").get<std::uint64_t>();
  s.valid_mask = j.at("valid_mask").get<std::uint32_t>();
  return s;
}

json profile_json(const PlatformProfile& p) {
  return {{"scenario", scenario_json(p.scenario)},
          {"peak_flops_gps", p.peak_flops_gps},
          {"peak_bandwidth_gbps", p.peak_bandwidth_gbps},
          {"label", p.label},
          {"machine_descriptor", p.machine_descriptor},
          {"compute_isa", p.compute_isa},
          {"bandwidth_method", p.bandwidth_method}};
}

PlatformProfile profile_from(const json& j) {
  PlatformProfile p;
  p.scenario = scenario_from(j.at("scenario"));
  p.peak_flops_gps = j.at("peak_flops_gps").get<double>();
  p.peak_bandwidth_gbps = j.at("peak_bandwidth_gbps").get<double>();
  p.label = j.at("label").get<std::string>();
  p.machine_descriptor = j.at("machine_descriptor").get<std::string>();
  p.compute_isa = j.at("compute_isa").get<std::string>();
  p.bandwidth_method = j.at("bandwidth_method").get<std::string>();
  return p;
}

json measurement_json(const KernelMeasurement& m) {
  return {{"kernel_name", m.kernel_name},
          {"elements", m.elements},
          {"work_flops", m.work_flops},
          {"traffic_bytes", m.traffic_bytes},
          {"runtime_seconds", m.runtime_seconds},
          {"repetitions", m.repetitions},
          {"cache_protocol", to_string(m.cache_protocol)},
          {"scenario", scenario_json(m.scenario)},
          {"raw_full", sample_json(m.raw_full)},
          {"raw_init_only", sample_json(m.raw_init_only)},
          {"per_rep_seconds", m.per_rep_seconds},
          {"per_rep_traffic_bytes", m.per_rep_traffic_bytes},
          {"idle_baseline_bytes", m.idle_baseline_bytes},
          {"analytic_work", opt(m.analytic_work)},
          {"calibrated_flops_per_element", opt(m.calibrated_flops_per_element)},
          {"work_measured", m.work_measured},
          {"traffic_measured", m.traffic_measured},
          {"traffic_unreliable", m.traffic_unreliable},
          {"work_not_measurable", m.work_not_measurable},
          {"overhead_clamped", m.overhead_clamped}};
}

KernelMeasurement measurement_from(const json& j) {
  KernelMeasurement m;
  m.kernel_name = j.at("kernel_name").get<std::string>();
  m.elements = j.at("elements").get<std::uint64_t>();
  m.work_flops = j.at("work_flops").get<std::uint64_t>();
  m.traffic_bytes = j.at("traffic_bytes").get<std::uint64_t>();
  m.runtime_seconds = j.at("runtime_seconds").get<double>();
  m.repetitions = j.at("repetitions").get<int>();
  m.cache_protocol = parse_cache_kind(j.at("cache_protocol").get<std::string>());
  m.scenario = scenario_from(j.at("scenario"));
  m.raw_full = sample_from(j.at("raw_full"));
  m.raw_init_only = sample_from(j.at("raw_init_only"));
  m.per_rep_seconds = j.at("per_rep_seconds").get<std::vector<double>>();
  m.per_rep_traffic_bytes = j.at("per_rep_traffic_bytes").get<std::vector<std::uint64_t>>();
  m.idle_baseline_bytes = j.at("idle_baseline_bytes").get<std::uint64_t>();
  m.analytic_work = get_opt<double>(j, "analytic_work");
  m.calibrated_flops_per_element = get_opt<double>(j, "calibrated_flops_per_element");
  m.work_measured = j.at("work_measured").get<bool>();
  m.traffic_measured = j.at("traffic_measured").get<bool>();
  m.traffic_unreliable = j.at("traffic_unreliable").get<bool>();
  m.work_not_measurable = j.at("work_not_measurable").get<bool>();
  m.overhead_clamped = j.at("overhead_clamped").get<bool>();
  return m;
}

json point_json(const RooflinePoint& p) {
  return {{"kernel_name", p.kernel_name},
          {"profile_label", p.profile_label},
          {"scenario", to_string(p.scenario)},
          {"cache_protocol", to_string(p.cache_protocol)},
          {"intensity_flops_per_byte", p.intensity_flops_per_byte},
          {"attained_gflops", p.attained_gflops},
          {"attainable_gflops", p.attainable_gflops},
          {"bound", to_string(p.bound)},
          {"rc_percent", p.rc_percent},
          {"attainable_rc_percent", p.attainable_rc_percent},
          {"et_percent", opt(p.et_percent)},
          {"above_roof", p.above_roof},
          {"traffic_unreliable", p.traffic_unreliable},
          {"work_not_measurable", p.work_not_measurable}};
}

Bound parse_bound(const std::string& text) {
  if (text == to_string(Bound::MemoryBound)) return Bound::MemoryBound;
  if (text == to_string(Bound::ComputeBound)) return Bound::ComputeBound;
  throw Error("unknown bound '" + text + "'");
}

RooflinePoint point_from(const json& j) {
  RooflinePoint p;
  p.kernel_name = j.at("kernel_name").get<std::string>();
  p.profile_label = j.at("profile_label").get<std::string>();
  p.scenario = parse_scenario_kind(j.at("scenario").get<std::string>());
  p.cache_protocol = parse_cache_kind(j.at("cache_protocol").get<std::string>());
  p.intensity_flops_per_byte = j.at("intensity_flops_per_byte").get<double>();
  p.attained_gflops = j.at("attained_gflops").get<double>();
  p.attainable_gflops = j.at("attainable_gflops").get<double>();
  p.bound = parse_bound(j.at("bound").get<std::string>());
  p.rc_percent = j.at("rc_percent").get<double>();
  p.attainable_rc_percent = j.at("attainable_rc_percent").get<double>();
  p.et_percent = get_opt<double>(j, "et_percent");
  p.above_roof = j.at("above_roof").get<bool>();
  p.traffic_unreliable = j.at("traffic_unreliable").get<bool>();
  p.work_not_measurable = j.at("work_not_measurable").get<bool>();
  return p;
}

}  // namespace

void ResultDocument::validate() const {
  if (schema_version.empty()) throw Error("result document has no schema_version");
  for (const auto& p : points) {
    const bool has_profile = std::any_of(profiles.begin(), profiles.end(), [&](const auto& pr) {
      return pr.label == p.profile_label;
    });
    if (!has_profile) {
      throw Error("point " + p.kernel_name + " references missing profile '" + p.profile_label + "'");
    }
    const bool has_measurement =
        std::any_of(measurements.begin(), measurements.end(), [&](const auto& m) {
          return m.kernel_name == p.kernel_name && m.scenario.kind == p.scenario &&
                 m.cache_protocol == p.cache_protocol;
        });
    if (!has_measurement) {
      throw Error("point " + p.kernel_name + " references no measurement");
    }
  }
}

const PlatformProfile* ResultDocument::profile_for(ScenarioKind kind) const {
  for (const auto& p : profiles) {
    if (p.scenario.kind == kind) return &p;
  }
  return nullptr;
}

std::string serialize_results(const ResultDocument& doc) {
  doc.validate();
  json j;
  j["schema_version"] = doc.schema_version;
  j["machine_descriptor"] = doc.machine_descriptor;
  j["seed"] = doc.seed;
  j["profiles"] = json::array();
  for (const auto& p : doc.profiles) j["profiles"].push_back(profile_json(p));
  j["measurements"] = json::array();
  for (const auto& m : doc.measurements) j["measurements"].push_back(measurement_json(m));
  j["points"] = json::array();
  for (const auto& p : doc.points) j["points"].push_back(point_json(p));
  j["warnings"] = doc.warnings;
  j["errors"] = json::array();
  for (const auto& e : doc.errors) j["errors"].push_back({{"stage", e.stage}, {"message", e.message}});
  return j.dump(2) + "\n";
}

ResultDocument parse_results(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("result document is not valid JSON: ") + e.what());
  }
  try {
    ResultDocument doc;
    doc.schema_version = j.at("schema_version").get<std::string>();
    if (doc.schema_version != kSchemaVersion) {
      throw Error("unsupported schema_version '" + doc.schema_version + "'");
    }
    doc.machine_descriptor = j.at("machine_descriptor").get<std::string>();
    doc.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("profiles")) doc.profiles.push_back(profile_from(p));
    for (const auto& m : j.at("measurements")) doc.measurements.push_back(measurement_from(m));
    for (const auto& p : j.at("points")) doc.points.push_back(point_from(p));
    doc.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& e : j.at("errors")) {
      doc.errors.push_back({e.at("stage").get<std::string>(), e.at("message").get<std::string>()});
    }
    doc.validate();
    return doc;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed result document: ") + e.what());
  }
}

void write_results(const ResultDocument& doc, const std::filesystem::path& path) {
  const std::string text = serialize_results(doc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

ResultDocument read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_results(ss.str());
}

// ---------------------------------------------------------------------------
// points

std::vector<RooflinePoint> assemble_points(const std::vector<PlatformProfile>& profiles,
                                           const std::vector<KernelMeasurement>& measurements,
                                           const std::optional<std::string>& et_baseline,
                                           std::vector<std::string>& warnings) {
  if (et_baseline) {
    const bool anywhere = std::any_of(measurements.begin(), measurements.end(),
                                      [&](const auto& m) { return m.kernel_name == *et_baseline; });
    if (!anywhere) relative_execution_time(measurements, *et_baseline);  // throws, naming kernels
  }

  std::map<std::pair<ScenarioKind, CacheKind>, std::map<std::string, double>> et;
  if (et_baseline) {
    std::map<std::pair<ScenarioKind, CacheKind>, std::vector<KernelMeasurement>> groups;
    for (const auto& m : measurements) groups[{m.scenario.kind, m.cache_protocol}].push_back(m);
    for (const auto& [key, group] : groups) {
      const bool has = std::any_of(group.begin(), group.end(),
                                   [&](const auto& m) { return m.kernel_name == *et_baseline; });
      if (has) {
        et[key] = relative_execution_time(group, *et_baseline);
      } else {
        warnings.push_back("ET omitted for " + std::string(to_string(key.first)) + "/" +
                           std::string(to_string(key.second)) + ": baseline '" + *et_baseline +
                           "' not measured there");
      }
    }
  }

  std::vector<RooflinePoint> points;
  for (const auto& m : measurements) {
    const std::string where = m.kernel_name + " (" + std::string(to_string(m.scenario.kind)) +
                              ", " + std::string(to_string(m.cache_protocol)) + ")";
    auto profile = std::find_if(profiles.begin(), profiles.end(), [&](const auto& p) {
      return p.scenario.kind == m.scenario.kind;
    });
    if (profile == profiles.end()) {
      warnings.push_back("no point for " + where + ": no profile for scenario " +
                         std::string(to_string(m.scenario.kind)));
      continue;
    }
    if (!m.work_measured || !m.traffic_measured || m.traffic_bytes == 0) {
      warnings.push_back("no point for " + where + ": " +
                         (!m.work_measured ? "work not measured" : "traffic not measured"));
      continue;
    }
    std::optional<double> et_percent;
    if (auto g = et.find({m.scenario.kind, m.cache_protocol}); g != et.end()) {
      et_percent = g->second.at(m.kernel_name);
    }
    points.push_back(make_point(m, *profile, et_percent));
  }
  return points;
}

// ---------------------------------------------------------------------------
// plot

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

double decade_below(double v) { return std::pow(10.0, std::floor(std::log10(v)) - 1.0); }
double decade_above(double v) { return std::pow(10.0, std::ceil(std::log10(v)) + 1.0); }

}  // namespace

std::string render_plot(const PlatformProfile& profile, const std::vector<RooflinePoint>& points,
                        const PlotSpec& spec) {
  if (points.empty()) throw Error("render_plot needs at least one point");
  profile.validate();

  const bool norm = spec.mode == PlotMode::Normalized;
  const double pi = profile.peak_flops_gps;
  const double beta = profile.peak_bandwidth_gbps;
  const double ridge = ridge_point(profile);
  auto y = [&](double gflops) { return norm ? 100.0 * gflops / pi : gflops; };

  std::vector<const RooflinePoint*> drawn;
  std::vector<const RooflinePoint*> skipped;
  for (const auto& p : points) {
    (p.intensity_flops_per_byte > 0.0 && p.attained_gflops > 0.0 ? drawn : skipped).push_back(&p);
  }

  double x_lo = ridge, x_hi = ridge, y_lo = y(pi), y_hi = y(pi);
  for (const auto* p : drawn) {
    x_lo = std::min(x_lo, p->intensity_flops_per_byte);
    x_hi = std::max(x_hi, p->intensity_flops_per_byte);
    y_lo = std::min({y_lo, y(p->attained_gflops), y(p->attainable_gflops)});
    y_hi = std::max(y_hi, y(p->attained_gflops));
  }
  const double xmin = decade_below(x_lo), xmax = decade_above(x_hi);
  const double ymin = decade_below(y_lo), ymax = decade_above(y_hi);

  const std::string scenario(to_string(profile.scenario.kind));
  std::string ylabel = spec.correct_spelling ? "Attainable GFLOPS/s" : "Atteinable GFLOPS/s";
  if (norm) ylabel += " [% of peak]";

  std::ostringstream s;
  s << "# roofline: " << profile.label << "\n";
  s << "set terminal svg size 1000,700 dynamic font \"Helvetica,12\"\n";
  s << "set output " << quoted(spec.output_file) << "\n";
  s << "set title " << quoted(profile.machine_descriptor + " - " + scenario) << "\n";
  s << "set logscale xy 10\n";
  s << "set xlabel \"Arithmetic Intensity [FLOPS/Byte]\"\n";
  s << "set ylabel " << quoted(ylabel) << "\n";
  s << "set xrange [" << num(xmin) << ":" << num(xmax) << "]\n";
  s << "set yrange [" << num(ymin) << ":" << num(ymax) << "]\n";
  s << "set grid\n";
  s << "set key off\n";
  s << "# peak compute " << num(pi) << " GFLOP/s, peak bandwidth " << num(beta)
    << " GB/s, ridge " << num(ridge) << " FLOPS/Byte\n";
  s << "$roof << EOD\n";
  s << num(xmin) << " " << num(y(xmin * beta)) << "\n";
  s << num(ridge) << " " << num(y(pi)) << "\n";
  s << num(xmax) << " " << num(y(pi)) << "\n";
  s << "EOD\n";
  s << "set label 1 \"compute bound (Peak Runtime Compute: 100%)\" at " << num(ridge * 1.5) << ","
    << num(y(pi) * 1.4) << " left\n";
  s << "set label 2 \"ET - Execution Time\" at graph 0.02,0.95 left\n";
  s << "set label 3 \"RC - Runtime Compute\" at graph 0.02,0.90 left\n";

  int tag = 10;
  for (const auto* p : drawn) {
    const double xi = p->intensity_flops_per_byte;
    const double ya = y(p->attained_gflops);
    const double yr = y(p->attainable_gflops);
    s << "# " << p->kernel_name << " (" << to_string(p->cache_protocol) << ", "
      << to_string(p->bound) << ")\n";
    s << "set arrow " << tag << " from " << num(xi) << "," << num(ymin) << " to " << num(xi) << ","
      << num(yr) << " nohead dashtype 2\n";
    s << "set label " << tag + 1 << " " << quoted(p->kernel_name) << " at " << num(xi / 1.15)
      << "," << num(ymin * 2.0) << " rotate by 90 left\n";
    s << "set label " << tag + 2 << " \"RC: " << format_percent(p->rc_percent) << "%\" at "
      << num(xi * 1.15) << "," << num(ya) << " left\n";
    if (p->et_percent) {
      s << "set label " << tag + 3 << " \"ET: " << format_percent(*p->et_percent) << "%\" at "
        << num(xi * 1.15) << "," << num(ya / 1.6) << " left\n";
    }
    s << "set label " << tag + 4 << " \"Attainable RC: " << format_percent(p->attainable_rc_percent)
      << " %\" at " << num(xi * 1.15) << "," << num(yr * 1.25) << " left\n";
    tag += 5;
  }
  for (const auto* p : skipped) {
    s << "# skipped " << p->kernel_name << ": zero intensity or attained performance\n";
  }
  s << "$points << EOD\n";
  for (const auto* p : drawn) {
    s << num(p->intensity_flops_per_byte) << " " << num(y(p->attained_gflops)) << "\n";
  }
  s << "EOD\n";
  s << "plot $roof with lines linewidth 2 linecolor rgb \"black\", \\\n";
  s << "     $points with points pointtype 7 pointsize 1.2 linecolor rgb \"red\"\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// summary

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string row(const std::vector<std::string>& cells, const std::vector<int>& widths) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string c = cells[i];
    if (i + 1 < cells.size() && static_cast<int>(c.size()) < widths[i]) c.resize(widths[i], ' ');
    out += c;
    if (i + 1 < cells.size()) out += "  ";
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out + "\n";
}

}  // namespace

std::string summarize(const ResultDocument& doc) {
  const std::vector<int> w = {20, 13, 5, 12, 12, 12, 8, 8, 8, 12, 0};
  std::ostringstream s;
  s << row({"kernel", "scenario", "cache", "I[FLOP/B]", "GFLOP/s", "attainable", "RC%", "Att.RC%",
            "ET%", "bound", "flags"},
           w);
  for (const auto& p : doc.points) {
    std::vector<std::string> flags;
    if (p.traffic_unreliable) flags.push_back("traffic-unreliable");
    if (p.work_not_measurable) flags.push_back("work-not-measurable");
    if (p.above_roof) flags.push_back("above-roof");
    std::string flag_text;
    for (const auto& f : flags) flag_text += (flag_text.empty() ? "" : ",") + f;
    s << row({(p.traffic_unreliable ? "*" : "") + p.kernel_name, std::string(to_string(p.scenario)),
              std::string(to_string(p.cache_protocol)), fmt("%.4g", p.intensity_flops_per_byte),
              fmt("%.4g", p.attained_gflops), fmt("%.4g", p.attainable_gflops),
              format_percent(p.rc_percent), format_percent(p.attainable_rc_percent),
              p.et_percent ? format_percent(*p.et_percent) : "-", std::string(to_string(p.bound)),
              flag_text},
             w);
  }

  // Same kernel and cache protocol seen under more than one scenario.
  std::map<std::pair<std::string, CacheKind>, std::vector<const RooflinePoint*>> by_kernel;
  for (const auto& p : doc.points) by_kernel[{p.kernel_name, p.cache_protocol}].push_back(&p);
  bool header = false;
  for (const auto& [key, list] : by_kernel) {
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (!header) {
        s << "\ncomparison\n";
        header = true;
      }
      const auto* a = list[i - 1];
      const auto* b = list[i];
      s << "  " << key.first << " (" << to_string(key.second) << ", " << to_string(a->scenario)
        << " -> " << to_string(b->scenario) << "): RC from " << format_percent(a->rc_percent)
        << "% to " << format_percent(b->rc_percent) << "%";
      if (a->et_percent && b->et_percent) {
        s << ", ET from " << format_percent(*a->et_percent) << "% to "
          << format_percent(*b->et_percent) << "%";
      }
      s << "\n";
    }
  }

  std::set<std::tuple<std::string, ScenarioKind, CacheKind>> placed;
  for (const auto& p : doc.points) placed.insert({p.kernel_name, p.scenario, p.cache_protocol});
  header = false;
  for (const auto& m : doc.measurements) {
    if (placed.count({m.kernel_name, m.scenario.kind, m.cache_protocol})) continue;
    if (!header) {
      s << "\nmeasured without a roofline point\n";
      header = true;
    }
    s << "  " << m.kernel_name << " (" << to_string(m.scenario.kind) << ", "
      << to_string(m.cache_protocol) << "): runtime " << fmt("%.6g", m.runtime_seconds) << " s, work "
      << (m.work_measured ? std::to_string(m.work_flops) + " FLOP" : std::string("not measured"))
      << ", traffic "
      << (m.traffic_measured ? std::to_string(m.traffic_bytes) + " B" : std::string("not measured"))
      << "\n";
  }

  if (!doc.warnings.empty()) {
    s << "\nwarnings\n";
    for (const auto& wng : doc.warnings) s << "  " << wng << "\n";
  }
  if (!doc.errors.empty()) {
    s << "\nerrors\n";
    for (const auto& e : doc.errors) s << "  [" << e.stage << "] " << e.message << "\n";
  }
  return s.str();
}

}  // namespace roofline

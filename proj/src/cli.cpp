#include "roofline/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "roofline/compute_bench.hpp"
#include "roofline/error.hpp"
#include "roofline/harness.hpp"
#include "roofline/kernels.hpp"
#include "roofline/mock.hpp"
#include "roofline/report.hpp"

namespace fs = std::filesystem;

namespace roofline {

// ---------------------------------------------------------------------------
// config

std::vector<ScenarioKind> parse_scenario_list(const std::string& text) {
  std::vector<ScenarioKind> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto kind = parse_scenario_kind(item);
    if (std::find(out.begin(), out.end(), kind) == out.end()) out.push_back(kind);
  }
  if (out.empty()) throw Error("scenario list is empty");
  return out;
}

std::string format_cpu_list(std::vector<int> cpus) {
  std::sort(cpus.begin(), cpus.end());
  std::string out;
  for (std::size_t i = 0; i < cpus.size();) {
    std::size_t j = i;
    while (j + 1 < cpus.size() && cpus[j + 1] == cpus[j] + 1) ++j;
    if (!out.empty()) out += ",";
    out += std::to_string(cpus[i]);
    if (j > i) out += "-" + std::to_string(cpus[j]);
    i = j + 1;
  }
  return out;
}

void Config::validate() const {
  if (scenarios.empty()) throw Error("no scenario selected");
  if (reps < 3) throw Error("--reps must be at least 3 (got " + std::to_string(reps) + ")");
  if (buffer_bytes < kMinProbeBytes) {
    throw Error("--buffer-bytes must be at least " + std::to_string(kMinProbeBytes));
  }
  if (backend != "hw" && backend != "mock") throw Error("--backend must be hw or mock");
  if (backend == "mock") {
    if (mock_script.empty()) throw Error("--backend mock needs --mock-script");
    if (!fs::exists(mock_script)) throw Error("mock script " + mock_script + " does not exist");
  }
  const auto specs = parse_kernel_list(kernels);
  const auto names = kernel_names();
  for (const auto& s : specs) {
    if (std::find(names.begin(), names.end(), s.name) == names.end()) make_kernel(s.name);
  }
  if (plot_mode != "absolute" && plot_mode != "normalized") {
    throw Error("--plot-mode must be absolute or normalized");
  }
  if (!(min_seconds > 0.0)) throw Error("--min-seconds must be positive");
  if (idle_seconds < 0.0) throw Error("--idle-seconds must not be negative");
  if (out.empty()) throw Error("--out must not be empty");
}

void apply_config_json(Config& cfg, const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config must be a JSON object");
  auto joined = [](const json& v) {
    if (!v.is_array()) return v.get<std::string>();
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ",") + e.get<std::string>();
    return s;
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "scenario") cfg.scenarios = parse_scenario_list(joined(v));
      else if (key == "cache") cfg.cache = parse_cache_kind(v.get<std::string>());
      else if (key == "reps") cfg.reps = v.get<int>();
      else if (key == "buffer-bytes") cfg.buffer_bytes = v.get<std::size_t>();
      else if (key == "backend") cfg.backend = v.get<std::string>();
      else if (key == "mock-script") cfg.mock_script = v.get<std::string>();
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "kernels") cfg.kernels = joined(v);
      else if (key == "et-baseline") cfg.et_baseline = v.get<std::string>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "topology") cfg.topology = v.get<std::string>();
      else if (key == "plot-mode") cfg.plot_mode = v.get<std::string>();
      else if (key == "correct-label") cfg.correct_label = v.get<bool>();
      else if (key == "min-seconds") cfg.min_seconds = v.get<double>();
      else if (key == "idle-seconds") cfg.idle_seconds = v.get<double>();
      else if (key == "one-thread-per-core") cfg.one_thread_per_core = v.get<bool>();
      else throw Error("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(std::string("bad config value: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// session

namespace {

struct Session {
  Config cfg;
  MachineTopology topo;
  std::optional<MockScript> script;
  std::string descriptor;
  VectorIsa isa;
  fs::path sys_root;

  bool mock() const { return script.has_value(); }
  std::uint64_t seed() const { return cfg.seed.value_or(mock() ? script->seed : 1); }
};

std::string read_first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string cpu_model_name() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto name = line.substr(colon + 1);
        name.erase(0, name.find_first_not_of(' '));
        return name;
      }
    }
  }
  return "unknown cpu";
}

Session open_session(const Config& cfg) {
  Session s;
  s.cfg = cfg;
  if (cfg.backend == "mock") {
    s.script = load_mock_script(cfg.mock_script);
    s.sys_root = s.script->topology_fixture;
    s.topo = discover(s.sys_root);
    s.descriptor = s.script->machine_descriptor;
    s.isa = s.script->isa;
  } else {
    s.sys_root = cfg.topology;
    s.topo = discover(s.sys_root);
    s.isa = detect_isa();
    s.descriptor = cpu_model_name() + ", " + std::to_string(s.topo.sockets()) + " socket(s), " +
                   std::to_string(s.topo.cores()) + " cores, " +
                   std::to_string(s.topo.logical_cpus()) + " logical CPUs";
  }
  return s;
}

void add_unique(std::vector<std::string>& list, const std::string& text) {
  if (std::find(list.begin(), list.end(), text) == list.end()) list.push_back(text);
}

std::uint64_t max_llc(const MachineTopology& topo) {
  std::uint64_t llc = 0;
  for (const auto& [socket, bytes] : topo.llc_bytes) llc = std::max(llc, bytes);
  return llc > 0 ? llc : kFallbackLlcBytes;
}

// ---------------------------------------------------------------------------
// probe

std::string stage_probe(const Session& s, std::vector<std::string>& warnings) {
  std::ostringstream o;
  if (s.mock()) o << "Mock backend (script " << s.cfg.mock_script << ")\n";
  o << "machine: " << s.descriptor << "\n";
  o << "sockets: " << s.topo.sockets() << ", cores: " << s.topo.cores()
    << ", logical cpus: " << s.topo.logical_cpus() << ", memory nodes: " << s.topo.node_cpus.size()
    << "\n";
  for (int socket = 0; socket < s.topo.sockets(); ++socket) {
    o << "socket " << socket << ": cpus " << format_cpu_list(s.topo.socket_cpus(socket));
    try {
      o << ", node " << s.topo.node_of_socket(socket);
    } catch (const Error&) {
      o << ", node ?";
    }
    o << ", LLC " << s.topo.llc_bytes_of(socket) / 1024 << " KiB\n";
  }
  o << "isa: " << s.isa.name() << " (" << s.isa.lanes_f32() << " fp32 lanes, "
    << s.isa.flops_per_fma() << " FLOP per FMA)\n";
  for (const auto& w : s.topo.warnings) add_unique(warnings, w);

  std::uint32_t available = 0;
  std::vector<std::string> diagnostics;
  if (s.mock()) {
    available = s.script->available;
    diagnostics = s.script->diagnostics;
  } else {
    if (auto level = perf_paranoid_level()) o << "perf_event_paranoid: " << *level << "\n";
    try {
      HardwareCounterBackend hw;
      available = hw.available();
      diagnostics = hw.diagnostics();
    } catch (const Error& e) {
      diagnostics.push_back(e.what());
    }
  }
  o << "counters: FP_ARITH " << ((available & kFpCounters) == kFpCounters ? "available" : "unavailable")
    << ", IMC " << ((available & kImcCounters) == kImcCounters ? "available" : "unavailable") << "\n";
  for (const auto& d : diagnostics) add_unique(warnings, d);

  const auto no_turbo = s.sys_root / "cpu" / "intel_pstate" / "no_turbo";
  const auto boost = s.sys_root / "cpu" / "cpufreq" / "boost";
  if ((fs::exists(no_turbo) && read_first_line(no_turbo) == "0") ||
      (fs::exists(boost) && read_first_line(boost) == "1")) {
    add_unique(warnings, "turbo boost is enabled; peaks and runtimes will drift with frequency");
  }
  for (const auto& w : warnings) o << "warning: " << w << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// bench

PlatformProfile bench_scenario(const Session& s, ScenarioKind kind,
                               std::vector<std::string>& warnings) {
  const Scenario sc = make_scenario(s.topo, kind, {0, s.cfg.one_thread_per_core});
  ComputeBenchConfig cc;
  cc.min_duration_seconds = s.cfg.min_seconds;

  ComputeBenchResult compute;
  PassRunner runner;
  if (s.mock()) {
    const StreamCost cost{static_cast<std::uint64_t>(cc.unroll) * cc.inner_iterations,
                          s.isa.flops_per_fma()};
    const double spc = mock_seconds_per_call(
        *s.script, kind, sc.cpu_set.size(),
        static_cast<double>(cost.fma_count_per_call) * cost.flops_per_fma);
    compute = run_peak_compute(sc, cc, s.isa, cost,
                               [spc](int) { return std::make_unique<MockComputeDriver>(spc); });
    runner = mock_pass_runner(*s.script);
  } else {
    compute = run_peak_compute(sc, cc, s.isa);
    runner = HardwarePassRunner(s.topo, s.isa);
  }

  PlatformProfile p;
  p.scenario = sc;
  p.peak_flops_gps = compute.gflops;
  p.label = std::string(to_string(kind));
  p.machine_descriptor = s.descriptor;
  p.compute_isa = std::string(s.isa.name());
  const std::string prefix = p.label + ": ";
  if (kind == ScenarioKind::TwoSockets) {
    const auto two = two_socket_bandwidth(s.topo, sc, s.cfg.buffer_bytes, runner);
    p.peak_bandwidth_gbps = two.gbps;
    for (std::size_t n = 0; n < two.per_node.size(); ++n) {
      p.bandwidth_method += (n ? "+" : "") + std::string(to_string(two.per_node[n].method));
      for (const auto& w : two.per_node[n].warnings) add_unique(warnings, prefix + w);
    }
  } else {
    const auto peak = peak_bandwidth(sc, s.cfg.buffer_bytes, runner);
    p.peak_bandwidth_gbps = peak.gbps;
    p.bandwidth_method = std::string(to_string(peak.method));
    for (const auto& w : peak.warnings) add_unique(warnings, prefix + w);
  }
  p.validate();
  return p;
}

void stage_bench(const Session& s, ResultDocument& doc, std::ostream& out) {
  for (auto kind : s.cfg.scenarios) {
    try {
      auto p = bench_scenario(s, kind, doc.warnings);
      out << "bench " << p.label << ": " << p.peak_flops_gps << " GFLOP/s (" << p.compute_isa
          << "), " << p.peak_bandwidth_gbps << " GB/s (" << p.bandwidth_method << ")\n";
      auto it = std::find_if(doc.profiles.begin(), doc.profiles.end(),
                             [&](const auto& q) { return q.scenario.kind == kind; });
      if (it != doc.profiles.end()) {
        *it = std::move(p);
      } else {
        doc.profiles.push_back(std::move(p));
      }
    } catch (const std::exception& e) {
      doc.errors.push_back({"bench", std::string(to_string(kind)) + ": " + e.what()});
    }
  }
}

// ---------------------------------------------------------------------------
// measure

void stage_measure(const Session& s, ResultDocument& doc, std::ostream& out) {
  std::vector<ScenarioKind> kinds;
  for (auto kind : s.cfg.scenarios) {
    if (doc.profile_for(kind)) {
      kinds.push_back(kind);
    } else {
      doc.errors.push_back({"measure", "no profile for scenario " + std::string(to_string(kind)) +
                                           "; run bench first"});
    }
  }
  if (kinds.empty()) return;
  const auto specs = parse_kernel_list(s.cfg.kernels);
  const std::uint64_t llc = max_llc(s.topo);

  std::vector<RunPlan> plans;
  for (auto kind : kinds) {
    RunPlan plan;
    plan.scenario = make_scenario(s.topo, kind, {0, s.cfg.one_thread_per_core});
    plan.cache = s.cfg.cache == CacheKind::Cold ? CacheProtocol::cold(llc) : CacheProtocol::warm();
    plan.repetitions = s.cfg.reps;
    plan.seed = s.seed();
    plans.push_back(plan);
  }

  std::unique_ptr<CounterBackend> backend;
  std::unique_ptr<RegionTimer> timer;
  std::unique_ptr<Affinity> affinity;
  HarnessOptions options;
  options.llc_bytes = llc;
  if (s.mock()) {
    backend = std::make_unique<ScriptedCounterBackend>(*s.script);
    timer = std::make_unique<ScriptedRegionTimer>(s.script->runtimes);
    affinity = std::make_unique<MockAffinity>();
    options.simulate_clobber = true;
    if (s.script->idle) {
      options.idle = sample_idle_baseline(*backend, s.script->idle_seconds, [](double) {});
    }
  } else {
    backend = make_hardware_backend();
    timer = std::make_unique<SteadyRegionTimer>();
    affinity = std::make_unique<LinuxAffinity>();
    for (const auto& d : backend->diagnostics()) add_unique(doc.warnings, d);
    if ((backend->available() & kImcCounters) == kImcCounters && s.cfg.idle_seconds > 0.0) {
      options.idle = sample_idle_baseline(*backend, s.cfg.idle_seconds, [](double sec) {
        std::this_thread::sleep_for(std::chrono::duration<double>(sec));
      });
    }
  }

  Harness harness(*backend, *timer, *affinity, options);
  const VectorIsa isa = s.isa;
  auto suite = run_suite(harness, specs, plans,
                         [isa](const std::string& name) { return make_kernel(name, isa); });
  for (const auto& m : suite.measurements) {
    out << "measure " << m.kernel_name << " [" << to_string(m.scenario.kind) << ", "
        << to_string(m.cache_protocol) << "]: " << m.runtime_seconds << " s\n";
  }
  doc.measurements = std::move(suite.measurements);
  doc.points.clear();
  for (const auto& w : suite.warnings) add_unique(doc.warnings, w);
  for (const auto& e : suite.errors) {
    doc.errors.push_back({"measure", e.kernel + " [" + e.scenario + ", " + e.cache + "]: " + e.message});
  }
}

// ---------------------------------------------------------------------------
// report

void stage_report(const Config& cfg, ResultDocument& doc, const fs::path& dir, std::ostream& out) {
  std::vector<std::string> warnings;
  try {
    doc.points = assemble_points(doc.profiles, doc.measurements, cfg.et_baseline, warnings);
  } catch (const std::exception& e) {
    doc.errors.push_back({"report", e.what()});
    warnings.clear();
    doc.points = assemble_points(doc.profiles, doc.measurements, std::nullopt, warnings);
  }
  for (const auto& w : warnings) add_unique(doc.warnings, w);

  PlotSpec spec;
  spec.mode = cfg.plot_mode == "normalized" ? PlotMode::Normalized : PlotMode::Absolute;
  spec.correct_spelling = cfg.correct_label;
  for (const auto& profile : doc.profiles) {
    std::vector<RooflinePoint> pts;
    for (const auto& p : doc.points) {
      if (p.profile_label == profile.label) pts.push_back(p);
    }
    const std::string stem = "roofline_" + std::string(to_string(profile.scenario.kind));
    if (pts.empty()) {
      add_unique(doc.warnings, "no points for " + profile.label + "; " + stem + ".gp not written");
      continue;
    }
    spec.output_file = stem + ".svg";
    std::ofstream(dir / (stem + ".gp"), std::ios::binary | std::ios::trunc)
        << render_plot(profile, pts, spec);
    out << "wrote " << (dir / (stem + ".gp")).string() << "\n";
  }
  const std::string summary = summarize(doc);
  std::ofstream(dir / "summary.txt", std::ios::binary | std::ios::trunc) << summary;
  out << summary;
}

ResultDocument load_or_new(const Session& s, const fs::path& file) {
  if (fs::exists(file)) return read_results(file);
  ResultDocument doc;
  doc.machine_descriptor = s.descriptor;
  doc.seed = s.seed();
  return doc;
}

}  // namespace

// ---------------------------------------------------------------------------
// entry point

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Roofline model generator: machine peaks, kernel counters, plots", "roofline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string scenario, cache, backend, mock_script, outdir, kernels, et_baseline, config_path,
      topology, plot_mode;
  int reps = 0;
  std::size_t buffer_bytes = 0;
  std::uint64_t seed = 0;
  double min_seconds = 0, idle_seconds = 0;
  bool correct_label = false, one_per_core = false;

  auto* o_scenario = app.add_option("--scenario", scenario,
                                    "comma list of single-thread, single-socket, two-sockets");
  auto* o_cache = app.add_option("--cache", cache, "cold or warm");
  auto* o_reps = app.add_option("--reps", reps, "repetitions per measurement (>= 3)");
  auto* o_buffer = app.add_option("--buffer-bytes", buffer_bytes, "bandwidth probe buffer size");
  auto* o_backend = app.add_option("--backend", backend, "hw or mock");
  auto* o_mock = app.add_option("--mock-script", mock_script, "mock script (JSON)");
  auto* o_out = app.add_option("--out", outdir, "output directory");
  auto* o_kernels = app.add_option("--kernels", kernels, "comma list of kernel[:n]");
  auto* o_et = app.add_option("--et-baseline", et_baseline, "kernel whose runtime is ET 100%");
  app.add_option("--config", config_path, "JSON config; flags override its values");
  auto* o_seed = app.add_option("--seed", seed, "data initialization seed");
  auto* o_topo = app.add_option("--topology", topology, "OS topology root (default /sys/devices/system)");
  auto* o_plot = app.add_option("--plot-mode", plot_mode, "absolute or normalized");
  auto* o_label = app.add_flag("--correct-label", correct_label, "spell the y label 'Attainable'");
  auto* o_min = app.add_option("--min-seconds", min_seconds, "compute benchmark duration");
  auto* o_idle = app.add_option("--idle-seconds", idle_seconds, "IMC idle baseline duration (hw)");
  auto* o_core = app.add_flag("--one-thread-per-core", one_per_core, "skip SMT siblings");

  auto* probe = app.add_subcommand("probe", "describe topology, ISA and counter access");
  auto* bench = app.add_subcommand("bench", "measure peak compute and bandwidth per scenario");
  auto* measure = app.add_subcommand("measure", "measure kernels under the benchmarked roofs");
  auto* report = app.add_subcommand("report", "place points, write plot scripts and summary");
  auto* full = app.add_subcommand("full", "probe, bench, measure and report in one run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  Config cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error("cannot open config " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      apply_config_json(cfg, ss.str());
    }
    if (o_scenario->count()) cfg.scenarios = parse_scenario_list(scenario);
    if (o_cache->count()) cfg.cache = parse_cache_kind(cache);
    if (o_reps->count()) cfg.reps = reps;
    if (o_buffer->count()) cfg.buffer_bytes = buffer_bytes;
    if (o_backend->count()) cfg.backend = backend;
    if (o_mock->count()) cfg.mock_script = mock_script;
    if (o_out->count()) cfg.out = outdir;
    if (o_kernels->count()) cfg.kernels = kernels;
    if (o_et->count()) cfg.et_baseline = et_baseline;
    if (o_seed->count()) cfg.seed = seed;
    if (o_topo->count()) cfg.topology = topology;
    if (o_plot->count()) cfg.plot_mode = plot_mode;
    if (o_label->count()) cfg.correct_label = correct_label;
    if (o_min->count()) cfg.min_seconds = min_seconds;
    if (o_idle->count()) cfg.idle_seconds = idle_seconds;
    if (o_core->count()) cfg.one_thread_per_core = one_per_core;
    cfg.validate();
    const bool measures = *measure || *full;
    if (measures && cfg.et_baseline) {
      const auto specs = parse_kernel_list(cfg.kernels);
      if (std::none_of(specs.begin(), specs.end(),
                       [&](const auto& k) { return k.name == *cfg.et_baseline; })) {
        std::string names;
        for (const auto& k : specs) names += (names.empty() ? "" : ", ") + k.name;
        throw Error("ET baseline '" + *cfg.et_baseline + "' is not measured; valid kernels: " + names);
      }
    }
  } catch (const std::exception& e) {
    err << "roofline: " << e.what() << "\n";
    return 2;
  }

  Session s;
  try {
    s = open_session(cfg);
  } catch (const std::exception& e) {
    err << "roofline: " << e.what() << "\n";
    return 1;
  }

  if (*probe) {
    std::vector<std::string> warnings;
    out << stage_probe(s, warnings);
    return 0;
  }

  const fs::path dir(cfg.out);
  const fs::path results = dir / "results.json";
  std::size_t errors_before = 0;
  ResultDocument doc;
  try {
    fs::create_directories(dir);
    if (*bench || *full) {
      doc.machine_descriptor = s.descriptor;
      doc.seed = s.seed();
    } else {
      doc = load_or_new(s, results);
    }
    errors_before = doc.errors.size();

    if (*bench || *full) {
      // Host warnings (turbo, counters) belong with the peaks they affect.
      std::vector<std::string> warnings;
      const std::string probe_text = stage_probe(s, warnings);
      if (*full) out << probe_text;
      for (const auto& w : warnings) add_unique(doc.warnings, w);
      if (*full) write_results(doc, results);
    }
    if (*bench || *full) {
      stage_bench(s, doc, out);
      write_results(doc, results);
    }
    if (*measure || *full) {
      try {
        stage_measure(s, doc, out);
      } catch (const std::exception& e) {
        doc.errors.push_back({"measure", e.what()});
      }
      write_results(doc, results);
    }
    if (*report || *full) {
      stage_report(cfg, doc, dir, out);
      write_results(doc, results);
    }
  } catch (const std::exception& e) {
    err << "roofline: " << e.what() << "\n";
    return 1;
  }

  for (std::size_t i = errors_before; i < doc.errors.size(); ++i) {
    err << "error [" << doc.errors[i].stage << "] " << doc.errors[i].message << "\n";
  }
  return doc.errors.size() == errors_before ? 0 : 1;
}

}  // namespace roofline

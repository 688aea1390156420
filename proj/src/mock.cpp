#include "roofline/mock.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roofline/error.hpp"

namespace roofline {

using nlohmann::json;

namespace {

CounterSample sample_from(const json& j, std::uint32_t mask) {
  static const char* known[] = {"scalar_single", "packed_128",    "packed_256",
                                "packed_512",    "imc_cas_reads", "imc_cas_writes"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error("unknown counter field '" + key + "' in mock script");
  }
  auto get = [&](const char* key) { return j.value(key, std::uint64_t{0}); };
  CounterSample s;
  s.scalar_single = get("scalar_single");
  s.packed_128 = get("packed_128");
  s.packed_256 = get("packed_256");
  s.packed_512 = get("packed_512");
  s.imc_cas_reads = get("imc_cas_reads");
  s.imc_cas_writes = get("imc_cas_writes");
  s.valid_mask = mask;
  return s;
}

std::vector<CounterSample> samples_from(const json& j, std::uint32_t mask) {
  std::vector<CounterSample> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(sample_from(e, mask));
  } else {
    out.push_back(sample_from(j, mask));
  }
  return out;
}

std::uint32_t mask_from(const json& j) {
  std::uint32_t mask = 0;
  for (const auto& name : j) {
    const auto s = name.get<std::string>();
    if (s == "fp") {
      mask |= kFpCounters;
    } else if (s == "imc") {
      mask |= kImcCounters;
    } else {
      throw Error("unknown counter group '" + s + "' (use fp, imc)");
    }
  }
  return mask;
}

}  // namespace

MockScript parse_mock_script(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("mock script is not valid JSON: ") + e.what());
  }
  try {
    MockScript s;
    s.machine_descriptor = j.at("machine_descriptor").get<std::string>();
    s.topology_fixture = base_dir / j.at("topology_fixture").get<std::string>();
    if (j.contains("isa")) s.isa = parse_isa(j.at("isa").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("available")) s.available = mask_from(j.at("available"));
    for (std::uint32_t g : {kFpCounters, kImcCounters}) {
      if ((s.available & g) == 0) {
        s.diagnostics.push_back(g == kFpCounters ? "mock: FP_ARITH counters unavailable"
                                                 : "mock: IMC counters unavailable");
      }
    }
    for (const auto& [k, v] : j.at("compute_gflops").items()) {
      s.compute_gflops[parse_scenario_kind(k)] = v.get<double>();
    }
    for (const auto& [k, methods] : j.at("bandwidth_gbps").items()) {
      auto& row = s.bandwidth_gbps[parse_scenario_kind(k)];
      for (const auto& [m, v] : methods.items()) row[parse_bandwidth_method(m)] = v.get<double>();
    }
    if (j.contains("node_scale")) {
      for (const auto& [k, v] : j.at("node_scale").items()) s.node_scale[std::stoi(k)] = v.get<double>();
    }
    for (const auto& [kernel, c] : j.at("counters").items()) {
      KernelCounterScript ks;
      ks.init = sample_from(c.at("init"), s.available);
      ks.full = samples_from(c.at("full"), s.available);
      if (c.contains("warm_full")) ks.warm_full = samples_from(c.at("warm_full"), s.available);
      if (ks.full.empty()) throw Error("mock counters for " + kernel + " have no full samples");
      s.counters[kernel] = std::move(ks);
    }
    if (j.contains("idle")) {
      s.idle = sample_from(j.at("idle").at("sample"), s.available);
      s.idle_seconds = j.at("idle").at("seconds").get<double>();
    }
    for (const auto& [k, v] : j.at("runtimes").items()) s.runtimes[k] = v.get<double>();
    return s;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed mock script: ") + e.what());
  }
}

MockScript load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open mock script " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mock_script(ss.str(), path.parent_path());
}

ScriptedCounterBackend::ScriptedCounterBackend(const MockScript& script) : script_(script) {}

void ScriptedCounterBackend::annotate(const RegionLabel& label) {
  if (label.phase == "init") rep_ = 0;
  label_ = label;
}

CounterSample ScriptedCounterBackend::stop() {
  if (label_.phase == "idle") {
    if (!script_.idle) throw Error("mock script has no idle sample");
    return *script_.idle;
  }
  auto it = script_.counters.find(label_.kernel);
  if (it == script_.counters.end()) {
    throw Error("mock script has no counters for kernel '" + label_.kernel + "'");
  }
  const auto& ks = it->second;
  if (label_.phase == "init") return ks.init;
  const auto& list = (label_.cache == "warm" && !ks.warm_full.empty()) ? ks.warm_full : ks.full;
  return list[rep_++ % list.size()];
}

PassRunner mock_pass_runner(const MockScript& script) {
  return [&script](const BandwidthProbe& probe, const ProbeContext& ctx, std::uint64_t bytes) {
    auto row = script.bandwidth_gbps.find(ctx.scenario);
    if (row == script.bandwidth_gbps.end()) {
      throw Error("mock script has no bandwidth for " + std::string(to_string(ctx.scenario)));
    }
    auto cell = row->second.find(probe.method);
    if (cell == row->second.end()) {
      throw Error("mock script has no " + std::string(to_string(probe.method)) + " bandwidth");
    }
    double gbps = cell->second;
    if (auto s = script.node_scale.find(ctx.node); s != script.node_scale.end()) gbps *= s->second;
    return static_cast<double>(bytes) / (gbps * 1e9);
  };
}

double mock_seconds_per_call(const MockScript& script, ScenarioKind kind, std::size_t threads,
                             double flops_per_call) {
  auto it = script.compute_gflops.find(kind);
  if (it == script.compute_gflops.end()) {
    throw Error("mock script has no compute peak for " + std::string(to_string(kind)));
  }
  const double per_thread = it->second / static_cast<double>(threads);
  return flops_per_call / (per_thread * 1e9);
}

}  // namespace roofline

#include "roofline/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numeric>
#include <sstream>

#include "roofline/error.hpp"

namespace roofline {

namespace {

std::mutex g_measurement_lock;

void add_unique(std::vector<std::string>& list, const std::string& text) {
  for (const auto& s : list) {
    if (s == text) return;
  }
  list.push_back(text);
}

}  // namespace

CacheProtocol CacheProtocol::cold(std::uint64_t llc_bytes) {
  return {CacheKind::Cold, 2 * llc_bytes, 5};
}

CacheProtocol CacheProtocol::warm(int iterations) {
  return {CacheKind::Warm, 0, iterations};
}

void CacheProtocol::validate(std::uint64_t llc_bytes) const {
  if (kind == CacheKind::Cold && cold_clobber_bytes != 0 && cold_clobber_bytes < llc_bytes) {
    throw Error("cold clobber buffer of " + std::to_string(cold_clobber_bytes) +
                " bytes is smaller than the " + std::to_string(llc_bytes) + "-byte LLC");
  }
  if (warm_iterations < 1) throw Error("warm_iterations must be at least 1");
}

void RunPlan::validate() const {
  if (repetitions < 3) {
    throw Error("repetitions must be at least 3 to report an average (got " +
                std::to_string(repetitions) + ")");
  }
  if (scenario.cpu_set.empty()) throw Error("scenario has no CPUs");
}

double SteadyRegionTimer::time(const RunPlan&, const std::function<void()>& region) {
  const auto t0 = std::chrono::steady_clock::now();
  region();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

double ScriptedRegionTimer::time(const RunPlan& plan, const std::function<void()>& region) {
  region();
  const std::string scoped = plan.kernel_name + "@" + std::string(to_string(plan.scenario.kind));
  if (auto it = seconds_.find(scoped); it != seconds_.end()) return it->second;
  if (auto it = seconds_.find(plan.kernel_name); it != seconds_.end()) return it->second;
  throw Error("no scripted runtime for kernel '" + plan.kernel_name + "'");
}

ClearResult CacheClobber::clear(const CacheProtocol& protocol) {
  if (protocol.kind != CacheKind::Cold) return {0, true};
  const std::uint64_t bytes = protocol.cold_clobber_bytes;
  if (!simulate_) {
    try {
      if (scratch_.size() < bytes) scratch_.resize(bytes);
    } catch (const std::bad_alloc&) {
      throw Error("cannot allocate a " + std::to_string(bytes) + "-byte cache clobber buffer");
    }
    static unsigned char pattern = 0;
    std::memset(scratch_.data(), ++pattern, bytes);
  }
  return {bytes, false};
}

IdleBaseline sample_idle_baseline(CounterBackend& backend, double seconds,
                                  const std::function<void(double)>& sleeper) {
  if (!(seconds > 0.0)) throw Error("idle baseline needs a positive duration");
  backend.annotate({"idle", "", "", ""});
  const CounterSample s = backend.scoped_sample([&] { sleeper(seconds); });
  return {static_cast<double>(traffic_from_sample(s)) / seconds};
}

Harness::Harness(CounterBackend& backend, RegionTimer& timer, Affinity& affinity,
                 HarnessOptions options)
    : backend_(backend),
      timer_(timer),
      affinity_(affinity),
      options_(options),
      clobber_(options.simulate_clobber) {}

std::vector<std::string> Harness::take_warnings() { return std::exchange(warnings_, {}); }

KernelMeasurement Harness::measure(Kernel& kernel, const RunPlan& plan_in) {
  std::unique_lock lock(g_measurement_lock, std::try_to_lock);
  if (!lock.owns_lock()) throw Error("another measurement is already in progress");

  RunPlan plan = plan_in;
  plan.kernel_name = kernel.name();
  plan.validate();
  plan.cache.validate(options_.llc_bytes);
  if (plan.cache.kind == CacheKind::Cold && plan.cache.cold_clobber_bytes == 0) {
    plan.cache.cold_clobber_bytes = 2 * options_.llc_bytes;
  }
  if (plan.elements < kernel.min_elements()) plan.elements = kernel.min_elements();

  affinity_.pin(plan.scenario.cpu_set.front());
  kernel.init(plan.elements, plan.seed);
  const ExecContext ctx{plan.scenario.cpu_set, &affinity_};
  auto label = [&](const char* phase) {
    backend_.annotate({phase, plan.kernel_name, std::string(to_string(plan.scenario.kind)),
                       std::string(to_string(plan.cache.kind))});
  };

  // Same scope path with execution skipped: the framework's own counts.
  label("init");
  const CounterSample init_only = backend_.scoped_sample([] {});

  if (plan.cache.kind == CacheKind::Warm) {
    for (int i = 0; i < plan.cache.warm_iterations; ++i) kernel.execute(ctx);
  }

  std::vector<CounterSample> samples;
  std::vector<double> seconds;
  for (int r = 0; r < plan.repetitions; ++r) {
    if (plan.cache.kind == CacheKind::Cold) clobber_.clear(plan.cache);
    double t = 0.0;
    label("full");
    samples.push_back(backend_.scoped_sample(
        [&] { t = timer_.time(plan, [&] { kernel.execute(ctx); }); }));
    seconds.push_back(t);
  }

  KernelMeasurement m;
  m.kernel_name = kernel.name();
  m.elements = plan.elements;
  m.repetitions = plan.repetitions;
  m.cache_protocol = plan.cache.kind;
  m.scenario = plan.scenario;
  m.raw_init_only = init_only;
  m.raw_full = mean_sample(samples);
  m.per_rep_seconds = seconds;
  m.runtime_seconds =
      std::accumulate(seconds.begin(), seconds.end(), 0.0) / static_cast<double>(seconds.size());
  m.analytic_work = kernel.analytic_work(plan.elements);

  auto net = [&](const CounterSample& full) {
    if (!plan.baseline_subtraction) return SubtractResult{full, false};
    return subtract_overhead(full, init_only);
  };
  const SubtractResult delta = net(m.raw_full);
  m.overhead_clamped = delta.clamped;

  if (delta.sample.fp_valid()) {
    m.work_flops = flops_from_sample(delta.sample);
  } else {
    m.work_measured = false;
    add_unique(warnings_, "FP_ARITH counters unavailable: work not measured");
  }

  if (delta.sample.imc_valid()) {
    double idle_rate = options_.idle ? options_.idle->bytes_per_second : 0.0;
    auto debias = [&](std::uint64_t bytes, double runtime) {
      const auto idle = static_cast<std::uint64_t>(std::llround(idle_rate * runtime));
      return bytes > idle ? bytes - idle : 0;
    };
    m.idle_baseline_bytes = static_cast<std::uint64_t>(std::llround(idle_rate * m.runtime_seconds));
    m.traffic_bytes = debias(traffic_from_sample(delta.sample), m.runtime_seconds);
    for (std::size_t r = 0; r < samples.size(); ++r) {
      m.per_rep_traffic_bytes.push_back(
          debias(traffic_from_sample(net(samples[r]).sample), seconds[r]));
    }
  } else {
    m.traffic_measured = false;
    add_unique(warnings_, "IMC counters unavailable: traffic not measured");
  }

  m.traffic_unreliable = kernel.footprint_bytes() < kReliableTrafficBytes;
  m.work_not_measurable = !kernel.work_counted();
  if (m.work_measured && m.analytic_work && *m.analytic_work > 0.0 &&
      static_cast<double>(m.work_flops) < 0.01 * *m.analytic_work) {
    m.work_not_measurable = true;
  }
  if (m.work_measured && !m.analytic_work && plan.elements > 0) {
    m.calibrated_flops_per_element =
        static_cast<double>(m.work_flops) / static_cast<double>(plan.elements);
  }
  return m;
}

KernelSpec parse_kernel_spec(const std::string& text) {
  KernelSpec spec;
  const auto colon = text.find(':');
  spec.name = text.substr(0, colon);
  if (spec.name.empty()) throw Error("empty kernel name in '" + text + "'");
  if (colon != std::string::npos) {
    const std::string n = text.substr(colon + 1);
    std::size_t used = 0;
    unsigned long long value = 0;
    try {
      value = std::stoull(n, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != n.size() || value == 0) {
      throw Error("bad element count '" + n + "' for kernel " + spec.name);
    }
    spec.elements = static_cast<std::size_t>(value);
  }
  return spec;
}

std::vector<KernelSpec> parse_kernel_list(const std::string& comma_list) {
  std::vector<KernelSpec> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_kernel_spec(item));
  }
  if (out.empty()) throw Error("kernel list is empty");
  return out;
}

SuiteResult run_suite(Harness& harness, const std::vector<KernelSpec>& kernels,
                      const std::vector<RunPlan>& plans, const KernelFactory& factory) {
  if (kernels.empty() || plans.empty()) throw Error("run_suite needs kernels and plans");
  SuiteResult out;
  for (const auto& spec : kernels) {
    for (const auto& base : plans) {
      RunPlan plan = base;
      plan.kernel_name = spec.name;
      plan.elements = spec.elements;
      try {
        auto kernel = factory(spec.name);
        out.measurements.push_back(harness.measure(*kernel, plan));
      } catch (const std::exception& e) {
        out.errors.push_back({spec.name, std::string(to_string(plan.scenario.kind)),
                              std::string(to_string(plan.cache.kind)), e.what()});
      }
    }
  }
  for (auto& w : harness.take_warnings()) add_unique(out.warnings, w);
  return out;
}

}  // namespace roofline

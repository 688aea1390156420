#include "roofline/compute_bench.hpp"

#include <barrier>
#include <chrono>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "roofline/error.hpp"

namespace roofline {

namespace {

class HardwareComputeDriver final : public ComputeDriver {
 public:
  explicit HardwareComputeDriver(const FmaStream& stream) : stream_(stream) {}
  void pin(int cpu) override { pin_current_thread(cpu); }
  void call() override { stream_(); }
  double now() override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

 private:
  const FmaStream& stream_;
};

}  // namespace

ComputeBenchResult run_peak_compute(const Scenario& scenario, const ComputeBenchConfig& config,
                                    const VectorIsa& isa, const StreamCost& cost,
                                    const ComputeDriverFactory& make_driver) {
  config.validate(isa);
  if (scenario.cpu_set.empty()) throw Error("scenario has no CPUs");
  const std::size_t n = scenario.cpu_set.size();

  std::vector<std::uint64_t> calls(n, 0);
  std::vector<double> elapsed(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  std::barrier start(static_cast<std::ptrdiff_t>(n));

  auto worker = [&](std::size_t t) {
    std::unique_ptr<ComputeDriver> driver;
    try {
      driver = make_driver(static_cast<int>(t));
      driver->pin(scenario.cpu_set[t]);
    } catch (...) {
      errors[t] = std::current_exception();
    }
    start.arrive_and_wait();
    if (errors[t]) return;
    try {
      const double t0 = driver->now();
      double t1 = t0;
      std::uint64_t count = 0;
      do {
        driver->call();
        ++count;
        t1 = driver->now();
      } while (t1 - t0 < config.min_duration_seconds);
      calls[t] = count;
      elapsed[t] = t1 - t0;
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker, t);
  for (auto& th : threads) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ComputeBenchResult result;
  result.scenario = scenario;
  result.isa = isa;
  for (std::size_t t = 0; t < n; ++t) {
    if (!(elapsed[t] > 0.0)) throw Error("compute benchmark measured no elapsed time");
    const double flops = static_cast<double>(calls[t]) *
                         static_cast<double>(cost.fma_count_per_call) * cost.flops_per_fma;
    result.per_thread_gflops.push_back(flops / elapsed[t] / 1e9);
    result.total_fma_retired += calls[t] * cost.fma_count_per_call;
  }
  result.gflops =
      std::accumulate(result.per_thread_gflops.begin(), result.per_thread_gflops.end(), 0.0);
  return result;
}

ComputeBenchResult run_peak_compute(const Scenario& scenario, const ComputeBenchConfig& config,
                                    const VectorIsa& isa) {
  if (!host_supports(probe_host_features(), isa)) {
    throw Error("host cannot execute " + std::string(isa.name()) + " FMA streams");
  }
  const FmaStream stream = emit_fma_stream(isa, config);
  const StreamCost cost{stream.fma_count_per_call(), isa.flops_per_fma()};
  return run_peak_compute(scenario, config, isa, cost, [&](int) {
    return std::make_unique<HardwareComputeDriver>(stream);
  });
}

}  // namespace roofline

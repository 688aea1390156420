#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "roofline/codegen.hpp"
#include "roofline/topology.hpp"

namespace roofline {

struct ComputeBenchResult {
  Scenario scenario;
  VectorIsa isa;
  double gflops = 0.0;  // sum of per_thread_gflops
  std::vector<double> per_thread_gflops;
  std::uint64_t total_fma_retired = 0;
};

/// What one benchmark worker does on its thread. The hardware driver pins
/// and calls generated code against a steady clock; the mock driver only
/// advances a virtual clock.
class ComputeDriver {
 public:
  virtual ~ComputeDriver() = default;
  virtual void pin(int cpu) = 0;
  virtual void call() = 0;
  /// Seconds since an arbitrary origin.
  virtual double now() = 0;
};

using ComputeDriverFactory = std::function<std::unique_ptr<ComputeDriver>(int thread_index)>;

/// Per-call cost of the stream being benchmarked.
struct StreamCost {
  std::uint64_t fma_count_per_call = 0;
  int flops_per_fma = 0;
};

/// One worker per scenario CPU: pin, wait at a shared start barrier, call
/// until min_duration_seconds elapsed. Per-thread GFLOP/s comes from exact
/// call counts: calls * fma_count_per_call * flops_per_fma / elapsed.
ComputeBenchResult run_peak_compute(const Scenario& scenario, const ComputeBenchConfig& config,
                                    const VectorIsa& isa, const StreamCost& cost,
                                    const ComputeDriverFactory& make_driver);

/// Hardware path: emits the stream for `isa` and runs it on real threads.
ComputeBenchResult run_peak_compute(const Scenario& scenario, const ComputeBenchConfig& config,
                                    const VectorIsa& isa);

/// Mock driver whose virtual clock advances `seconds_per_call` per call.
class MockComputeDriver final : public ComputeDriver {
 public:
  explicit MockComputeDriver(double seconds_per_call) : seconds_per_call_(seconds_per_call) {}
  void pin(int cpu) override { affinity_.pin(cpu); }
  void call() override { ++calls_; }
  double now() override { return static_cast<double>(calls_) * seconds_per_call_; }

 private:
  MockAffinity affinity_;
  double seconds_per_call_;
  std::uint64_t calls_ = 0;
};

}  // namespace roofline

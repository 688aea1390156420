#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roofline/codegen.hpp"
#include "roofline/topology.hpp"

namespace roofline {

/// Where a kernel's execute phase may run. With more than one CPU the
/// kernel shards its work over threads pinned through `affinity`.
struct ExecContext {
  std::vector<int> cpus;
  Affinity* affinity = nullptr;
};

struct TrafficRange {
  double low = 0.0;
  double high = 0.0;
};

/// Single-precision synthetic kernel with closed-form Work and cold Traffic.
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t min_elements() const { return 1; }

  /// Allocates and fills inputs; never part of a measured region.
  virtual void init(std::size_t n, std::uint64_t seed) = 0;
  /// The measured region. Idempotent given the init state.
  virtual void execute(const ExecContext& ctx) = 0;

  /// Exact FLOPs of one execute, or nullopt when only calibration can tell.
  virtual std::optional<double> analytic_work(std::size_t n) const = 0;
  virtual TrafficRange analytic_cold_traffic(std::size_t n) const = 0;
  /// Bytes of all buffers touched by execute.
  virtual std::size_t footprint_bytes() const = 0;
  /// False when the kernel's real work is invisible to FP_ARITH counters.
  virtual bool work_counted() const { return true; }

  std::size_t elements() const { return n_; }
  /// Last result, kept observable so execute cannot be optimized away.
  double checksum() const { return checksum_; }

 protected:
  std::size_t n_ = 0;
  double checksum_ = 0.0;
};

/// Names accepted by make_kernel, in registry order.
std::vector<std::string> kernel_names();
/// Throws with the list of valid names for an unknown kernel. `isa` fixes
/// the vector width of fma_dense (default: best the host supports).
std::unique_ptr<Kernel> make_kernel(const std::string& name,
                                    std::optional<VectorIsa> isa = std::nullopt);

/// Splits [0, count) into one contiguous shard per context CPU and runs
/// fn(shard, shards, begin, end) on pinned threads (inline for one CPU).
void run_sharded(const ExecContext& ctx, std::size_t count,
                 const std::function<void(std::size_t, std::size_t, std::size_t, std::size_t)>& fn);

/// FMA count of one fma_dense execute for a requested count n: n rounded
/// up to whole 1000-instruction calls.
std::uint64_t fma_dense_count(std::size_t n);

}  // namespace roofline

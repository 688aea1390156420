#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace roofline {

enum class IsaLevel { Scalar, Sse128, Avx256, Avx512 };

/// Single-precision vector extension used by a generated stream.
struct VectorIsa {
  IsaLevel level = IsaLevel::Scalar;

  int lanes_f32() const;
  int flops_per_fma() const { return 2 * lanes_f32(); }
  /// Architectural vector registers addressable at this level.
  int register_count() const { return level == IsaLevel::Avx512 ? 32 : 16; }
  std::string_view name() const;

  friend bool operator==(const VectorIsa&, const VectorIsa&) = default;
};

/// Accepts scalar, sse, avx2, avx512 (and the long names Sse128/Avx256/Avx512).
VectorIsa parse_isa(std::string_view text);

struct HostFeatures {
  bool x86_64 = false;
  bool fma = false;
  bool avx = false;
  bool avx2 = false;
  bool avx512f = false;
};

/// Features from a /proc/cpuinfo style "flags" list (space separated).
HostFeatures features_from_flags(std::string_view flags);
HostFeatures probe_host_features();

/// Widest level usable for FMA streams on the given host.
VectorIsa detect_isa(const HostFeatures& host);
VectorIsa detect_isa();

/// Whether code for `isa` can execute on `host`.
bool host_supports(const HostFeatures& host, const VectorIsa& isa);

struct ComputeBenchConfig {
  int n_accumulators = 10;
  int unroll = 30;
  std::uint64_t inner_iterations = 100000;
  double min_duration_seconds = 2.0;

  void validate(const VectorIsa& isa) const;
};

enum class StreamOp { Fma, Add };

/// Raw bytes and register plan of a generated instruction stream.
struct AssembledStream {
  std::vector<std::uint8_t> bytes;
  VectorIsa isa;
  StreamOp op = StreamOp::Fma;
  std::vector<int> accumulators;  // destination register per slot
  int source_a = 1;               // shared sources, as in vfmadd132ps acc, a, b
  int source_b = 2;
  int unroll = 0;
  std::uint64_t inner_iterations = 0;
  std::size_t body_offset = 0;  // loop body location inside `bytes`
  std::size_t body_size = 0;

  std::uint64_t ops_per_call() const { return static_cast<std::uint64_t>(unroll) * inner_iterations; }
};

/// Register assignment: accumulator slots skip the two shared sources, so
/// six accumulators on AVX-512 give zmm0, zmm3..zmm7.
std::vector<int> accumulator_registers(int n_accumulators, int source_a, int source_b);

/// Encodes `void f()` that zeroes its registers, then runs a countable loop
/// of `inner_iterations` trips whose body holds `unroll` independent
/// vector ops cycling through the accumulators.
AssembledStream assemble_stream(const VectorIsa& isa, const ComputeBenchConfig& config,
                                StreamOp op = StreamOp::Fma);

/// Encodes `void f(void* dst, uint64_t blocks)` storing zeros with
/// non-temporal stores; one block is four vector widths (min 64 bytes).
std::vector<std::uint8_t> assemble_nt_fill(const VectorIsa& isa);
std::size_t nt_fill_block_bytes(const VectorIsa& isa);

/// Page-aligned read+execute copy of machine code.
class ExecutableCode {
 public:
  ExecutableCode() = default;
  explicit ExecutableCode(std::span<const std::uint8_t> bytes);
  ExecutableCode(ExecutableCode&& other) noexcept;
  ExecutableCode& operator=(ExecutableCode&& other) noexcept;
  ExecutableCode(const ExecutableCode&) = delete;
  ExecutableCode& operator=(const ExecutableCode&) = delete;
  ~ExecutableCode();

  template <typename Fn>
  Fn as() const {
    return reinterpret_cast<Fn>(memory_);
  }
  std::size_t size() const { return size_; }
  bool empty() const { return memory_ == nullptr; }

 private:
  void* memory_ = nullptr;
  std::size_t size_ = 0;
  std::size_t mapped_ = 0;
};

/// Executable FMA stream plus its exact operation count per call.
struct FmaStream {
  AssembledStream assembled;
  ExecutableCode code;

  std::uint64_t fma_count_per_call() const { return assembled.ops_per_call(); }
  std::uint64_t flops_per_call() const {
    return fma_count_per_call() * static_cast<std::uint64_t>(assembled.isa.flops_per_fma());
  }
  void operator()() const { code.as<void (*)()>()(); }
};

FmaStream emit_fma_stream(const VectorIsa& isa, const ComputeBenchConfig& config,
                          StreamOp op = StreamOp::Fma);

/// Register fields of one decoded VEX/EVEX register-form instruction.
struct DecodedVectorOp {
  std::uint8_t opcode = 0;
  int dest = 0;
  int src_vvvv = 0;
  int src_rm = 0;
  bool evex = false;
};

/// Decodes consecutive VEX/EVEX reg-reg instructions from `code`, stopping
/// at the first byte that does not start one.
std::vector<DecodedVectorOp> decode_vector_ops(std::span<const std::uint8_t> code);

struct HazardReport {
  std::size_t instructions = 0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Scans the emitted loop body: within any cyclic window of
/// (n_accumulators - 1) preceding instructions, no instruction may write a
/// register the current one reads. Also checks the decoded register fields
/// against the emitter's own plan.
HazardReport scan_register_hazards(const AssembledStream& stream);

}  // namespace roofline

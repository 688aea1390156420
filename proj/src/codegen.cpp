#include "roofline/codegen.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "roofline/error.hpp"

namespace roofline {

int VectorIsa::lanes_f32() const {
  switch (level) {
    case IsaLevel::Scalar: return 1;
    case IsaLevel::Sse128: return 4;
    case IsaLevel::Avx256: return 8;
    case IsaLevel::Avx512: return 16;
  }
  return 1;
}

std::string_view VectorIsa::name() const {
  switch (level) {
    case IsaLevel::Scalar: return "scalar";
    case IsaLevel::Sse128: return "sse";
    case IsaLevel::Avx256: return "avx2";
    case IsaLevel::Avx512: return "avx512";
  }
  return "scalar";
}

VectorIsa parse_isa(std::string_view text) {
  if (text == "scalar" || text == "Scalar") return {IsaLevel::Scalar};
  if (text == "sse" || text == "Sse128") return {IsaLevel::Sse128};
  if (text == "avx2" || text == "avx" || text == "Avx256") return {IsaLevel::Avx256};
  if (text == "avx512" || text == "Avx512") return {IsaLevel::Avx512};
  throw Error("unknown ISA '" + std::string(text) + "' (expected scalar, sse, avx2 or avx512)");
}

HostFeatures features_from_flags(std::string_view flags) {
  HostFeatures f;
  f.x86_64 = true;
  std::istringstream in{std::string(flags)};
  std::string flag;
  while (in >> flag) {
    if (flag == "fma") f.fma = true;
    else if (flag == "avx") f.avx = true;
    else if (flag == "avx2") f.avx2 = true;
    else if (flag == "avx512f") f.avx512f = true;
  }
  return f;
}

HostFeatures probe_host_features() {
#if defined(__x86_64__)
  HostFeatures f;
  f.x86_64 = true;
  __builtin_cpu_init();
  f.fma = __builtin_cpu_supports("fma");
  f.avx = __builtin_cpu_supports("avx");
  f.avx2 = __builtin_cpu_supports("avx2");
  f.avx512f = __builtin_cpu_supports("avx512f");
  return f;
#else
  return HostFeatures{};
#endif
}

VectorIsa detect_isa(const HostFeatures& host) {
  if (!host.x86_64) throw Error("unsupported architecture: FMA streams need an x86_64 host");
  if (host.avx512f && host.fma) return {IsaLevel::Avx512};
  if (host.avx2 && host.fma) return {IsaLevel::Avx256};
  if (host.avx && host.fma) return {IsaLevel::Sse128};
  return {IsaLevel::Scalar};
}

VectorIsa detect_isa() { return detect_isa(probe_host_features()); }

bool host_supports(const HostFeatures& host, const VectorIsa& isa) {
  if (!host.x86_64 || !host.fma || !host.avx) return false;
  switch (isa.level) {
    case IsaLevel::Scalar:
    case IsaLevel::Sse128: return true;
    case IsaLevel::Avx256: return host.avx2;
    case IsaLevel::Avx512: return host.avx512f;
  }
  return false;
}

void ComputeBenchConfig::validate(const VectorIsa& isa) const {
  if (n_accumulators < 6) {
    throw Error("n_accumulators must be >= 6 to cover FMA latency x throughput");
  }
  if (n_accumulators > isa.register_count() - 2) {
    throw Error("n_accumulators " + std::to_string(n_accumulators) + " exceeds the " +
                std::to_string(isa.register_count() - 2) + " free registers of " +
                std::string(isa.name()));
  }
  if (unroll <= 0 || unroll % n_accumulators != 0) {
    throw Error("unroll must be a positive multiple of n_accumulators");
  }
  if (inner_iterations == 0 || inner_iterations > 0xFFFFFFFFull) {
    throw Error("inner_iterations must be in [1, 2^32)");
  }
  if (!(min_duration_seconds >= 0.0)) throw Error("min_duration_seconds must be >= 0");
}

std::vector<int> accumulator_registers(int n_accumulators, int source_a, int source_b) {
  std::vector<int> regs;
  for (int r = 0; static_cast<int>(regs.size()) < n_accumulators; ++r) {
    if (r != source_a && r != source_b) regs.push_back(r);
  }
  return regs;
}

namespace {

enum class Width { X128, Y256, Z512 };

enum class Prefix : std::uint8_t { None = 0, P66 = 1, PF3 = 2, PF2 = 3 };
enum class Map : std::uint8_t { M0F = 1, M0F38 = 2 };

class Emitter {
 public:
  std::vector<std::uint8_t>& bytes() { return out_; }
  std::size_t pos() const { return out_.size(); }

  void byte(std::uint8_t b) { out_.push_back(b); }
  void bytes(std::initializer_list<std::uint8_t> bs) { out_.insert(out_.end(), bs); }
  void imm32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  // Register-direct three-operand vector instruction: op dest, vvvv, rm.
  void vec_rrr(Map map, Prefix pp, std::uint8_t opcode, Width w, int dest, int vvvv, int rm) {
    if (w == Width::Z512 || dest > 15 || vvvv > 15 || rm > 15) {
      evex(map, pp, w, dest, vvvv, rm, /*rm_is_reg=*/true);
    } else {
      vex(map, pp, w == Width::Y256, dest, vvvv, rm);
    }
    byte(opcode);
    byte(static_cast<std::uint8_t>(0xC0 | ((dest & 7) << 3) | (rm & 7)));
  }

  // Store of vector register `src` to [rdi + disp].
  void vec_store_rdi(Map map, Prefix pp, std::uint8_t opcode, Width w, int src, int disp) {
    int disp8 = disp;
    if (w == Width::Z512) {
      evex(map, pp, w, src, 0, /*rm=rdi*/ 7, /*rm_is_reg=*/false);
      disp8 = disp / 64;  // EVEX compressed displacement, N = 64
    } else {
      vex(map, pp, w == Width::Y256, src, 0, 7);
    }
    byte(opcode);
    modrm_rdi(src, disp8);
  }

  void modrm_rdi(int reg, int disp8) {
    if (disp8 == 0) {
      byte(static_cast<std::uint8_t>(((reg & 7) << 3) | 7));
    } else {
      byte(static_cast<std::uint8_t>(0x40 | ((reg & 7) << 3) | 7));
      byte(static_cast<std::uint8_t>(disp8));
    }
  }

  // Backward conditional jump (jnz) to `target`, short form when it fits.
  void jnz_back(std::size_t target) {
    const auto here = static_cast<std::int64_t>(pos());
    const auto dst = static_cast<std::int64_t>(target);
    const std::int64_t short_disp = dst - (here + 2);
    if (short_disp >= -128 && short_disp <= 127) {
      bytes({0x75, static_cast<std::uint8_t>(short_disp)});
    } else {
      bytes({0x0F, 0x85});
      imm32(static_cast<std::uint32_t>(static_cast<std::int32_t>(dst - (here + 6))));
    }
  }

 private:
  void vex(Map map, Prefix pp, bool l256, int reg, int vvvv, int rm) {
    const std::uint8_t r = (reg & 8) ? 0 : 0x80;
    const std::uint8_t b = (rm & 8) ? 0 : 0x20;
    const std::uint8_t vbits = static_cast<std::uint8_t>(((~vvvv) & 0xF) << 3);
    const std::uint8_t lbit = l256 ? 0x04 : 0x00;
    const auto ppbits = static_cast<std::uint8_t>(pp);
    if (map == Map::M0F && b != 0) {
      bytes({0xC5, static_cast<std::uint8_t>(r | vbits | lbit | ppbits)});
    } else {
      bytes({0xC4, static_cast<std::uint8_t>(r | 0x40 | b | static_cast<std::uint8_t>(map)),
             static_cast<std::uint8_t>(vbits | lbit | ppbits)});
    }
  }

  void evex(Map map, Prefix pp, Width w, int reg, int vvvv, int rm, bool rm_is_reg) {
    std::uint8_t p0 = static_cast<std::uint8_t>(map);
    if (!(reg & 8)) p0 |= 0x80;                     // R
    if (!rm_is_reg || !(rm & 16)) p0 |= 0x40;       // X (rm bit 4 for registers)
    if (!(rm & 8)) p0 |= 0x20;                      // B
    if (!(reg & 16)) p0 |= 0x10;                    // R'
    const std::uint8_t p1 = static_cast<std::uint8_t>((((~vvvv) & 0xF) << 3) | 0x04 |
                                                      static_cast<std::uint8_t>(pp));
    std::uint8_t ll = w == Width::Z512 ? 2 : (w == Width::Y256 ? 1 : 0);
    std::uint8_t p2 = static_cast<std::uint8_t>(ll << 5);
    if (!(vvvv & 16)) p2 |= 0x08;                   // V'
    bytes({0x62, p0, p1, p2});
  }

  std::vector<std::uint8_t> out_;
};

Width width_of(const VectorIsa& isa) {
  switch (isa.level) {
    case IsaLevel::Avx512: return Width::Z512;
    case IsaLevel::Avx256: return Width::Y256;
    default: return Width::X128;
  }
}

void emit_zero(Emitter& e, const VectorIsa& isa, int reg) {
  if (isa.level == IsaLevel::Avx512) {
    e.vec_rrr(Map::M0F, Prefix::P66, 0xEF, Width::Z512, reg, reg, reg);  // vpxord
  } else {
    e.vec_rrr(Map::M0F, Prefix::None, 0x57, width_of(isa), reg, reg, reg);  // vxorps
  }
}

void emit_op(Emitter& e, const VectorIsa& isa, StreamOp op, int acc, int a, int b) {
  const bool scalar = isa.level == IsaLevel::Scalar;
  const Width w = width_of(isa);
  if (op == StreamOp::Fma) {
    // vfmadd132ps/ss acc, a, b : acc = acc * b + a
    e.vec_rrr(Map::M0F38, Prefix::P66, scalar ? 0x99 : 0x98, w, acc, a, b);
  } else {
    // vaddps/ss acc, acc, b
    e.vec_rrr(Map::M0F, scalar ? Prefix::PF3 : Prefix::None, 0x58, w, acc, acc, b);
  }
}

std::size_t vector_bytes(const VectorIsa& isa) {
  switch (isa.level) {
    case IsaLevel::Avx512: return 64;
    case IsaLevel::Avx256: return 32;
    default: return 16;
  }
}

}  // namespace

AssembledStream assemble_stream(const VectorIsa& isa, const ComputeBenchConfig& config,
                                StreamOp op) {
  config.validate(isa);
  AssembledStream s;
  s.isa = isa;
  s.op = op;
  s.unroll = config.unroll;
  s.inner_iterations = config.inner_iterations;
  s.accumulators = accumulator_registers(config.n_accumulators, s.source_a, s.source_b);

  Emitter e;
  emit_zero(e, isa, s.source_a);
  emit_zero(e, isa, s.source_b);
  for (int reg : s.accumulators) emit_zero(e, isa, reg);

  e.byte(0xB9);  // mov ecx, imm32
  e.imm32(static_cast<std::uint32_t>(config.inner_iterations));

  s.body_offset = e.pos();
  for (int i = 0; i < config.unroll; ++i) {
    const int acc = s.accumulators[static_cast<std::size_t>(i % config.n_accumulators)];
    emit_op(e, isa, op, acc, s.source_a, s.source_b);
  }
  s.body_size = e.pos() - s.body_offset;
  e.bytes({0xFF, 0xC9});  // dec ecx
  e.jnz_back(s.body_offset);
  e.bytes({0xC5, 0xF8, 0x77});  // vzeroupper
  e.byte(0xC3);                 // ret
  s.bytes = std::move(e.bytes());
  return s;
}

std::size_t nt_fill_block_bytes(const VectorIsa& isa) { return 4 * vector_bytes(isa); }

std::vector<std::uint8_t> assemble_nt_fill(const VectorIsa& isa) {
  Emitter e;
  const std::size_t vbytes = vector_bytes(isa);
  const bool legacy_sse = isa.level == IsaLevel::Scalar || isa.level == IsaLevel::Sse128;

  if (legacy_sse) {
    e.bytes({0x0F, 0x57, 0xC0});  // xorps xmm0, xmm0
  } else {
    emit_zero(e, isa, 0);
  }
  e.bytes({0x48, 0x85, 0xF6});  // test rsi, rsi
  e.bytes({0x74, 0x00});        // jz done (patched below)
  const std::size_t jz_at = e.pos() - 1;

  const std::size_t loop = e.pos();
  for (int k = 0; k < 4; ++k) {
    const int disp = static_cast<int>(k * vbytes);
    if (legacy_sse) {
      e.bytes({0x0F, 0x2B});  // movntps [rdi+disp], xmm0
      e.modrm_rdi(0, disp);
    } else {
      e.vec_store_rdi(Map::M0F, Prefix::None, 0x2B, width_of(isa), 0, disp);  // vmovntps
    }
  }
  const std::size_t step = 4 * vbytes;
  if (step <= 127) {
    e.bytes({0x48, 0x83, 0xC7, static_cast<std::uint8_t>(step)});  // add rdi, imm8
  } else {
    e.bytes({0x48, 0x81, 0xC7});  // add rdi, imm32
    e.imm32(static_cast<std::uint32_t>(step));
  }
  e.bytes({0x48, 0xFF, 0xCE});  // dec rsi
  e.jnz_back(loop);

  const std::size_t done = e.pos();
  e.bytes()[jz_at] = static_cast<std::uint8_t>(done - (jz_at + 1));
  e.bytes({0x0F, 0xAE, 0xF8});  // sfence
  if (!legacy_sse) e.bytes({0xC5, 0xF8, 0x77});  // vzeroupper
  e.byte(0xC3);
  return std::move(e.bytes());
}

ExecutableCode::ExecutableCode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error("refusing to map empty code");
  const auto page = static_cast<std::size_t>(sysconf(_SC_PAGESIZE));
  mapped_ = (bytes.size() + page - 1) / page * page;
  void* p = mmap(nullptr, mapped_, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
  if (p == MAP_FAILED) {
    throw Error(std::string("cannot map memory for generated code: ") + std::strerror(errno));
  }
  std::memcpy(p, bytes.data(), bytes.size());
  if (mprotect(p, mapped_, PROT_READ | PROT_EXEC) != 0) {
    const int err = errno;
    munmap(p, mapped_);
    throw Error(std::string("executable memory denied (") + std::strerror(err) +
                "); allow execmem for this process, e.g. relax SELinux deny_execmem or "
                "seccomp/PaX MPROTECT policies");
  }
  memory_ = p;
  size_ = bytes.size();
}

ExecutableCode::ExecutableCode(ExecutableCode&& other) noexcept
    : memory_(std::exchange(other.memory_, nullptr)),
      size_(std::exchange(other.size_, 0)),
      mapped_(std::exchange(other.mapped_, 0)) {}

ExecutableCode& ExecutableCode::operator=(ExecutableCode&& other) noexcept {
  if (this != &other) {
    if (memory_ != nullptr) munmap(memory_, mapped_);
    memory_ = std::exchange(other.memory_, nullptr);
    size_ = std::exchange(other.size_, 0);
    mapped_ = std::exchange(other.mapped_, 0);
  }
  return *this;
}

ExecutableCode::~ExecutableCode() {
  if (memory_ != nullptr) munmap(memory_, mapped_);
}

FmaStream emit_fma_stream(const VectorIsa& isa, const ComputeBenchConfig& config, StreamOp op) {
  FmaStream stream;
  stream.assembled = assemble_stream(isa, config, op);
  stream.code = ExecutableCode(stream.assembled.bytes);
  return stream;
}

std::vector<DecodedVectorOp> decode_vector_ops(std::span<const std::uint8_t> code) {
  std::vector<DecodedVectorOp> ops;
  std::size_t i = 0;
  while (i < code.size()) {
    DecodedVectorOp op;
    int reg_hi = 0, rm_hi = 0, vvvv = 0;
    std::size_t at = i;
    const std::uint8_t lead = code[at];
    if (lead == 0x62 && at + 6 <= code.size()) {
      const std::uint8_t p0 = code[at + 1], p1 = code[at + 2], p2 = code[at + 3];
      reg_hi = ((p0 & 0x80) ? 0 : 8) | ((p0 & 0x10) ? 0 : 16);
      rm_hi = ((p0 & 0x20) ? 0 : 8) | ((p0 & 0x40) ? 0 : 16);
      vvvv = ((~p1 >> 3) & 0xF) | ((p2 & 0x08) ? 0 : 16);
      op.evex = true;
      at += 4;
    } else if (lead == 0xC4 && at + 5 <= code.size()) {
      const std::uint8_t b1 = code[at + 1], b2 = code[at + 2];
      reg_hi = (b1 & 0x80) ? 0 : 8;
      rm_hi = (b1 & 0x20) ? 0 : 8;
      vvvv = (~b2 >> 3) & 0xF;
      at += 3;
    } else if (lead == 0xC5 && at + 4 <= code.size()) {
      const std::uint8_t b1 = code[at + 1];
      reg_hi = (b1 & 0x80) ? 0 : 8;
      vvvv = (~b1 >> 3) & 0xF;
      at += 2;
    } else {
      break;
    }
    op.opcode = code[at];
    const std::uint8_t modrm = code[at + 1];
    if ((modrm & 0xC0) != 0xC0) break;  // only register forms are part of streams
    op.dest = reg_hi | ((modrm >> 3) & 7);
    op.src_rm = rm_hi | (modrm & 7);
    op.src_vvvv = vvvv;
    ops.push_back(op);
    i = at + 2;
  }
  return ops;
}

HazardReport scan_register_hazards(const AssembledStream& stream) {
  HazardReport report;
  const auto body = std::span<const std::uint8_t>(stream.bytes).subspan(stream.body_offset,
                                                                         stream.body_size);
  const auto ops = decode_vector_ops(body);
  report.instructions = ops.size();
  if (ops.size() != static_cast<std::size_t>(stream.unroll)) {
    report.violations.push_back("decoded " + std::to_string(ops.size()) +
                                " instructions, emitter planned " + std::to_string(stream.unroll));
    return report;
  }
  const std::size_t n_acc = stream.accumulators.size();
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    const int planned = stream.accumulators[i % n_acc];
    const int expect_vvvv = stream.op == StreamOp::Fma ? stream.source_a : planned;
    if (op.dest != planned || op.src_vvvv != expect_vvvv || op.src_rm != stream.source_b) {
      report.violations.push_back("instruction " + std::to_string(i) +
                                  " register fields differ from the emitter plan");
    }
  }
  // Cyclic window: the body is a loop, so the tail precedes the head.
  const std::size_t window = n_acc - 1;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const int reads[] = {ops[i].dest, ops[i].src_vvvv, ops[i].src_rm};
    for (std::size_t back = 1; back <= window && back < ops.size(); ++back) {
      const auto& prev = ops[(i + ops.size() - back) % ops.size()];
      if (std::find(std::begin(reads), std::end(reads), prev.dest) != std::end(reads)) {
        report.violations.push_back("instruction " + std::to_string(i) + " reads register " +
                                    std::to_string(prev.dest) + " written " +
                                    std::to_string(back) + " instructions earlier");
      }
    }
  }
  return report;
}

}  // namespace roofline

#include "roofline/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <random>
#include <thread>

#include "roofline/codegen.hpp"
#include "roofline/error.hpp"

namespace roofline {

namespace {

volatile float g_sink = 0.0f;

std::vector<float> random_floats(std::size_t n, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Scalar adds only: without reassociation the compiler keeps the chain.
float sum_scalar(const float* a, std::size_t n) {
  float s = a[0];
  for (std::size_t i = 1; i < n; ++i) s += a[i];
  return s;
}

typedef float v8sf __attribute__((vector_size(32)));

// 8-lane partial sums: the first chunk seeds the accumulator, so an
// n-element shard costs exactly n - 1 FLOPs like the scalar form.
float sum_vector(const float* a, std::size_t n) {
  const std::size_t chunks = n / 8;
  float s;
  std::size_t i = 0;
  if (chunks > 0) {
    v8sf acc;
    std::memcpy(&acc, a, sizeof(acc));
    for (std::size_t c = 1; c < chunks; ++c) {
      v8sf x;
      std::memcpy(&x, a + 8 * c, sizeof(x));
      acc += x;
    }
    s = acc[0];
    for (int l = 1; l < 8; ++l) s += acc[l];
    i = chunks * 8;
  } else {
    s = a[0];
    i = 1;
  }
  for (; i < n; ++i) s += a[i];
  return s;
}

// Order-preserving integer key of an IEEE float; max without FP ops.
std::int32_t order_key(float x) {
  std::int32_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  return bits ^ ((bits >> 31) & 0x7FFFFFFF);
}

class SumReduction final : public Kernel {
 public:
  explicit SumReduction(bool vectorized) : vectorized_(vectorized) {}
  std::string name() const override { return vectorized_ ? "sum_reduction_vec" : "sum_reduction"; }
  std::size_t min_elements() const override { return 2; }

  void init(std::size_t n, std::uint64_t seed) override {
    if (n < 2) throw Error(name() + " needs n >= 2");
    n_ = n;
    data_ = random_floats(n, seed, 0.0f, 1.0f);
  }

  void execute(const ExecContext& ctx) override {
    std::vector<float> partial(std::max<std::size_t>(1, ctx.cpus.size()), 0.0f);
    run_sharded(ctx, n_, [&](std::size_t shard, std::size_t, std::size_t b, std::size_t e) {
      partial[shard] = vectorized_ ? sum_vector(data_.data() + b, e - b)
                                   : sum_scalar(data_.data() + b, e - b);
    });
    float s = partial[0];
    for (std::size_t i = 1; i < partial.size(); ++i) s += partial[i];
    g_sink = s;
    checksum_ = s;
  }

  // Sharding keeps the count: sum over shards of (m_i - 1) plus k - 1 combines.
  std::optional<double> analytic_work(std::size_t n) const override {
    return static_cast<double>(n) - 1.0;
  }
  TrafficRange analytic_cold_traffic(std::size_t n) const override {
    return {4.0 * static_cast<double>(n), 4.0 * static_cast<double>(n)};
  }
  std::size_t footprint_bytes() const override { return data_.size() * sizeof(float); }

 private:
  bool vectorized_;
  std::vector<float> data_;
};

class Triad final : public Kernel {
 public:
  std::string name() const override { return "triad"; }

  void init(std::size_t n, std::uint64_t seed) override {
    if (n < 1) throw Error("triad needs n >= 1");
    n_ = n;
    a_.assign(n, 0.0f);
    b_ = random_floats(n, seed, -1.0f, 1.0f);
    c_ = random_floats(n, seed + 1, -1.0f, 1.0f);
  }

  void execute(const ExecContext& ctx) override {
    const float s = scalar_;
    run_sharded(ctx, n_, [&](std::size_t, std::size_t, std::size_t b, std::size_t e) {
      float* a = a_.data();
      const float* x = b_.data();
      const float* y = c_.data();
      for (std::size_t i = b; i < e; ++i) a[i] = x[i] + s * y[i];
    });
    g_sink = a_[n_ / 2];
    checksum_ = a_[n_ / 2];
  }

  std::optional<double> analytic_work(std::size_t n) const override {
    return 2.0 * static_cast<double>(n);
  }
  // 12n without write-allocate, 16n when the stores read their lines first.
  TrafficRange analytic_cold_traffic(std::size_t n) const override {
    return {12.0 * static_cast<double>(n), 16.0 * static_cast<double>(n)};
  }
  std::size_t footprint_bytes() const override { return 3 * n_ * sizeof(float); }

 private:
  float scalar_ = 3.0f;
  std::vector<float> a_, b_, c_;
};

class MaxReduction final : public Kernel {
 public:
  std::string name() const override { return "max_reduction"; }
  std::size_t min_elements() const override { return 2; }

  void init(std::size_t n, std::uint64_t seed) override {
    if (n < 2) throw Error("max_reduction needs n >= 2");
    n_ = n;
    data_ = random_floats(n, seed, -1.0f, 1.0f);
  }

  void execute(const ExecContext& ctx) override {
    std::vector<std::size_t> best(std::max<std::size_t>(1, ctx.cpus.size()), 0);
    run_sharded(ctx, n_, [&](std::size_t shard, std::size_t, std::size_t b, std::size_t e) {
      std::size_t arg = b;
      std::int32_t key = order_key(data_[b]);
      for (std::size_t i = b + 1; i < e; ++i) {
        const std::int32_t k = order_key(data_[i]);
        if (k > key) {
          key = k;
          arg = i;
        }
      }
      best[shard] = arg;
    });
    std::size_t arg = best[0];
    for (std::size_t i = 1; i < best.size(); ++i) {
      if (order_key(data_[best[i]]) > order_key(data_[arg])) arg = best[i];
    }
    g_sink = data_[arg];
    checksum_ = data_[arg];
  }

  // n - 1 comparisons, none of which the FP_ARITH events see.
  std::optional<double> analytic_work(std::size_t n) const override {
    return static_cast<double>(n) - 1.0;
  }
  TrafficRange analytic_cold_traffic(std::size_t n) const override {
    return {4.0 * static_cast<double>(n), 4.0 * static_cast<double>(n)};
  }
  std::size_t footprint_bytes() const override { return data_.size() * sizeof(float); }
  bool work_counted() const override { return false; }

 private:
  std::vector<float> data_;
};

class GeluElementwise final : public Kernel {
 public:
  std::string name() const override { return "gelu_elementwise"; }

  void init(std::size_t n, std::uint64_t seed) override {
    if (n < 1) throw Error("gelu_elementwise needs n >= 1");
    n_ = n;
    in_ = random_floats(n, seed, -4.0f, 4.0f);
    out_.assign(n, 0.0f);
  }

  void execute(const ExecContext& ctx) override {
    run_sharded(ctx, n_, [&](std::size_t, std::size_t, std::size_t b, std::size_t e) {
      const float k = 0.7978845608f;  // sqrt(2 / pi)
      for (std::size_t i = b; i < e; ++i) {
        const float x = in_[i];
        out_[i] = 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
      }
    });
    g_sink = out_[n_ / 2];
    checksum_ = out_[n_ / 2];
  }

  // Depends on the libm tanh expansion; calibrated from counters instead.
  std::optional<double> analytic_work(std::size_t) const override { return std::nullopt; }
  TrafficRange analytic_cold_traffic(std::size_t n) const override {
    return {8.0 * static_cast<double>(n), 8.0 * static_cast<double>(n)};
  }
  std::size_t footprint_bytes() const override { return 2 * n_ * sizeof(float); }

 private:
  std::vector<float> in_, out_;
};

constexpr int kFmaDenseUnroll = 40;
constexpr int kFmaDenseTripsPerCall = 25;
constexpr std::uint64_t kFmaDensePerCall = kFmaDenseUnroll * kFmaDenseTripsPerCall;

class FmaDense final : public Kernel {
 public:
  explicit FmaDense(VectorIsa isa) : isa_(isa) {}
  std::string name() const override { return "fma_dense"; }

  void init(std::size_t n, std::uint64_t) override {
    if (n < 1) throw Error("fma_dense needs n >= 1");
    n_ = n;
    ComputeBenchConfig cfg;
    cfg.n_accumulators = 10;
    cfg.unroll = kFmaDenseUnroll;
    cfg.inner_iterations = kFmaDenseTripsPerCall;
    stream_ = std::make_unique<FmaStream>(emit_fma_stream(isa_, cfg));
    if (stream_->code.size() > 4096) throw Error("fma_dense footprint exceeds 4 KiB");
  }

  void execute(const ExecContext& ctx) override {
    if (!host_supports(probe_host_features(), isa_)) {
      throw Error("fma_dense: host cannot execute " + std::string(isa_.name()) + " FMA");
    }
    const std::uint64_t calls = fma_dense_count(n_) / kFmaDensePerCall;
    run_sharded(ctx, calls, [&](std::size_t, std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t c = b; c < e; ++c) (*stream_)();
    });
    checksum_ = static_cast<double>(calls);
  }

  std::optional<double> analytic_work(std::size_t n) const override {
    return static_cast<double>(fma_dense_count(n)) * isa_.flops_per_fma();
  }
  TrafficRange analytic_cold_traffic(std::size_t) const override { return {0.0, 4096.0}; }
  std::size_t footprint_bytes() const override { return stream_ ? stream_->code.size() : 0; }

 private:
  VectorIsa isa_;
  std::unique_ptr<FmaStream> stream_;
};

}  // namespace

std::uint64_t fma_dense_count(std::size_t n) {
  return (static_cast<std::uint64_t>(n) + kFmaDensePerCall - 1) / kFmaDensePerCall *
         kFmaDensePerCall;
}

std::vector<std::string> kernel_names() {
  return {"sum_reduction", "sum_reduction_vec", "triad", "fma_dense", "max_reduction",
          "gelu_elementwise"};
}

std::unique_ptr<Kernel> make_kernel(const std::string& name, std::optional<VectorIsa> isa) {
  if (name == "sum_reduction") return std::make_unique<SumReduction>(false);
  if (name == "sum_reduction_vec") return std::make_unique<SumReduction>(true);
  if (name == "triad") return std::make_unique<Triad>();
  if (name == "fma_dense") return std::make_unique<FmaDense>(isa ? *isa : detect_isa());
  if (name == "max_reduction") return std::make_unique<MaxReduction>();
  if (name == "gelu_elementwise") return std::make_unique<GeluElementwise>();
  std::string valid;
  for (const auto& n : kernel_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error("unknown kernel '" + name + "'; valid kernels: " + valid);
}

void run_sharded(const ExecContext& ctx, std::size_t count,
                 const std::function<void(std::size_t, std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t shards = std::max<std::size_t>(1, ctx.cpus.size());
  if (shards == 1) {
    fn(0, 1, 0, count);
    return;
  }
  std::vector<std::exception_ptr> errors(shards);
  std::vector<std::thread> threads;
  threads.reserve(shards);
  for (std::size_t s = 0; s < shards; ++s) {
    threads.emplace_back([&, s] {
      try {
        if (ctx.affinity != nullptr) ctx.affinity->pin(ctx.cpus[s]);
        fn(s, shards, count * s / shards, count * (s + 1) / shards);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace roofline

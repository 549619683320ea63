#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mnnh2 {

/// Base class for all library errors.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape/precondition violations (bad extents, mismatched geometry).
struct shape_error : error {
  using error::error;
};

/// Numerical failures (non-convergence, singular systems, NaN loss).
struct numeric_error : error {
  using error::error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw shape_error(msg);
}

// ---------------------------------------------------------------------------
// Seeded splittable RNG. splitmix64 state machine with Box-Muller normals,
// so streams derived from (seed, stream_id) are independent and every draw
// is reproducible across platforms and thread counts.
// ---------------------------------------------------------------------------
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}
  RngStream(std::uint64_t seed, std::uint64_t stream) {
    RngStream mix(seed ^ 0x9e3779b97f4a7c15ull);
    mix.next_u64();
    state_ = mix.next_u64() ^ (stream * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
    next_u64();
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Static-partition parallel for. Work items [0, n) are split into contiguous
// chunks; caller-side reductions over chunk results stay deterministic for a
// fixed thread count (and per-item buffers make them thread-count invariant).
// ---------------------------------------------------------------------------
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

inline void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int t_use = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(t_use);
  std::exception_ptr first_error;
  std::vector<std::exception_ptr> errors(t_use);
  for (int t = 0; t < t_use; ++t) {
    const std::int64_t lo = n * t / t_use;
    const std::int64_t hi = n * (t + 1) / t_use;
    pool.emplace_back([&, lo, hi, t] {
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Fixed little-endian scalar packing for the on-disk formats.
// ---------------------------------------------------------------------------
inline void store_le_u32(std::uint32_t v, unsigned char* p) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}
inline void store_le_u64(std::uint64_t v, unsigned char* p) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}
inline std::uint32_t load_le_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
inline std::uint64_t load_le_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}
inline void store_le_f64(double v, unsigned char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  store_le_u64(bits, p);
}
inline double load_le_f64(const unsigned char* p) {
  const std::uint64_t bits = load_le_u64(p);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}
inline void store_le_f32(float v, unsigned char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  store_le_u32(bits, p);
}
inline float load_le_f32(const unsigned char* p) {
  const std::uint32_t bits = load_le_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace mnnh2

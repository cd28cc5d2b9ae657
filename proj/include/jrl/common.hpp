// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#ifndef JRL_COMMON_HPP_
#define JRL_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace jrl {

// 64-bit FNV-1a, used for stream-seed derivation and file digests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random stream. All randomness in the project flows through
// named streams derived from one global seed: stream(seed, "init/reader")
// and so on, so a single integer reproduces a whole run.
class Rng {
 public:
  Rng() : eng_(0) {}
  explicit Rng(uint64_t seed) : eng_(seed) {}

  static Rng stream(uint64_t global_seed, std::string_view tag) {
    return Rng(splitmix64(global_seed ^ fnv1a64(tag)));
  }

  uint64_t next_u64() { return eng_(); }

  // Canonical double in [0,1), 53 mantissa bits. Hand-rolled rather than
  // std::uniform_real_distribution so the byte stream is pinned by us.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    // Modulo is fine here: n is tiny compared to 2^64 everywhere we use it.
    return eng_() % n;
  }

  // Standard normal via Box-Muller (cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int sp = 0;
    is >> eng_ >> sp >> spare_;
    has_spare_ = sp != 0;
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Internal parallelism cap. Reads JRL_THREADS once (default 1); tests and
// callers may override programmatically before first use.
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [0,n) partitioned statically across workers. Output
// must be written to disjoint locations per index; the partition depends only
// on n and the worker count never changes results (disjoint writes, fixed
// per-index evaluation order).
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace jrl

#endif  // JRL_COMMON_HPP_

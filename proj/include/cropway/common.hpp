#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cropway {

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/geometry dimension mismatch. Message names the offending dims.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File I/O and serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// ----------------------------------------------------------------------------
// Geometry
// ----------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// ----------------------------------------------------------------------------
// Deterministic randomness
//
// All sampling goes through Rng, which wraps the (bit-exact, standardized)
// mt19937_64 core and hand-rolled distributions. Standard-library
// distributions are implementation-defined and would break byte-identical
// artifacts across toolchains.
// ----------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // xorshift-multiply (splitmix64) — small, fast, well distributed.
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [a, b] inclusive.
  int uniform_int(int a, int b) {
    return a + int(next_u64() % std::uint64_t(b - a + 1));
  }

  /// Standard normal via Box-Muller (one fresh pair per call, second
  /// value discarded so the stream layout stays obvious).
  double gaussian(double mean = 0.0, double sigma = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + sigma * z;
  }

  /// Poisson count, Knuth's method. Adequate for the small rates used here.
  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  /// Derive an independent child seed from (master, stream index).
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    Rng r(master ^ (0x517cc1b727220a95ULL * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

// ----------------------------------------------------------------------------
// Worker pool
// ----------------------------------------------------------------------------

/// Worker count: CW_THREADS if set, otherwise hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n). Static block partition across workers;
/// each index is processed by exactly one thread, so writes to
/// per-index slots are race-free and results do not depend on timing.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace cropway

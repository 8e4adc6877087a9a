#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace baforge {

// All randomness in the toolkit flows from a master seed through named
// substreams so that independent jobs (ensemble members, evaluation trials,
// parallel attack instances) draw from independent, reproducible streams.
uint64_t derive_seed(uint64_t master, std::string_view stream_name);
uint64_t derive_seed(uint64_t master, std::string_view stream_name, uint64_t index);
uint64_t derive_seed(uint64_t master, std::string_view stream_name, uint64_t a, uint64_t b);

// mt19937_64 with hand-rolled distributions. The std <random> distributions
// are implementation-defined, so we generate uniforms and Box-Muller normals
// ourselves to keep every stream reproducible for a given build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi); returns lo exactly when lo == hi.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  // Box-Muller; always consumes exactly two uniforms.
  double gaussian(double mu, double sigma);

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace baforge

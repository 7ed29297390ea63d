#pragma once

#include <cstdint>
#include <string_view>

namespace ddpolab {

// splitmix64 finalizer (Steele/Lea/Flood). This is the documented 64-bit
// mixing function used everywhere seeds are derived: per-sample seeds are
// base_seed ^ splitmix64(index), per-stage streams hash the stage tag first.
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t fnv1a64(std::string_view s);

// seed for a named stream, e.g. stage_seed(seed, "data")
std::uint64_t stage_seed(std::uint64_t seed, std::string_view tag);

std::uint64_t sample_seed(std::uint64_t base_seed, std::uint64_t index);

// xoshiro256** with splitmix64 seeding. Self-contained so streams are
// bit-reproducible across standard libraries; std::normal_distribution is
// not pinned by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // inclusive bounds, lo <= hi
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // standard normal via Box-Muller, one cached value
  double normal();

 private:
  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ddpolab

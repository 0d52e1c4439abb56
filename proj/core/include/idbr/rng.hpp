#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace idbr {

// All randomness in the project flows through Rng instances seeded from an
// explicit base seed plus a purpose path (e.g. {"shuffle", task, epoch}).
// Streams for different purposes never share state, so adding or removing a
// consumer of one stream cannot shift any other stream.

uint64_t mix64(uint64_t x);  // splitmix64 finalizer
uint64_t fnv1a64(std::string_view data);

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path);
uint64_t derive_seed(uint64_t base, std::string_view tag);
uint64_t derive_seed(uint64_t base, std::string_view tag,
                     std::initializer_list<uint64_t> path);

/// mt19937_64 with hand-rolled bounded draws. std::uniform_int_distribution
/// is not specified bit-exactly across standard libraries; these are.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform in [0, n), unbiased (rejection sampling). n must be > 0.
  size_t uniform_index(size_t n);

  /// Fisher-Yates permutation of [0, n).
  std::vector<size_t> permutation(size_t n);

  /// k distinct indices from [0, n), in draw order. Requires k <= n.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace idbr

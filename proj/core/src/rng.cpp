#include "idbr/rng.hpp"

#include <limits>
#include <numeric>
#include <stdexcept>

namespace idbr {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t h = mix64(base);
  for (uint64_t p : path) h = mix64(h ^ mix64(p));
  return h;
}

uint64_t derive_seed(uint64_t base, std::string_view tag) {
  return derive_seed(base, {fnv1a64(tag)});
}

uint64_t derive_seed(uint64_t base, std::string_view tag,
                     std::initializer_list<uint64_t> path) {
  uint64_t h = derive_seed(base, tag);
  for (uint64_t p : path) h = mix64(h ^ mix64(p));
  return h;
}

size_t Rng::uniform_index(size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be > 0");
  const uint64_t range = n;
  const uint64_t limit = std::numeric_limits<uint64_t>::max() -
                         std::numeric_limits<uint64_t>::max() % range;
  uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<size_t>(x % range);
}

std::vector<size_t> Rng::permutation(size_t n) {
  std::vector<size_t> p(n);
  std::iota(p.begin(), p.end(), size_t{0});
  for (size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[uniform_index(i)]);
  }
  return p;
}

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
  if (k > n) {
    throw std::invalid_argument(
        "Rng::sample_without_replacement: k exceeds population size");
  }
  // Partial Fisher-Yates over an index pool.
  std::vector<size_t> pool(n);
  std::iota(pool.begin(), pool.end(), size_t{0});
  std::vector<size_t> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + uniform_index(n - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace idbr

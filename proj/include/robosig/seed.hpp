#pragma once

#include <cstdint>
#include <string_view>

namespace robosig {

// splitmix64 finalizer
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed for a named component from the root
/// seed, so every stochastic stage can be re-run in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::string_view component) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : component) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix_seed(root ^ mix_seed(h));
}

constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::uint64_t index) noexcept {
  return mix_seed(root ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

}  // namespace robosig

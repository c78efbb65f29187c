#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace uniasr {

/// SplitMix64 finalizer. Used to derive independent seeds from a root seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed for a named component below `root`, e.g. derive_seed(root, "corpus").
/// Every random stream in the project is obtained this way.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component) {
  return mix64(root ^ fnv1a64(component));
}

/// Seed for the `index`-th item of a component stream (utterance, step, trial).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(mix64(root) ^ mix64(index + 0x5851F42D4C957F2DULL));
}

using Rng = std::mt19937_64;

}  // namespace uniasr

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace betrans {

// Simulation-side scalar (environment, human model, metrics). Learned
// networks are templated separately, see nn/autodiff.hpp.
using Real = double;

using Rng = std::mt19937_64;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Derives an independent stream from a base seed; used to keep e.g.
// evaluation rolls from perturbing the training stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t x = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

}  // namespace betrans

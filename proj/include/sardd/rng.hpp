#pragma once

#include <cstdint>
#include <random>

namespace sardd {

// Mixes a parent seed with a stream index into an independent 64-bit seed
// (SplitMix64 finalizer). Used for per-patch and per-chain sub-streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Random stream with platform-independent variates. std::mt19937_64 is fully
// specified by the standard; the distributions in <random> are not, so the
// uniform/normal/gamma transforms are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on the open interval (0, 1).
  double uniform_open();
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal (128-layer ziggurat).
  double normal();
  // Gamma(shape, rate=1) by the Marsaglia-Tsang squeeze method; shape >= 1.
  double gamma(double shape);

 private:
  std::mt19937_64 engine_;
};

}  // namespace sardd

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace masgrad {

// SplitMix64 finalizer; used to derive independent stream keys from
// (seed, tag...) tuples so that chain c always sees the same bits no matter
// how many workers run the ensemble.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ a);
  k = splitmix64(k ^ b);
  return splitmix64(k ^ c);
}

// Stream tags keep substreams disjoint; values are arbitrary but frozen.
namespace stream {
constexpr std::uint64_t pool = 0xA11CE5ULL;
constexpr std::uint64_t init = 0x1A171ULL;
constexpr std::uint64_t minibatch = 0xB00B5EEDULL;
constexpr std::uint64_t noise = 0x905EULL;
constexpr std::uint64_t truth = 0x7247ULL;
}  // namespace stream

// One substream: a fully specified engine plus explicit float/Gaussian
// conversions.  std::normal_distribution is implementation-defined, so the
// Gaussian here is a plain Box-Muller on 53-bit uniforms; output is then a
// pure function of the key on any conforming standard library.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : engine_(key) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n).  Modulo bias is below 1e-15 for n < 2^48 and is
  // accepted in exchange for a fixed draw count per call.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1]; keeps log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Knuth's product-of-uniforms sampler; O(lambda) but deterministic, unlike
  // std::poisson_distribution.
  std::uint64_t poisson(double lambda) {
    const double limit = std::exp(-lambda);
    double prod = 1.0;
    std::uint64_t k = 0;
    do {
      prod *= uniform01();
      ++k;
    } while (prod > limit);
    return k - 1;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Per-chain RNG: minibatch indices and Gaussian noise consume from disjoint
// substreams, both derived from (seed, chain).
class ChainRng {
 public:
  ChainRng(std::uint64_t seed, std::uint64_t chain)
      : indices_(derive_key(seed, stream::minibatch, chain)),
        noise_(derive_key(seed, stream::noise, chain)) {}

  Stream& indices() { return indices_; }
  Stream& noise() { return noise_; }

 private:
  Stream indices_;
  Stream noise_;
};

}  // namespace masgrad

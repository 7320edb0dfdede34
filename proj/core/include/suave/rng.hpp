#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace suave {

// Labels for independent random streams derived from one run seed. Mixing a
// stream tag plus counters (epoch, step, sample index) into the seed makes
// every draw a pure function of those coordinates, which is what lets
// checkpoint resume replay the exact byte sequence without serializing
// engine state.
enum class RngStream : std::uint64_t {
  init = 1,
  shuffle_unlabeled = 2,
  shuffle_labeled = 3,
  augment = 4,
  mix = 5,
  dataset = 6,
  prototype_reinit = 7,
  labeled_cycle = 8,
};

// mt19937_64 engine with hand-rolled distributions. The std:: distribution
// templates are implementation-defined, so uniform/normal/beta are written
// out here to keep the byte stream identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // splitmix64-chains the parts into a single well-mixed seed.
  static std::uint64_t mix(std::initializer_list<std::uint64_t> parts);

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n); n must be > 0.
  std::size_t index(std::size_t n);

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal();

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Beta(alpha, alpha) via two Marsaglia-Tsang gamma draws.
  double beta_symmetric(double alpha);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // 0, 1, ..., n-1 shuffled.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  double gamma(double alpha);

  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace suave

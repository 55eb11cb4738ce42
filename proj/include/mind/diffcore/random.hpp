#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mind {

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// Seeded random stream. Independent components draw from named substreams
// so that e.g. restarts stay reproducible regardless of how many data draws
// happened before them.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng substream(std::string_view name) const;
  Rng substream(std::uint64_t index) const;

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p);
  std::size_t index(std::size_t n);       // uniform in [0, n)

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mind

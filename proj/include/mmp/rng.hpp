#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mmp {

/// Counter-based generator: the i-th draw is a pure function of (key, i).
///
/// Every consumer asks for its own named stream via Rng::stream(seed,
/// purpose), so sampling, masking and dropout never perturb one another and
/// tests may consume streams in any order. The distributions below are
/// implemented here rather than through <random> so that sequences are
/// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed)), counter_(0) {}

  /// Stream keyed by hash(purpose) combined with the master seed.
  static Rng stream(std::uint64_t seed, std::string_view purpose);

  /// Child stream derived from this stream's key; does not advance *this.
  Rng fork(std::string_view purpose) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t hash(std::string_view text);

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int)
      : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace mmp

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>

namespace bertplm {

/// Counter-based splittable generator.
///
/// Output n of a stream is mix(key, n); split() derives an independent child
/// key, so every consumer (utterance, epoch, layer) gets its own stream from
/// the single run seed and results never depend on consumption order.
/// Satisfies UniformRandomBitGenerator for use with <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  Rng split(std::uint64_t tag) const;
  Rng split(std::string_view tag) const;
  Rng split(std::string_view tag, std::uint64_t index) const { return split(tag).split(index); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace bertplm

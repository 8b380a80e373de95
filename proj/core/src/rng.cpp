#include "bertplm/rng.hpp"

#include <random>
#include <stdexcept>

namespace bertplm {

std::uint64_t Rng::mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::split(std::uint64_t tag) const {
  Rng child(0);
  child.key_ = mix(key_ ^ mix(tag + 0x243f6a8885a308d3ULL));
  return child;
}

Rng Rng::split(std::string_view tag) const {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return split(h);
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this);
}

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(*this);
}

double Rng::gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(*this); }

}  // namespace bertplm

#include "adaptraj/numcore/rng.hpp"

#include <cmath>
#include <numbers>

namespace adaptraj::numcore {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ mix64(stream_ + 0x632BE59BD9B4E019ULL));
  const std::uint64_t c = counter_++;
  return mix64(key + mix64(c * 0xD1B54A32D192ED03ULL));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double RngStream::normal(double mean, double stddev) {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::child(std::uint64_t tag) const {
  return RngStream(seed_, mix64(stream_ ^ mix64(tag + 0x2545F4914F6CDD1DULL)));
}

}  // namespace adaptraj::numcore

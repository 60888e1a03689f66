#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace adaptraj::numcore {

/// Counter-based random stream. Draw i of stream (seed, stream_id) is a pure
/// function of the triple, so streams are reproducible and independent
/// streams can be handed to separate workers without coordination.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  /// Box-Muller; consumes two uniforms per call (no cached spare).
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Deterministically derived child stream; does not advance this stream.
  RngStream child(std::uint64_t tag) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace adaptraj::numcore
